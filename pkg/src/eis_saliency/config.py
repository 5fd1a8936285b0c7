"""Pipeline tunables and the flat ``key = value`` config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from . import classifier, features, fusion, internal, proposals, retrieval, slic
from .imaging import ValidationError


@dataclass(frozen=True)
class PipelineConfig:
    layer_counts: tuple[int, ...] = slic.LAYER_COUNTS
    compactness: float = slic.COMPACTNESS
    alpha: float = internal.ALPHA
    beta: float = internal.BETA
    epsilon: float = internal.EPSILON
    sigma2: float = internal.SIGMA2
    kappa: float = internal.KAPPA
    layer_weights: tuple[float, ...] | None = None
    n_windows: int = internal.N_WINDOWS
    tau: float = proposals.TAU
    n_select: int = proposals.N_SELECT
    sigma_x: float | None = None   # None: width / 3
    sigma_y: float | None = None   # None: height / 3
    top_k: int = retrieval.TOP_K
    pos_iou: float = retrieval.POS_IOU
    neg_iou: float = retrieval.NEG_IOU
    svm_c: float = classifier.C_DEFAULT
    clamp_scores: bool = True
    gamma: float = fusion.GAMMA
    descriptor_version: str = features.DESCRIPTOR_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (len(self.layer_counts) >= 1 and all(c > 0 for c in self.layer_counts), "layer_counts"),
            (self.compactness > 0, "compactness"),
            (self.alpha >= 0, "alpha"),
            (self.beta > 0, "beta"),
            (self.epsilon > 0, "epsilon"),
            (self.sigma2 > 0, "sigma2"),
            (self.kappa > 0, "kappa"),
            (self.layer_weights is None or len(self.layer_weights) == len(self.layer_counts),
             "layer_weights"),
            (self.n_windows > 0, "n_windows"),
            (self.tau > 0, "tau"),
            (self.n_select > 0, "n_select"),
            (self.sigma_x is None or self.sigma_x > 0, "sigma_x"),
            (self.sigma_y is None or self.sigma_y > 0, "sigma_y"),
            (self.top_k > 0, "top_k"),
            (0 <= self.neg_iou < self.pos_iou <= 1, "pos_iou/neg_iou"),
            (self.svm_c > 0, "svm_c"),
            (0 <= self.gamma <= 1, "gamma"),
        ]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise ValidationError(f"invalid config values: {', '.join(bad)}")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def internal_kwargs(self) -> dict:
        return dict(counts=self.layer_counts, compactness=self.compactness, alpha=self.alpha,
                    beta=self.beta, eps=self.epsilon, sigma2=self.sigma2, kappa=self.kappa,
                    layer_weights=self.layer_weights, n_windows=self.n_windows)


def _parse_value(name: str, raw: str, default):
    raw = raw.strip()
    field_type = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}[name]
    if raw.lower() == "none" and "None" in str(field_type):
        return None
    if "tuple[int" in str(field_type):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if "tuple[float" in str(field_type):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValidationError(f"{name}: expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, str):
        return raw
    return float(raw)


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in names:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, value, getattr(base, key))
        except ValueError as exc:
            raise ValidationError(f"config line {lineno}: {exc}") from None
    return dataclasses.replace(base, **changes)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}\n")
    return "".join(lines)
