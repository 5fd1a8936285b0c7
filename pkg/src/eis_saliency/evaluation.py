"""Precision-recall curves, adaptive-threshold F-measure and PR AUC."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .imaging import ValidationError, quantize_map

UPSILON2 = 0.3
N_THRESHOLDS = 256


@dataclass(frozen=True)
class PRCurve:
    precision: np.ndarray  # index t: binarize at quantized value > t
    recall: np.ndarray


def _check(saliency: np.ndarray, gt: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt).astype(bool)
    if saliency.shape != gt.shape:
        raise ValidationError(f"map {saliency.shape} and ground truth {gt.shape} differ")
    if not gt.any():
        raise ValidationError("empty ground truth")
    return gt


def pr_curve(saliency: np.ndarray, gt: np.ndarray) -> PRCurve:
    gt = _check(saliency, gt)
    q = quantize_map(saliency).ravel()
    g = gt.ravel()
    fg = np.bincount(q[g], minlength=256)
    bg = np.bincount(q[~g], minlength=256)
    # predictions at threshold t are the pixels with value > t
    tp = np.concatenate([np.cumsum(fg[::-1])[::-1][1:], [0]]).astype(np.float64)
    fp = np.concatenate([np.cumsum(bg[::-1])[::-1][1:], [0]]).astype(np.float64)
    pred = tp + fp
    precision = np.divide(tp, pred, out=np.ones_like(tp), where=pred > 0)
    recall = tp / g.sum()
    return PRCurve(precision, recall)


def f_beta(precision: float, recall: float, upsilon2: float = UPSILON2) -> float:
    den = upsilon2 * precision + recall
    return (1 + upsilon2) * precision * recall / den if den > 0 else 0.0


def adaptive_threshold(saliency: np.ndarray) -> float:
    """Twice the mean, capped just below the maximum so the prediction is
    nonempty whenever the map is not identically zero."""
    top = float(saliency.max())
    return min(2.0 * float(saliency.mean()), top - 1e-9 * max(top, 1e-300))


def adaptive_scores(saliency: np.ndarray, gt: np.ndarray, upsilon2: float = UPSILON2
                    ) -> tuple[float, float, float]:
    """(precision, recall, F) after binarizing at the adaptive threshold."""
    gt = _check(saliency, gt)
    pred = saliency > adaptive_threshold(saliency) if saliency.max() > 0 else np.zeros_like(gt)
    tp = float(np.count_nonzero(pred & gt))
    n_pred = float(np.count_nonzero(pred))
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / float(gt.sum())
    return precision, recall, f_beta(precision, recall, upsilon2)


def f_measure(saliency: np.ndarray, gt: np.ndarray, upsilon2: float = UPSILON2) -> float:
    return adaptive_scores(saliency, gt, upsilon2)[2]


def auc(curve: PRCurve) -> float:
    """Trapezoidal area under precision as a function of recall."""
    r = np.asarray(curve.recall, dtype=np.float64)
    p = np.asarray(curve.precision, dtype=np.float64)
    order = np.lexsort((p, r))
    r, p = r[order], p[order]
    area = float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0)) if len(r) > 1 else 0.0
    return float(np.clip(area, 0.0, 1.0))


# ---------------------------------------------------------------------------
# reports

@dataclass
class ImageScore:
    image_id: str
    precision: float
    recall: float
    f_measure: float
    auc: float
    curve: PRCurve = field(repr=False)


@dataclass
class ScoreReport:
    rows: list[ImageScore]
    excluded: list[str] = field(default_factory=list)

    def _mean(self, attr) -> float:
        return float(np.mean([getattr(r, attr) for r in self.rows])) if self.rows else float("nan")

    @property
    def precision(self) -> float:
        return self._mean("precision")

    @property
    def recall(self) -> float:
        return self._mean("recall")

    @property
    def f_measure(self) -> float:
        """Mean of the per-image F values."""
        return self._mean("f_measure")

    @property
    def f_of_means(self) -> float:
        """F computed from the mean precision and mean recall."""
        return f_beta(self.precision, self.recall)

    @property
    def auc(self) -> float:
        return self._mean("auc")

    def mean_curve(self) -> PRCurve:
        return PRCurve(np.mean([r.curve.precision for r in self.rows], axis=0),
                       np.mean([r.curve.recall for r in self.rows], axis=0))


def score_image(image_id: str, saliency: np.ndarray, gt: np.ndarray) -> ImageScore:
    p, r, f = adaptive_scores(saliency, gt)
    curve = pr_curve(saliency, gt)
    return ImageScore(image_id, p, r, f, auc(curve), curve)


def write_report(path, report: ScoreReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "precision", "recall", "f_measure", "auc"])
        for r in report.rows:
            w.writerow([r.image_id] + [f"{v:.10f}" for v in (r.precision, r.recall, r.f_measure, r.auc)])
        if report.rows:
            w.writerow(["mean"] + [f"{v:.10f}" for v in
                                   (report.precision, report.recall, report.f_measure, report.auc)])


def read_report(path) -> dict[str, dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["image_id"]: {k: float(v) for k, v in row.items() if k != "image_id"}
                for row in csv.DictReader(fh)}


def write_curve(path, curve: PRCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t in range(len(curve.precision)):
            w.writerow([t, f"{curve.precision[t]:.10f}", f"{curve.recall[t]:.10f}"])
