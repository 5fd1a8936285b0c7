"""Raster/mask/map helpers, color conversion and dataset ingestion.

Images are plain numpy arrays:

* RGB8 raster: ``(H, W, 3)`` uint8
* Gray8 raster / binary mask: ``(H, W)`` uint8 (masks hold only 0/1)
* GrayF32 raster / saliency map: ``(H, W)`` float

Everything downstream assumes H, W >= 16.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import color as skcolor

MIN_SIDE = 16
MASK_THRESHOLD = 128


class ValidationError(ValueError):
    """Raised for malformed inputs (bad files, mismatched shapes, bad boxes)."""


@dataclass(frozen=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def validate(self, width: int, height: int) -> None:
        if not (0 <= self.x_min <= self.x_max < width and 0 <= self.y_min <= self.y_max < height):
            raise ValidationError(f"box {self} invalid for {width}x{height} image")

    def to_mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.y_min:self.y_max + 1, self.x_min:self.x_max + 1] = True
        return m

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)


@dataclass(frozen=True)
class LabeledImage:
    id: str
    image: np.ndarray
    ground_truth_mask: np.ndarray | None = None
    boxes: tuple[BoundingBox, ...] = field(default_factory=tuple)

    def __post_init__(self):
        check_rgb(self.image)
        h, w = self.image.shape[:2]
        if self.ground_truth_mask is not None:
            if self.ground_truth_mask.shape != (h, w):
                raise ValidationError(
                    f"{self.id}: mask {self.ground_truth_mask.shape[::-1]} does not match image {w}x{h}")
            check_mask(self.ground_truth_mask)
        for b in self.boxes:
            b.validate(w, h)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]


def check_rgb(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValidationError(f"expected (H, W, 3) uint8 image, got {image.shape} {image.dtype}")
    if min(image.shape[:2]) < MIN_SIDE:
        raise ValidationError(f"image {image.shape[1]}x{image.shape[0]} below {MIN_SIDE}px minimum")
    return image


def check_mask(mask: np.ndarray) -> np.ndarray:
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool and not np.isin(mask, (0, 1)).all():
        raise ValidationError("mask values must be 0 or 1")
    return mask


# ---------------------------------------------------------------------------
# color spaces (D65, sRGB linearization via skimage)

def rgb_float(image: np.ndarray) -> np.ndarray:
    return image.astype(np.float64) / 255.0


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """CIELAB under D65/2deg. L in [0, 100], a/b roughly in [-128, 127]."""
    return skcolor.rgb2lab(rgb_float(image), illuminant="D65", observer="2")


def rgb_to_hsv(image: np.ndarray) -> np.ndarray:
    """HSV with all three channels in [0, 1]."""
    return skcolor.rgb2hsv(rgb_float(image))


def color_stack(image: np.ndarray) -> np.ndarray:
    """(H, W, 9) array: RGB in [0,1], Lab, HSV."""
    return np.concatenate([rgb_float(image), rgb_to_lab(image), rgb_to_hsv(image)], axis=2)


# ---------------------------------------------------------------------------
# maps

def normalize_map(values: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]. Constant input maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValidationError("saliency map contains non-finite values")
    lo = values.min()
    hi = values.max()
    if hi <= lo:
        return np.zeros_like(values)
    out = (values - lo) / (hi - lo)
    # pin the extremes so that normalize(normalize(m)) == normalize(m) exactly
    out[values == lo] = 0.0
    out[values == hi] = 1.0
    return out


def quantize_map(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_map(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write ``<path>.png`` (8-bit preview) and ``<path>.npy`` (float32 sidecar)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize_map(values), mode="L").save(path.with_suffix(".png"))
    np.save(path.with_suffix(".npy"), np.asarray(values, dtype=np.float32))


def load_map(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    sidecar = path.with_suffix(".npy")
    if sidecar.exists():
        return np.load(sidecar).astype(np.float64)
    png = path.with_suffix(".png")
    if png.exists():
        return np.asarray(Image.open(png).convert("L"), dtype=np.float64) / 255.0
    raise FileNotFoundError(f"no map at {path} (.npy or .png)")


# ---------------------------------------------------------------------------
# file IO

def read_image(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path: str | os.PathLike, image: np.ndarray) -> None:
    Image.fromarray(image).save(path)


def read_mask(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    with Image.open(path) as im:
        gray = np.asarray(im.convert("L"))
    return (gray >= MASK_THRESHOLD).astype(np.uint8)


def write_mask(path: str | os.PathLike, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)


def parse_boxes(text: str, source: str = "<boxes>") -> list[BoundingBox]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise ValidationError(f"{source}:{lineno}: malformed box line {line!r}") from None
        if len(vals) != 4 or min(vals) < 0:
            raise ValidationError(f"{source}:{lineno}: malformed box line {line!r}")
        box = BoundingBox(*vals)
        if box.x_min > box.x_max or box.y_min > box.y_max:
            raise ValidationError(f"{source}:{lineno}: malformed box line {line!r} (min > max)")
        boxes.append(box)
    return boxes


def read_boxes(path: str | os.PathLike) -> list[BoundingBox]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    return parse_boxes(path.read_text(encoding="utf-8"), str(path))


def write_boxes(path: str | os.PathLike, boxes) -> None:
    lines = [f"{b.x_min} {b.y_min} {b.x_max} {b.y_max}\n" for b in boxes]
    Path(path).write_text("".join(lines), encoding="utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path
    mask_path: Path | None
    box_path: Path | None


def read_manifest(manifest: str | os.PathLike, root: str | os.PathLike | None = None) -> list[ManifestEntry]:
    """Parse ``<id>\\t<image>\\t[mask]\\t[boxes]`` lines; relative paths resolve against ``root``."""
    manifest = Path(manifest)
    if not manifest.exists():
        raise ValidationError(f"missing file: {manifest}")
    root = Path(root) if root is not None else manifest.parent
    entries = []
    seen = set()
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2 or len(parts) > 4 or not parts[0] or not parts[1]:
            raise ValidationError(f"{manifest}:{lineno}: expected 2-4 tab-separated fields")
        image_id = parts[0]
        if image_id in seen:
            raise ValidationError(f"{manifest}:{lineno}: duplicate id {image_id!r}")
        seen.add(image_id)
        opt = [p if p else None for p in parts[2:]] + [None] * (4 - len(parts))
        entries.append(ManifestEntry(
            id=image_id,
            image_path=root / parts[1],
            mask_path=root / opt[0] if opt[0] else None,
            box_path=root / opt[1] if opt[1] else None,
        ))
    return entries


def write_manifest(path: str | os.PathLike, rows) -> None:
    """``rows``: iterables of (id, image, mask-or-None, boxes-or-None) relative paths."""
    lines = []
    for image_id, image, mask, boxes in rows:
        fields = [image_id, str(image), str(mask) if mask else "", str(boxes) if boxes else ""]
        while fields and not fields[-1]:
            fields.pop()
        lines.append("\t".join(fields) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_entry(entry: ManifestEntry) -> LabeledImage:
    image = check_rgb(read_image(entry.image_path))
    mask = read_mask(entry.mask_path) if entry.mask_path else None
    boxes = tuple(read_boxes(entry.box_path)) if entry.box_path else ()
    try:
        return LabeledImage(id=entry.id, image=image, ground_truth_mask=mask, boxes=boxes)
    except ValidationError as exc:
        raise ValidationError(f"{entry.id}: {exc}") from None


def load_dataset(root: str | os.PathLike, manifest: str | os.PathLike) -> list[LabeledImage]:
    return [load_entry(e) for e in read_manifest(manifest, root)]
