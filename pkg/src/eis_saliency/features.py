"""Per-superpixel (30-d), per-region (81-d) and whole-image (512-d) features."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .imaging import ValidationError, check_rgb, color_stack, rgb_to_hsv
from .slic import SuperpixelLayer

SUPERPIXEL_DIM = 30
REGION_DIM = 81
DESCRIPTOR_DIM = 512
DESCRIPTOR_VERSION = "huegrad-512-v1"
REGION_LAYOUT_VERSION = "region81-v1"
BORDER_WIDTH = 15
HIST_BINS = 4

# channel ranges for the 4-bin histograms: RGB, Lab, HSV
_CHANNEL_RANGES = np.array([
    [0, 1], [0, 1], [0, 1],
    [0, 100], [-128, 128], [-128, 128],
    [0, 1], [0, 1], [0, 1],
], dtype=np.float64)


# ---------------------------------------------------------------------------
# filter bank

def _gauss1d(x, sigma, order):
    g = np.exp(-x * x / (2 * sigma * sigma))
    if order == 1:
        g = -x / sigma ** 2 * g
    elif order == 2:
        g = (x * x - sigma ** 2) / sigma ** 4 * g
    return g


def _zero_sum_l1(k: np.ndarray) -> np.ndarray:
    k = k - k.mean()
    return k / np.abs(k).sum()


def make_filter_bank(scales=(1.0, 2.0), orientations=3, elongation=3.0) -> list[np.ndarray]:
    """15 kernels: oriented 1st/2nd Gaussian derivatives (3 orientations x 2 scales each),
    two LoG and one Gaussian."""
    bank = []
    for order in (1, 2):
        for sigma in scales:
            half = int(np.ceil(3 * elongation * sigma))
            y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
            for i in range(orientations):
                theta = np.pi * i / orientations
                u = x * np.cos(theta) + y * np.sin(theta)
                v = -x * np.sin(theta) + y * np.cos(theta)
                k = _gauss1d(u, sigma, order) * _gauss1d(v, elongation * sigma, 0)
                bank.append(_zero_sum_l1(k))
    for sigma in (1.5, 3.0):
        half = int(np.ceil(3 * sigma))
        y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
        r2 = x * x + y * y
        k = (r2 - 2 * sigma ** 2) * np.exp(-r2 / (2 * sigma ** 2))
        bank.append(_zero_sum_l1(k))
    half = 6
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    g = np.exp(-(x * x + y * y) / (2 * 2.0 ** 2))
    bank.append(g / g.sum())
    return bank


FILTER_BANK = make_filter_bank()


def filter_responses(image: np.ndarray, bank=None) -> np.ndarray:
    """(H, W, len(bank)) absolute responses on the gray image."""
    bank = FILTER_BANK if bank is None else bank
    gray = image.astype(np.float64).mean(axis=2) / 255.0
    out = np.empty(gray.shape + (len(bank),))
    for i, k in enumerate(bank):
        p = k.shape[0] // 2
        padded = np.pad(gray, p, mode="reflect")
        out[..., i] = np.abs(fftconvolve(padded, k, mode="same")[p:-p, p:-p])
    return out


# ---------------------------------------------------------------------------
# per-pixel planes shared by the superpixel and region features

class PixelPlanes:
    """Per-pixel colors (9), |filter| responses (15) and coordinates for one image."""

    def __init__(self, image: np.ndarray, bank=None):
        check_rgb(image)
        self.image = image
        self.height, self.width = image.shape[:2]
        self.colors = color_stack(image).reshape(-1, 9)
        self.filters = filter_responses(image, bank).reshape(self.height * self.width, -1)
        yy, xx = np.mgrid[0:self.height, 0:self.width]
        self.xs = xx.ravel().astype(np.float64)
        self.ys = yy.ravel().astype(np.float64)

    @cached_property
    def values(self) -> np.ndarray:
        """(npix, 24) colors followed by filter responses."""
        return np.concatenate([self.colors, self.filters], axis=1)

    @cached_property
    def bins(self) -> np.ndarray:
        """(npix, 9) histogram bin index per channel."""
        lo, hi = _CHANNEL_RANGES[:, 0], _CHANNEL_RANGES[:, 1]
        b = np.floor((self.colors - lo) / (hi - lo) * HIST_BINS).astype(np.int64)
        return np.clip(b, 0, HIST_BINS - 1)

    @cached_property
    def bin_onehot(self) -> np.ndarray:
        """(npix, 9 * HIST_BINS) channel-major one-hot histogram indicators."""
        n = len(self.bins)
        out = np.zeros((n, 9 * HIST_BINS))
        cols = self.bins + np.arange(9) * HIST_BINS
        out[np.arange(n)[:, None], cols] = 1.0
        return out


def standardize_columns(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    const = std <= 1e-9 * np.maximum(1.0, np.abs(mean))
    out = np.zeros_like(x)
    keep = ~const
    out[:, keep] = (x[:, keep] - mean[keep]) / std[keep]
    return out


def superpixel_features(image: np.ndarray, layer: SuperpixelLayer, bank=None,
                        planes: PixelPlanes | None = None) -> np.ndarray:
    """(n, 30) column-standardized matrix: mean RGB, Lab, HSV, |filter| (15),
    centroid and bounding box normalized by the image size."""
    planes = planes if planes is not None else PixelPlanes(image, bank)
    if layer.labels.shape != (planes.height, planes.width):
        raise ValidationError("superpixel layer does not match image dimensions")
    lab = layer.labels.ravel()
    n = layer.n
    counts = np.bincount(lab, minlength=n).astype(np.float64)
    vals = planes.values
    means = np.stack([np.bincount(lab, weights=vals[:, j], minlength=n) for j in range(vals.shape[1])],
                     axis=1) / counts[:, None]
    w, h = planes.width, planes.height
    cx = np.bincount(lab, weights=planes.xs, minlength=n) / counts
    cy = np.bincount(lab, weights=planes.ys, minlength=n) / counts
    x_min = np.full(n, np.inf)
    y_min = np.full(n, np.inf)
    x_max = np.full(n, -np.inf)
    y_max = np.full(n, -np.inf)
    np.minimum.at(x_min, lab, planes.xs)
    np.minimum.at(y_min, lab, planes.ys)
    np.maximum.at(x_max, lab, planes.xs)
    np.maximum.at(y_max, lab, planes.ys)
    coords = np.stack([cx / w, cy / h, x_min / w, y_min / h, x_max / w, y_max / h], axis=1)
    return standardize_columns(np.concatenate([means, coords], axis=1))


# ---------------------------------------------------------------------------
# regions

def border_mask(image_or_shape, width: int = BORDER_WIDTH) -> np.ndarray:
    """Pixels within ``width`` px of an image edge."""
    h, w = image_or_shape.shape[:2] if hasattr(image_or_shape, "shape") else image_or_shape
    if min(h, w) <= 2 * width:
        raise ValidationError(f"image {w}x{h} too small for a {width}px border")
    m = np.ones((h, w), dtype=bool)
    m[width:h - width, width:w - width] = False
    return m


def _perimeter(masks: np.ndarray) -> np.ndarray:
    """Count of mask pixels with a 4-neighbour outside the mask (image edge counts as outside)."""
    p = np.pad(masks, ((0, 0), (1, 1), (1, 1)), constant_values=False)
    inner = p[:, 1:-1, 1:-1]
    interior = inner & p[:, :-2, 1:-1] & p[:, 2:, 1:-1] & p[:, 1:-1, :-2] & p[:, 1:-1, 2:]
    return (inner & ~interior).reshape(len(masks), -1).sum(axis=1).astype(np.float64)


def _chi2_terms(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    d = (a - b) ** 2
    return np.divide(0.5 * d, s, out=np.zeros_like(d), where=s > 0)


def region_features_batch(image: np.ndarray, masks: np.ndarray, border: np.ndarray,
                          planes: PixelPlanes | None = None, chunk: int = 128) -> np.ndarray:
    """(P, 81) features for a stack of (P, H, W) region masks against one border mask."""
    planes = planes if planes is not None else PixelPlanes(image)
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    border = np.asarray(border, dtype=bool)
    h, w = planes.height, planes.width
    if masks.shape[1:] != (h, w) or border.shape != (h, w):
        raise ValidationError("region/border mask does not match image dimensions")
    if not border.any():
        raise ValidationError("empty border region")
    areas = masks.reshape(len(masks), -1).sum(axis=1)
    if (areas == 0).any():
        raise ValidationError("empty region")

    bflat = border.ravel()
    b_vals = planes.values[bflat].mean(axis=0)
    b_colors = b_vals[:9]
    b_filters = b_vals[9:]
    b_hist = planes.bin_onehot[bflat].mean(axis=0).reshape(9, HIST_BINS)
    b_sig = b_hist.reshape(3, 3, HIST_BINS).mean(axis=1)  # pooled per space
    absdev = np.abs(planes.colors - b_colors)
    coords = np.stack([planes.xs, planes.ys], axis=1)
    # everything that is a masked mean shares one matmul
    stacked = np.concatenate([planes.values, planes.bin_onehot, absdev, coords], axis=1)

    out = np.empty((len(masks), REGION_DIM))
    for s in range(0, len(masks), chunk):
        m = masks[s:s + chunk]
        flat = m.reshape(len(m), -1).astype(np.float64)
        area = flat.sum(axis=1)
        means = flat @ stacked / area[:, None]
        vals = means[:, :24]
        hist = means[:, 24:24 + 9 * HIST_BINS].reshape(len(m), 9, HIST_BINS)
        dev = means[:, 24 + 9 * HIST_BINS:24 + 9 * HIST_BINS + 9]
        cx, cy = means[:, -2], means[:, -1]

        rows = m.any(axis=2)
        cols = m.any(axis=1)
        y_min = rows.argmax(axis=1).astype(np.float64)
        y_max = h - 1 - rows[:, ::-1].argmax(axis=1).astype(np.float64)
        x_min = cols.argmax(axis=1).astype(np.float64)
        x_max = w - 1 - cols[:, ::-1].argmax(axis=1).astype(np.float64)

        base = np.concatenate([
            vals,
            np.stack([cx / w, cy / h, x_min / w, y_min / h, x_max / w, y_max / h], axis=1),
        ], axis=1)
        sig = hist.reshape(len(m), 3, 3, HIST_BINS).mean(axis=2)
        chi = _chi2_terms(sig, b_sig[None]).reshape(len(m), 3 * HIST_BINS)
        mean_dist = np.abs(vals[:, :9] - b_colors)
        filt = vals[:, 9:] - b_filters
        perim = _perimeter(m)
        shape = np.stack([(x_max - x_min + 1) / w, (y_max - y_min + 1) / h, perim ** 2 / area], axis=1)
        offset = np.stack([(cx - (w - 1) / 2) / w, (cy - (h - 1) / 2) / h], axis=1)
        out[s:s + chunk] = np.concatenate([
            base, (area / (h * w))[:, None], chi, mean_dist, dev, filt, shape, offset,
        ], axis=1)
    return out


def region_features(image: np.ndarray, region: np.ndarray, border: np.ndarray,
                    planes: PixelPlanes | None = None) -> np.ndarray:
    """81-d vector for one region. Layout (frozen as ``REGION_LAYOUT_VERSION``):

    ====  =====================================================================
    0-29  mean RGB, Lab, HSV, |filter| x15, centroid + bbox (normalized)
    30    area fraction
    31-42 per-bin chi-square terms, channel-pooled 4-bin signatures, RGB/Lab/HSV
    43-51 |mean_region - mean_border| per channel
    52-60 mean over region pixels of |x - mean_border| per channel
    61-75 mean |filter| region minus border
    76-78 bbox width fraction, bbox height fraction, perimeter^2 / area
    79-80 centroid offset from the image center (x, y), normalized
    ====  =====================================================================
    """
    return region_features_batch(image, region[None], border, planes)[0]


# ---------------------------------------------------------------------------
# global descriptor

@dataclass(frozen=True)
class ImageDescriptor:
    vector: np.ndarray  # float32, unit L2 norm
    version: str = DESCRIPTOR_VERSION

    def __post_init__(self):
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=np.float32))


def _cells(h, w, n):
    ys = np.linspace(0, h, n + 1).round().astype(int)
    xs = np.linspace(0, w, n + 1).round().astype(int)
    return [(slice(ys[i], ys[i + 1]), slice(xs[j], xs[j + 1])) for i in range(n) for j in range(n)]


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def image_descriptor(image: np.ndarray) -> ImageDescriptor:
    """512-d descriptor: 2x2 cells of (32 saturation-weighted hue bins + 32
    (1 - saturation)-weighted value bins), then 4x4 cells of unsigned gradient
    orientation histograms (8 bins x 2 scales). Each half is L2-normalized
    before the final normalization."""
    check_rgb(image)
    h, w = image.shape[:2]
    hsv = rgb_to_hsv(image)
    hue_bin = np.minimum((hsv[..., 0] * 32).astype(int), 31)
    val_bin = np.minimum((hsv[..., 2] * 32).astype(int), 31)
    sat = hsv[..., 1]
    color = []
    for cell in _cells(h, w, 2):
        npx = hue_bin[cell].size
        color.append(np.bincount(hue_bin[cell].ravel(), weights=sat[cell].ravel(), minlength=32) / npx)
        color.append(np.bincount(val_bin[cell].ravel(), weights=1 - sat[cell].ravel(), minlength=32) / npx)
    color = _unit(np.concatenate(color))

    gray = image.astype(np.float64).mean(axis=2) / 255.0
    grad = []
    per_scale = []
    for sigma in (1.0, 2.0):
        gx = ndimage.gaussian_filter(gray, sigma, order=(0, 1), mode="reflect")
        gy = ndimage.gaussian_filter(gray, sigma, order=(1, 0), mode="reflect")
        mag = np.hypot(gx, gy)
        ori = np.mod(np.arctan2(gy, gx), np.pi)
        obin = np.minimum((ori / np.pi * 8).astype(int), 7)
        per_scale.append((mag, obin))
    for cell in _cells(h, w, 4):
        for mag, obin in per_scale:
            grad.append(np.bincount(obin[cell].ravel(), weights=mag[cell].ravel(), minlength=8)
                        / obin[cell].size)
    grad = _unit(np.concatenate(grad))
    return ImageDescriptor(_unit(np.concatenate([color, grad])))


# ---------------------------------------------------------------------------
# SFv1 binary matrices

SF_MAGIC = b"SFv1"


def write_matrix(path, matrix: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype="<f4"))
    with open(path, "wb") as fh:
        fh.write(SF_MAGIC)
        fh.write(struct.pack("<II", *m.shape))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SF_MAGIC:
        raise ValidationError(f"{path}: bad magic {data[:4]!r}")
    rows, cols = struct.unpack("<II", data[4:12])
    payload = data[12:]
    if len(payload) != rows * cols * 4:
        raise ValidationError(f"{path}: payload size mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
