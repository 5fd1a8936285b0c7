"""Internal saliency: objectness prior, discriminative-clustering and Laplacian
terms, the per-layer quadratic solve, and the multi-layer average."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, squareform

from .features import PixelPlanes, superpixel_features
from .imaging import ValidationError, check_rgb, normalize_map, rgb_to_lab
from .slic import COMPACTNESS, LAYER_COUNTS, SuperpixelLayer, build_layers

KAPPA = 0.01
ALPHA = 1.0
BETA = 1.0
EPSILON = 1e-4
SIGMA2 = 0.1
N_WINDOWS = 1000
OBJECTNESS_POWER = 1.0
OBJECTNESS_SEED = 20150601

# affinities are rounded up onto this dyadic grid so Laplacian row sums are exact
_W_GRID_BITS = 40


# ---------------------------------------------------------------------------
# objectness stand-in

def sample_windows(height: int, width: int, n: int = N_WINDOWS, seed: int = OBJECTNESS_SEED) -> np.ndarray:
    """(n, 4) integer windows ``x0, y0, x1, y1`` (exclusive ends), stratified over
    10 scale bands, from a fixed-seed generator."""
    rng = np.random.default_rng(seed)
    strata = 10
    per = int(np.ceil(n / strata))
    short = min(height, width)
    lo_frac, hi_frac = 0.1, 1.0
    out = []
    for s in range(strata):
        a = lo_frac + (hi_frac - lo_frac) * s / strata
        b = lo_frac + (hi_frac - lo_frac) * (s + 1) / strata
        scale = rng.uniform(a, b, per) * short
        aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0), per))
        ww = np.clip(np.round(scale * np.sqrt(aspect)), 4, width).astype(int)
        hh = np.clip(np.round(scale / np.sqrt(aspect)), 4, height).astype(int)
        x0 = np.floor(rng.uniform(0, 1, per) * (width - ww + 1)).astype(int)
        y0 = np.floor(rng.uniform(0, 1, per) * (height - hh + 1)).astype(int)
        out.append(np.stack([x0, y0, x0 + ww, y0 + hh], axis=1))
    return np.concatenate(out)[:n]


def _integral(a: np.ndarray) -> np.ndarray:
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1) + a.shape[2:])
    ii[1:, 1:] = a.cumsum(0).cumsum(1)
    return ii


def _box_sum(ii: np.ndarray, x0, y0, x1, y1) -> np.ndarray:
    return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]


def objectness_map(image: np.ndarray, n_windows: int = N_WINDOWS, seed: int = OBJECTNESS_SEED,
                   power: float = OBJECTNESS_POWER) -> np.ndarray:
    """Accumulate window scores over the pixels each window covers.

    A window scores (mean gradient magnitude on its own boundary ring) x
    (chi-square distance between the color histogram of its interior and of
    the ring just outside it), raised to ``power`` so that a few tight windows
    outweigh the many loose ones that merely overlap the object.
    """
    check_rgb(image)
    h, w = image.shape[:2]
    lab = rgb_to_lab(image)
    gy = np.zeros((h, w))
    gx = np.zeros((h, w))
    gy[1:-1] = ((lab[2:] - lab[:-2]) ** 2).sum(-1)
    gx[:, 1:-1] = ((lab[:, 2:] - lab[:, :-2]) ** 2).sum(-1)
    grad = np.sqrt(gx + gy) / 2.0
    g_ii = _integral(grad)

    q = (image // 64).astype(np.int64)
    joint = q[..., 0] * 16 + q[..., 1] * 4 + q[..., 2]
    onehot = np.zeros((h, w, 64))
    onehot[np.arange(h)[:, None], np.arange(w)[None, :], joint] = 1.0
    h_ii = _integral(onehot)

    win = sample_windows(h, w, n_windows, seed)
    x0, y0, x1, y1 = win.T
    ww, hh = x1 - x0, y1 - y0
    ring = np.maximum(1, np.round(0.1 * np.minimum(ww, hh))).astype(int)
    ix0, iy0 = x0 + ring, y0 + ring
    ix1, iy1 = np.maximum(x1 - ring, ix0), np.maximum(y1 - ring, iy0)
    outer_area = (ww * hh).astype(float)
    inner_area = ((ix1 - ix0) * (iy1 - iy0)).astype(float)
    edge = (_box_sum(g_ii, x0, y0, x1, y1) - _box_sum(g_ii, ix0, iy0, ix1, iy1))
    edge = edge / np.maximum(outer_area - inner_area, 1.0)

    margin = np.maximum(2, np.round(0.2 * np.minimum(ww, hh))).astype(int)
    sx0, sy0 = np.maximum(x0 - margin, 0), np.maximum(y0 - margin, 0)
    sx1, sy1 = np.minimum(x1 + margin, w), np.minimum(y1 + margin, h)
    inside = _box_sum(h_ii, x0, y0, x1, y1)
    around = _box_sum(h_ii, sx0, sy0, sx1, sy1) - inside
    n_in = inside.sum(1, keepdims=True)
    n_ar = around.sum(1, keepdims=True)
    p = inside / np.maximum(n_in, 1)
    r = around / np.maximum(n_ar, 1)
    s = p + r
    chi = 0.5 * np.divide((p - r) ** 2, s, out=np.zeros_like(s), where=s > 0).sum(1)
    chi[n_ar[:, 0] == 0] = 0.0
    score = (edge * chi) ** power

    acc = np.zeros((h + 1, w + 1))
    np.add.at(acc, (y0, x0), score)
    np.add.at(acc, (y0, x1), -score)
    np.add.at(acc, (y1, x0), -score)
    np.add.at(acc, (y1, x1), score)
    acc = acc.cumsum(0).cumsum(1)[:h, :w]
    # cumulative sums leave ~1e-16 residue on flat images
    acc[np.abs(acc) < 1e-12 * max(1.0, np.abs(acc).max())] = 0.0
    return normalize_map(acc)


# ---------------------------------------------------------------------------
# quadratic terms

def superpixel_prior(objectness: np.ndarray, layer: SuperpixelLayer) -> np.ndarray:
    if objectness.shape != layer.labels.shape:
        raise ValidationError("objectness map and superpixel layer differ in size")
    m = np.bincount(layer.labels.ravel(), weights=objectness.ravel(), minlength=layer.n)
    top = m.max()
    return m / top if top > 0 else np.zeros(layer.n)


def discriminability(x: np.ndarray, kappa: float = KAPPA) -> np.ndarray:
    """``U = (1/n) P (I - X (X^T P X + n kappa I)^-1 X^T) P`` with ``P`` the centering projector."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise ValidationError("discriminability needs at least two superpixels")
    xc = x - x.mean(axis=0)  # P X
    gram = xc.T @ xc + n * kappa * np.eye(d)
    proj = np.eye(n) - np.full((n, n), 1.0 / n)
    u = (proj - xc @ linalg.solve(gram, xc.T, assume_a="pos")) / n
    return (u + u.T) / 2


@dataclass(frozen=True)
class Affinity:
    w: np.ndarray
    degree: np.ndarray

    @property
    def laplacian(self) -> np.ndarray:
        return np.diag(self.degree) - self.w


def affinity(x: np.ndarray, sigma2: float = SIGMA2) -> Affinity:
    """``W_ij = exp(-||x_i - x_j|| / sigma2)`` (distance, not squared distance)."""
    if sigma2 <= 0:
        raise ValidationError("sigma^2 must be positive")
    x = np.asarray(x, dtype=np.float64)
    dist = squareform(pdist(x)) if len(x) > 1 else np.zeros((1, 1))
    w = np.exp(-dist / sigma2)
    w = np.ldexp(np.ceil(np.ldexp(w, _W_GRID_BITS)), -_W_GRID_BITS)
    return Affinity(w=w, degree=w.sum(axis=1))


@dataclass(frozen=True)
class LayerSolution:
    scores: np.ndarray
    saliency: np.ndarray | None = None


def system_matrix(u, aff: Affinity, alpha=ALPHA, eps=EPSILON) -> np.ndarray:
    n = len(u)
    return u + alpha * aff.laplacian + eps * np.eye(n)


def solve_layer(u: np.ndarray, aff: Affinity, m: np.ndarray, alpha: float = ALPHA,
                beta: float = BETA, eps: float = EPSILON) -> LayerSolution:
    """Minimizer of ``l^T (U + alpha L + eps I) l - beta l^T m``: ``l = (beta/2) A^-1 m``."""
    if alpha < 0 or beta <= 0 or eps <= 0:
        raise ValidationError("need alpha >= 0, beta > 0, eps > 0")
    m = np.asarray(m, dtype=np.float64)
    if not m.any():
        return LayerSolution(np.zeros_like(m))
    a = system_matrix(u, aff, alpha, eps)
    try:
        factor = linalg.cho_factor(a)
    except linalg.LinAlgError as exc:
        raise ValidationError(f"system matrix not positive definite: {exc}") from None
    rhs = 0.5 * beta * m
    ell = linalg.cho_solve(factor, rhs)
    # refinement with the residual in extended precision: with eps small the
    # solution is large and a float64 residual would cap the forward accuracy
    a_ext = a.astype(np.longdouble)
    rhs_ext = rhs.astype(np.longdouble)
    for _ in range(4):
        resid = (rhs_ext - a_ext @ ell.astype(np.longdouble)).astype(np.float64)
        step = linalg.cho_solve(factor, resid)
        ell = ell + step
        if np.abs(step).max() <= 1e-17 * np.abs(ell).max():
            break
    return LayerSolution(ell)


def paint(scores: np.ndarray, layer: SuperpixelLayer) -> np.ndarray:
    return normalize_map(scores)[layer.labels]


# ---------------------------------------------------------------------------
# full internal branch

@dataclass
class InternalResult:
    saliency: np.ndarray
    layer_maps: list[np.ndarray]
    objectness: np.ndarray
    layers: list[SuperpixelLayer]
    planes: PixelPlanes = field(repr=False)


def run_internal(image: np.ndarray, *, counts=LAYER_COUNTS, compactness=COMPACTNESS,
                 alpha=ALPHA, beta=BETA, eps=EPSILON, sigma2=SIGMA2, kappa=KAPPA,
                 layer_weights=None, n_windows=N_WINDOWS, objectness: np.ndarray | None = None,
                 layers: list[SuperpixelLayer] | None = None,
                 planes: PixelPlanes | None = None) -> InternalResult:
    check_rgb(image)
    planes = planes if planes is not None else PixelPlanes(image)
    layers = layers if layers is not None else build_layers(image, counts, compactness)
    obj = objectness_map(image, n_windows) if objectness is None else normalize_map(objectness)
    if obj.shape != image.shape[:2]:
        raise ValidationError("objectness map does not match image dimensions")
    weights = np.ones(len(layers)) if layer_weights is None else np.asarray(layer_weights, float)
    maps = []
    for layer in layers:
        m = superpixel_prior(obj, layer)
        if layer.n < 2:
            maps.append(np.zeros(image.shape[:2]))
            continue
        x = superpixel_features(image, layer, planes=planes)
        sol = solve_layer(discriminability(x, kappa), affinity(x, sigma2), m, alpha, beta, eps)
        maps.append(paint(sol.scores, layer))
    fused = sum(wk * mk for wk, mk in zip(weights, maps)) / len(maps)
    return InternalResult(normalize_map(fused), maps, obj, layers, planes)


def internal_map(image: np.ndarray, **kwargs) -> np.ndarray:
    return run_internal(image, **kwargs).saliency
