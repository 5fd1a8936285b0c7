"""Per-image linear SVM over regional features and the external saliency map."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import ValidationError, normalize_map
from .proposals import mask_digest

C_DEFAULT = 1.0
MAX_EPOCHS = 10_000
GAP_TOL = 1e-6


class SingleClassError(ValidationError):
    """Training data holds only one label."""


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray       # in standardized feature space
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    C: float = C_DEFAULT
    n_pos: int = 0
    n_neg: int = 0
    epochs: int = 0
    duality_gap: float = np.inf
    history: list = field(default_factory=list, repr=False, compare=False)
    # training range per feature; inputs are clipped into it before scoring
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.lower is not None:
            x = np.clip(x, self.lower, self.upper)
        z = (x - self.mean) / self.scale
        return z @ self.weights + self.bias

    def raw_coefficients(self) -> tuple[np.ndarray, float]:
        """Weights and bias acting directly on unstandardized features."""
        w = self.weights / self.scale
        return w, float(self.bias - w @ self.mean)


def optimal_bias(margins: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """``argmin_b sum max(0, 1 - y (s + b))`` and the minimum, exactly (piecewise linear)."""
    t = y - margins  # breakpoint of each hinge term
    pos = np.sort(t[y > 0])
    neg = np.sort(t[y < 0])
    pos_suffix = np.concatenate([np.cumsum(pos[::-1])[::-1], [0.0]])
    neg_prefix = np.concatenate([[0.0], np.cumsum(neg)])
    cand = np.sort(t)
    # positives active for t_i > b, negatives for t_i < b
    ip = np.searchsorted(pos, cand, side="right")
    ineg = np.searchsorted(neg, cand, side="left")
    loss = (pos_suffix[ip] - (len(pos) - ip) * cand) + (ineg * cand - neg_prefix[ineg])
    k = int(np.argmin(loss))
    return float(cand[k]), float(loss[k])


def primal_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, C: float) -> float:
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - y * (x @ w + b)).sum())


def _standardize(x):
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 1.0
    return mean, scale


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [(float(lbl), row.tobytes()) for row, lbl in zip(x, y)]
    return np.array(sorted(range(len(y)), key=keys.__getitem__), dtype=np.int64)


def _smo(x: np.ndarray, y: np.ndarray, C: float, max_epochs: int, tol: float):
    """Dual SVM with unregularized bias; maximal-violating-pair working sets with
    second-order choice of the partner. An epoch is ``n`` pair updates.

    Returns the epoch-end iterate with the lowest primal objective; the dual
    objective itself increases monotonically.
    """
    n = len(y)
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    grad = -np.ones(n)              # Q alpha - 1
    gram = x @ x.T
    kdiag = gram.diagonal().copy()
    history = []
    best = (np.inf, w.copy(), 0.0)
    gap = np.inf
    epoch = 0
    while epoch < max_epochs:
        epoch += 1
        converged = False
        for _ in range(n):
            viol = -y * grad
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
            if not up.any() or not low.any():
                converged = True
                break
            i = int(np.flatnonzero(up)[np.argmax(viol[up])])
            m_up = viol[i]
            if m_up - viol[low].min() < 1e-12:
                converged = True
                break
            idx = np.flatnonzero(low & (viol < m_up))
            a = np.maximum(kdiag[i] + kdiag[idx] - 2 * gram[i, idx], 1e-12)
            bdiff = m_up - viol[idx]
            k = int(np.argmax(bdiff * bdiff / a))
            j = int(idx[k])
            lam = bdiff[k] / a[k]
            lam = min(lam, C - alpha[i] if y[i] > 0 else alpha[i])
            lam = min(lam, alpha[j] if y[j] > 0 else C - alpha[j])
            if lam <= 0:
                converged = True
                break
            alpha[i] += y[i] * lam
            alpha[j] -= y[j] * lam
            for t in (i, j):
                if alpha[t] < 1e-14 * C:
                    alpha[t] = 0.0
                elif alpha[t] > C * (1 - 1e-14):
                    alpha[t] = C
            w += lam * (x[i] - x[j])
            grad += lam * y * (gram[:, i] - gram[:, j])
        b, hinge = optimal_bias(x @ w, y)
        primal = 0.5 * float(w @ w) + C * hinge
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        if primal < best[0]:
            best = (primal, w.copy(), b)
        gap = best[0] - dual
        history.append((best[0], dual))
        if gap < tol or converged:
            break
    return best[1], best[2], epoch, gap, history


def train(samples, C: float = C_DEFAULT, max_epochs: int = MAX_EPOCHS, tol: float = GAP_TOL
          ) -> LinearModel:
    """L2-regularized hinge-loss linear SVM on standardized features.

    ``samples`` is either a sequence of ``(features, label)`` pairs or an
    ``(X, y)`` tuple of arrays. Labels are +1/-1. Training runs over a
    canonical ordering of the samples, so the input order does not matter.
    """
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        x, y = samples
    else:
        samples = list(samples)
        if not samples:
            raise SingleClassError("no training samples")
        x = np.stack([np.asarray(s[0], dtype=np.float64) for s in samples])
        y = np.array([s[1] for s in samples], dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if C <= 0:
        raise ValidationError("C must be positive")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValidationError("labels must be +1 or -1")
    n_pos, n_neg = int((y > 0).sum()), int((y < 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(f"training set has {n_pos} positive and {n_neg} negative samples")
    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    mean, scale = _standardize(x)
    w, b, epochs, gap, history = _smo((x - mean) / scale, y, C, max_epochs, tol)
    return LinearModel(weights=w, bias=b, mean=mean, scale=scale, C=C, n_pos=n_pos, n_neg=n_neg,
                       epochs=epochs, duality_gap=gap, history=history,
                       lower=x.min(axis=0), upper=x.max(axis=0))


def predict(model: LinearModel, features) -> np.ndarray | float:
    """Decision value ``w . z + b`` with the model's stored standardization.
    Features outside the training range are clipped to it first, so a region
    unlike anything seen in training cannot score arbitrarily high."""
    out = model.decision(np.atleast_2d(features))
    return float(out[0]) if np.ndim(features) == 1 else out


def external_map(shape, regions, clamp: bool = True) -> np.ndarray:
    """Sum of per-region scores over their masks, normalized. Negative scores
    are clamped to zero before summing unless ``clamp`` is off."""
    acc = np.zeros(shape, dtype=np.float64)
    # fixed accumulation order keeps the float sum independent of list order
    for r in sorted(regions, key=lambda r: (mask_digest(r.mask), r.score if r.score is not None else 0.0)):
        if r.score is None:
            raise ValidationError("region has no predicted score")
        z = max(r.score, 0.0) if clamp else r.score
        if z:
            acc[r.mask] += z
    return normalize_map(acc)


def dump_model(path, model: LinearModel) -> None:
    """One coefficient per line: raw-feature weights, then the bias."""
    w, b = model.raw_coefficients()
    with open(path, "w", encoding="utf-8") as fh:
        for v in w:
            fh.write(f"{v:.17g}\n")
        fh.write(f"{b:.17g}\n")


def load_model_coefficients(path) -> tuple[np.ndarray, float]:
    vals = np.loadtxt(path, dtype=np.float64, ndmin=1)
    return vals[:-1], float(vals[-1])
