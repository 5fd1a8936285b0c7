"""Weighted blend of the external and internal maps."""
from __future__ import annotations

import numpy as np

from .imaging import ValidationError, normalize_map

GAMMA = 0.5


def fuse(external: np.ndarray, internal: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """``normalize(gamma * external + (1 - gamma) * internal)``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma={gamma} outside [0, 1]")
    if external.shape != internal.shape:
        raise ValidationError("external and internal maps differ in size")
    # endpoints skip the arithmetic so the result is bit-identical to the chosen map
    if gamma == 0.0:
        return normalize_map(internal)
    if gamma == 1.0:
        return normalize_map(external)
    # written as a correction to the internal map so equal inputs blend exactly
    return normalize_map(internal + gamma * (external - internal))
