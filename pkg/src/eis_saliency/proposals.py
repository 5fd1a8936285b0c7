"""Candidate regions, the center prior, and confidence-based region selection."""
from __future__ import annotations

import hashlib
import heapq
import struct
from dataclasses import dataclass

import numpy as np

from .imaging import ValidationError, check_rgb, normalize_map, rgb_to_lab
from .slic import SuperpixelLayer

TAU = 0.4
N_SELECT = 100
MERGE_THRESHOLDS = (0.0, 6.0, 12.0, 20.0, 32.0, 50.0)
MIN_AREA_FRAC = 0.01
MAX_AREA_FRAC = 0.9
DEDUP_IOU = 0.95


class DegenerateSaliency(ValueError):
    """Raised when the selection map sums to zero."""


@dataclass
class RegionProposal:
    mask: np.ndarray
    confidence: float = 0.0
    features: np.ndarray | None = None
    score: float | None = None

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def digest(self) -> str:
        return mask_digest(self.mask)


def mask_digest(mask: np.ndarray) -> str:
    m = np.asarray(mask, dtype=bool)
    return hashlib.sha1(struct.pack("<II", *m.shape) + np.packbits(m).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# proposal generation by superpixel agglomeration

def _adjacency(labels: np.ndarray, n: int) -> list[set[int]]:
    a = np.concatenate([labels[:, :-1].ravel(), labels[:-1].ravel()])
    b = np.concatenate([labels[:, 1:].ravel(), labels[1:].ravel()])
    keep = a != b
    pairs = np.unique(np.sort(np.stack([a[keep], b[keep]], 1), axis=1), axis=0)
    adj = [set() for _ in range(n)]
    for i, j in pairs:
        adj[i].add(int(j))
        adj[j].add(int(i))
    return adj


def agglomerate(labels: np.ndarray, n: int, lab: np.ndarray, thresholds=MERGE_THRESHOLDS
                ) -> list[frozenset]:
    """Greedily merge the closest adjacent pair (Lab mean distance) while that
    distance is below each threshold in turn; every region of every snapshot is
    returned as a set of superpixel ids."""
    flat = labels.ravel()
    size = np.bincount(flat, minlength=n).astype(np.float64)
    sums = np.stack([np.bincount(flat, weights=lab[:, c], minlength=n) for c in range(3)], 1)
    members = {i: frozenset([i]) for i in range(n)}
    total = {i: sums[i] for i in range(n)}
    weight = {i: size[i] for i in range(n)}
    neighbors = {i: s for i, s in enumerate(_adjacency(labels, n))}

    def dist(i, j):
        d = total[i] / weight[i] - total[j] / weight[j]
        return float(np.sqrt(d @ d))

    heap = [(dist(i, j), i, j) for i in range(n) for j in neighbors[i] if i < j]
    heapq.heapify(heap)
    next_id = n
    snapshots = []
    for t in sorted(thresholds):
        while heap and heap[0][0] < t:
            _, i, j = heapq.heappop(heap)
            if i not in members or j not in members:
                continue  # stale entry
            k = next_id
            next_id += 1
            members[k] = members.pop(i) | members.pop(j)
            total[k] = total.pop(i) + total.pop(j)
            weight[k] = weight.pop(i) + weight.pop(j)
            nb = (neighbors.pop(i) | neighbors.pop(j)) - {i, j}
            neighbors[k] = nb
            for q in sorted(nb):
                neighbors[q] -= {i, j}
                neighbors[q].add(k)
                heapq.heappush(heap, (dist(q, k), q, k))
        snapshots.extend(members.values())
    return snapshots


def _dedup(masks: list[np.ndarray], iou: float = DEDUP_IOU) -> list[np.ndarray]:
    kept: list[np.ndarray] = []
    kept_flat: list[np.ndarray] = []
    kept_area: list[float] = []
    for m in masks:
        f = m.ravel()
        a = float(np.count_nonzero(f))
        dup = False
        for kf, ka in zip(kept_flat, kept_area):
            # IoU >= t requires min/max area >= t
            if min(a, ka) < iou * max(a, ka):
                continue
            inter = float(np.count_nonzero(kf & f))
            if inter / (a + ka - inter) >= iou:
                dup = True
                break
        if not dup:
            kept.append(m)
            kept_flat.append(f)
            kept_area.append(a)
    return kept


def generate_proposals(image: np.ndarray, layers: list[SuperpixelLayer],
                       thresholds=MERGE_THRESHOLDS, min_area_frac: float = MIN_AREA_FRAC,
                       max_area_frac: float = MAX_AREA_FRAC) -> list[np.ndarray]:
    """Region masks from agglomerating adjacent superpixels of every layer over a
    sweep of Lab-distance thresholds. Regions with IoU >= 0.95 collapse to the
    first occurrence. Every mask is 4-connected."""
    check_rgb(image)
    if not layers:
        raise ValidationError("need at least one superpixel layer")
    h, w = image.shape[:2]
    lab = rgb_to_lab(image).reshape(-1, 3)
    lo, hi = min_area_frac * h * w, max_area_frac * h * w
    candidates = []
    for layer in layers:
        if layer.labels.shape != (h, w):
            raise ValidationError("superpixel layer does not match image")
        sizes = np.bincount(layer.labels.ravel(), minlength=layer.n)
        seen = set()
        for group in agglomerate(layer.labels, layer.n, lab, thresholds):
            if group in seen:
                continue
            seen.add(group)
            ids = np.fromiter(sorted(group), dtype=np.int64)
            area = sizes[ids].sum()
            if lo <= area <= hi:
                candidates.append(np.isin(layer.labels, ids))
    return _dedup(candidates)


# ---------------------------------------------------------------------------
# selection

def center_prior(width: int, height: int, sigma_x: float | None = None,
                 sigma_y: float | None = None) -> np.ndarray:
    """Gaussian falloff from the center pixel ``((W-1)//2, (H-1)//2)``;
    sigmas default to a third of the image size."""
    sigma_x = width / 3 if sigma_x is None else sigma_x
    sigma_y = height / 3 if sigma_y is None else sigma_y
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValidationError("center prior sigmas must be positive")
    xc, yc = (width - 1) // 2, (height - 1) // 2
    x = np.arange(width, dtype=np.float64)
    y = np.arange(height, dtype=np.float64)
    return np.exp(-((x[None, :] - xc) ** 2) / (2 * sigma_x ** 2)
                  - ((y[:, None] - yc) ** 2) / (2 * sigma_y ** 2))


def psi_map(internal: np.ndarray, objectness: np.ndarray, prior: np.ndarray) -> np.ndarray:
    if not (internal.shape == objectness.shape == prior.shape):
        raise ValidationError("psi factors differ in size")
    return normalize_map(internal * objectness * prior)


def confidence(masks: np.ndarray, psi: np.ndarray, tau: float = TAU) -> np.ndarray:
    """``(1 + tau) sum(psi * R) / (tau sum(psi) + sum(R))`` per mask."""
    flat = np.asarray(masks, dtype=bool).reshape(len(masks), -1)
    p = psi.ravel().astype(np.float64)
    num = (1.0 + tau) * (flat.astype(np.float64) @ p)
    den = tau * p.sum() + flat.sum(axis=1)
    return num / den


def _rank(masks, scores, n: int) -> list[RegionProposal]:
    areas = np.asarray(masks, dtype=bool).reshape(len(masks), -1).sum(axis=1)
    keys = [(-float(s), int(a), mask_digest(m)) for s, a, m in zip(scores, areas, masks)]
    order = sorted(range(len(masks)), key=keys.__getitem__)[:n]
    return [RegionProposal(mask=np.asarray(masks[i], dtype=bool), confidence=float(scores[i]))
            for i in order]


def select_regions(masks, psi: np.ndarray, n: int = N_SELECT, tau: float = TAU
                   ) -> list[RegionProposal]:
    """Top ``n`` masks by confidence; ties go to the smaller area, then the mask digest."""
    masks = np.asarray(masks, dtype=bool)
    if n > len(masks):
        raise ValidationError(f"asked for {n} regions from {len(masks)} proposals")
    if tau <= 0:
        raise ValidationError("tau must be positive")
    if not psi.sum() > 0:
        raise DegenerateSaliency("selection map sums to zero")
    return _rank(masks, confidence(masks, psi, tau), n)


def select_by_center_prior(masks, prior: np.ndarray, n: int = N_SELECT) -> list[RegionProposal]:
    """Fallback ranking by the mean center prior inside each mask."""
    masks = np.asarray(masks, dtype=bool)
    flat = masks.reshape(len(masks), -1)
    scores = (flat.astype(np.float64) @ prior.ravel()) / flat.sum(axis=1)
    return _rank(masks, scores, min(n, len(masks)))


# ---------------------------------------------------------------------------
# RLEv1 masks

RLE_MAGIC = b"RLEv1"


def encode_rle(mask: np.ndarray) -> bytes:
    """Magic, u32 width, u32 height, then u32 run lengths alternating 0/1 (starting with 0)."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    flat = m.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds)
    if flat.size and flat[0] == 1:
        runs = np.concatenate([[0], runs])
    return RLE_MAGIC + struct.pack("<II", w, h) + runs.astype("<u4").tobytes()


def _decode_at(data: bytes, pos: int) -> tuple[np.ndarray, int]:
    if data[pos:pos + 5] != RLE_MAGIC:
        raise ValidationError("bad RLE magic")
    w, h = struct.unpack_from("<II", data, pos + 5)
    pos += 13
    total = w * h
    flat = np.zeros(total, dtype=bool)
    filled, val = 0, False
    while filled < total:
        if pos + 4 > len(data):
            raise ValidationError("truncated RLE payload")
        (run,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if filled + run > total:
            raise ValidationError("RLE runs exceed mask size")
        flat[filled:filled + run] = val
        filled += run
        val = not val
    return flat.reshape(h, w), pos


def decode_rle(data: bytes) -> np.ndarray:
    mask, pos = _decode_at(data, 0)
    if pos != len(data):
        raise ValidationError("trailing bytes after RLE mask")
    return mask


def write_masks(path, masks) -> None:
    """Count header (u32) followed by concatenated RLEv1 masks."""
    masks = list(masks)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(masks)))
        for m in masks:
            fh.write(encode_rle(m))


def read_masks(path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise ValidationError(f"{path}: truncated mask file")
    (count,) = struct.unpack_from("<I", data, 0)
    pos = 4
    out = []
    for _ in range(count):
        m, pos = _decode_at(data, pos)
        out.append(m)
    if pos != len(data):
        raise ValidationError(f"{path}: trailing bytes")
    return out
