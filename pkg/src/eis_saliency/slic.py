"""SLIC superpixels in CIELAB with 4-connectivity enforcement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .imaging import ValidationError, check_rgb, rgb_to_lab

LAYER_COUNTS = (50, 100, 150, 200, 300, 400)
COMPACTNESS = 10.0
N_ITER = 10


@dataclass(frozen=True)
class SuperpixelLayer:
    labels: np.ndarray  # (H, W) int32, values 0..n-1
    n: int
    layer_index: int = 0
    compactness: float = COMPACTNESS
    target_count: int = 0

    def areas(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n)


def grid_seeds(height: int, width: int, target_count: int) -> np.ndarray:
    """Regular grid of (y, x) float seeds, roughly ``target_count`` of them."""
    step = np.sqrt(height * width / target_count)
    ny = max(1, int(round(height / step)))
    nx = max(1, int(round(width / step)))
    ys = (np.arange(ny) + 0.5) * height / ny - 0.5
    xs = (np.arange(nx) + 0.5) * width / nx - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def _perturb_seeds(seeds: np.ndarray, lab: np.ndarray) -> np.ndarray:
    h, w = lab.shape[:2]
    gy = np.zeros(lab.shape[:2])
    gx = np.zeros(lab.shape[:2])
    gy[1:-1] = ((lab[2:] - lab[:-2]) ** 2).sum(-1)
    gx[:, 1:-1] = ((lab[:, 2:] - lab[:, :-2]) ** 2).sum(-1)
    grad = gx + gy
    out = seeds.copy()
    for k, (y, x) in enumerate(seeds):
        cy = int(np.clip(round(y), 0, h - 1))
        cx = int(np.clip(round(x), 0, w - 1))
        y0, y1 = max(cy - 1, 0), min(cy + 2, h)
        x0, x1 = max(cx - 1, 0), min(cx + 2, w)
        win = grad[y0:y1, x0:x1]
        j = np.argmin(win)
        # move only on a strict improvement; flat regions keep the exact grid seed
        if win.flat[j] < grad[cy, cx]:
            out[k] = (y0 + j // win.shape[1], x0 + j % win.shape[1])
    return out


def _cluster(lab: np.ndarray, seeds: np.ndarray, step: float, compactness: float,
             n_iter: int) -> np.ndarray:
    h, w = lab.shape[:2]
    k = len(seeds)
    centers = np.concatenate([seeds, np.zeros((k, 3))], axis=1)  # y, x, L, a, b
    for i, (y, x) in enumerate(seeds):
        centers[i, 2:] = lab[int(np.clip(round(y), 0, h - 1)), int(np.clip(round(x), 0, w - 1))]
    ratio = (compactness / step) ** 2
    radius = int(np.ceil(step))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    labels = np.full((h, w), -1, dtype=np.int64)
    feats = np.concatenate([yy.reshape(-1, 1), xx.reshape(-1, 1), lab.reshape(-1, 3)], axis=1)
    for _ in range(n_iter):
        dist = np.full((h, w), np.inf)
        for c in range(k):
            cy, cx = centers[c, 0], centers[c, 1]
            y0, y1 = max(int(cy) - radius, 0), min(int(cy) + radius + 2, h)
            x0, x1 = max(int(cx) - radius, 0), min(int(cx) + radius + 2, w)
            d_lab = ((lab[y0:y1, x0:x1] - centers[c, 2:]) ** 2).sum(-1)
            d_xy = (yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2
            d = d_lab + ratio * d_xy
            sub = dist[y0:y1, x0:x1]
            better = d < sub
            sub[better] = d[better]
            labels[y0:y1, x0:x1][better] = c
        if (labels < 0).any():
            # unreached pixels go to the nearest center in the image plane
            miss = labels < 0
            d = (yy[miss, None] - centers[None, :, 0]) ** 2 + (xx[miss, None] - centers[None, :, 1]) ** 2
            labels[miss] = np.argmin(d, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        used = counts > 0
        for j in range(5):
            sums = np.bincount(flat, weights=feats[:, j], minlength=k)
            centers[used, j] = sums[used] / counts[used]
    return labels


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep the largest 4-connected piece of every label; merge the other fragments
    into their largest adjacent region. Output is relabeled 0..n-1 in raster order."""
    comp = measure.label(labels + 1, background=0, connectivity=1).astype(np.int64) - 1
    n_comp = int(comp.max()) + 1
    sizes = np.bincount(comp.ravel(), minlength=n_comp)
    owner = np.zeros(n_comp, dtype=np.int64)
    owner[comp.ravel()] = labels.ravel()
    # main component of each original label
    is_main = np.zeros(n_comp, dtype=bool)
    order = np.lexsort((np.arange(n_comp), -sizes, owner))
    first = np.ones(n_comp, dtype=bool)
    first[1:] = owner[order[1:]] != owner[order[:-1]]
    is_main[order[first]] = True
    if is_main.all():
        return _relabel(comp)

    # component adjacency
    pairs = np.concatenate([
        np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], 1),
        np.stack([comp[:-1].ravel(), comp[1:].ravel()], 1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    neighbors = [set() for _ in range(n_comp)]  # per group root, member components' neighbours
    for a, b in pairs:
        neighbors[a].add(int(b))
        neighbors[b].add(int(a))

    parent = np.arange(n_comp)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    group_size = sizes.copy()
    anchored = is_main.copy()  # per root: group holds a main component
    for c in np.lexsort((np.arange(n_comp), sizes)):
        root = find(c)
        if anchored[root]:
            continue
        best, best_size = -1, -1
        for nb in sorted(neighbors[root]):
            r = find(nb)
            if r != root and (group_size[r] > best_size or (group_size[r] == best_size and r < best)):
                best, best_size = r, group_size[r]
        if best < 0:
            continue
        parent[root] = best
        group_size[best] += group_size[root]
        neighbors[best] |= neighbors[root]
        neighbors[root] = set()
    roots = np.array([find(i) for i in range(n_comp)])
    return _relabel(roots[comp])


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, first_idx, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    # rank groups by first pixel in raster order
    rank = np.empty(len(first_idx), dtype=np.int64)
    rank[np.argsort(first_idx, kind="stable")] = np.arange(len(first_idx))
    return rank[inverse].reshape(labels.shape).astype(np.int32)


def segment_slic(image: np.ndarray, target_count: int, compactness: float = COMPACTNESS,
                 n_iter: int = N_ITER, layer_index: int = 0) -> SuperpixelLayer:
    check_rgb(image)
    h, w = image.shape[:2]
    if target_count < 1 or target_count > h * w / 4:
        raise ValidationError(f"target_count {target_count} too large for {w}x{h} image")
    if compactness <= 0:
        raise ValidationError("compactness must be positive")
    lab = rgb_to_lab(image)
    step = np.sqrt(h * w / target_count)
    seeds = _perturb_seeds(grid_seeds(h, w, target_count), lab)
    labels = enforce_connectivity(_cluster(lab, seeds, step, compactness, n_iter))
    return SuperpixelLayer(labels=labels, n=int(labels.max()) + 1, layer_index=layer_index,
                           compactness=compactness, target_count=target_count)


def build_layers(image: np.ndarray, counts=LAYER_COUNTS, compactness: float = COMPACTNESS
                 ) -> list[SuperpixelLayer]:
    return [segment_slic(image, c, compactness, layer_index=i) for i, c in enumerate(counts)]


def save_labels_png(path, layer: SuperpixelLayer) -> None:
    from PIL import Image
    Image.fromarray(layer.labels.astype(np.uint16)).save(path)
