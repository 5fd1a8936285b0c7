"""Synthetic benchmark corpus: solid-colored shapes with distractor texture on
structured backgrounds, plus an annotation database of similar scenes."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import BoundingBox, write_boxes, write_image, write_manifest, write_mask

SIZE = 128
N_TEST = 40
N_DATABASE = 200
SEED = 7

# (background style, background colors, object color, shape)
THEMES = [
    ("sky", ((120, 160, 210), (90, 130, 80)), (220, 40, 40), "ellipse"),
    ("stripes", ((150, 140, 120), (120, 115, 100)), (240, 200, 30), "rect"),
    ("gradient", ((70, 70, 90), (150, 150, 160)), (40, 200, 220), "triangle"),
    ("checker", ((110, 130, 110), (95, 115, 95)), (200, 60, 200), "ellipse"),
    ("wall", ((200, 180, 150), (170, 140, 110)), (30, 60, 200), "rect"),
    ("sky", ((180, 190, 200), (130, 110, 80)), (250, 130, 20), "triangle"),
    ("stripes", ((60, 80, 70), (80, 100, 90)), (245, 245, 240), "ellipse"),
    ("gradient", ((160, 120, 100), (90, 60, 50)), (30, 170, 60), "rect"),
]


@dataclass
class Scene:
    image: np.ndarray
    mask: np.ndarray
    boxes: list[BoundingBox]
    theme: int


def _background(rng, style, colors, size):
    c0, c1 = (np.array(c, dtype=np.float64) for c in colors)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    if style == "sky":
        horizon = rng.uniform(0.45, 0.7)
        top = (yy < horizon)[..., None]
        img = np.where(top, c0 * (0.85 + 0.15 * yy[..., None]), c1 * (1.1 - 0.2 * yy[..., None]))
    elif style == "stripes":
        period = rng.integers(8, 16)
        band = ((np.arange(size) // period) % 2)[:, None, None] * np.ones((1, size, 1))
        img = np.where(band > 0, c1, c0) * np.ones((size, size, 3))
    elif style == "gradient":
        t = yy[..., None] if rng.random() < 0.5 else xx[..., None]
        img = c0 * (1 - t) + c1 * t
    elif style == "checker":
        cell = rng.integers(12, 24)
        chk = (((np.arange(size)[:, None] // cell) + (np.arange(size)[None, :] // cell)) % 2)[..., None]
        img = np.where(chk > 0, c1, c0) * np.ones((size, size, 3))
    else:  # wall
        img = np.ones((size, size, 3)) * c0
        row = rng.integers(10, 16)
        img[(np.arange(size) % row) < 2] = c1
        for r0 in range(0, size, row):
            off = (r0 // row % 2) * 12
            for x in range(off, size, 24):
                img[r0:r0 + row, x:x + 2] = c1
    return img


def _shape_mask(rng, kind, size, cx, cy, r):
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "ellipse":
        ax, ay = r * rng.uniform(0.8, 1.2), r * rng.uniform(0.7, 1.1)
        return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1
    if kind == "rect":
        ax, ay = r * rng.uniform(0.7, 1.1), r * rng.uniform(0.6, 1.0)
        return (np.abs(xx - cx) <= ax) & (np.abs(yy - cy) <= ay)
    # isosceles triangle pointing up
    top, bottom = cy - r, cy + 0.8 * r
    half = (yy - top) / (bottom - top) * r
    return (yy >= top) & (yy <= bottom) & (np.abs(xx - cx) <= half)


def _distractors(rng, img, size, color, count):
    for _ in range(count):
        x, y = rng.integers(0, size - 4, 2)
        if rng.random() < 0.5:
            img[y:y + rng.integers(2, 5), x:x + rng.integers(2, 5)] = color
        else:  # short stroke
            length = rng.integers(5, 12)
            if rng.random() < 0.5:
                img[y, x:min(x + length, size)] = color
            else:
                img[y:min(y + length, size), x] = color


def make_scene(rng: np.random.Generator, theme: int, size: int = SIZE, n_objects: int | None = None
               ) -> Scene:
    style, colors, obj_color, kind = THEMES[theme]
    img = _background(rng, style, colors, size)
    distract = np.array(colors[1], float) * 0.6 + np.array(obj_color, float) * 0.25
    _distractors(rng, img, size, distract, int(rng.integers(25, 45)))
    if n_objects is None:
        n_objects = 2 if rng.random() < 0.3 else 1
    mask = np.zeros((size, size), dtype=bool)
    boxes = []
    for k in range(n_objects):
        for _ in range(50):
            r = rng.uniform(14, 26) if n_objects == 1 else rng.uniform(11, 18)
            spread = 18 if n_objects == 1 else 30
            cx = size / 2 + rng.uniform(-spread, spread)
            cy = size / 2 + rng.uniform(-spread, spread) * 0.8
            m = _shape_mask(rng, kind, size, cx, cy, r)
            if m.sum() > 40 and not (m & mask).any():
                break
        shade = np.array(obj_color, float) * rng.uniform(0.9, 1.05)
        img[m] = shade
        mask |= m
        ys, xs = np.nonzero(m)
        boxes.append(BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())))
    img += rng.normal(0, 5, img.shape)
    return Scene(np.clip(np.rint(img), 0, 255).astype(np.uint8), mask, boxes, theme)


def generate_corpus(out_dir, n_test: int = N_TEST, n_database: int = N_DATABASE, seed: int = SEED,
                    size: int = SIZE) -> tuple[Path, Path]:
    """Write images, masks, boxes and the two manifests; returns (test, database) manifests."""
    out = Path(out_dir)
    for sub in ("images", "masks", "boxes"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifests = {}
    for split, count in (("test", n_test), ("database", n_database)):
        rows = []
        for i in range(count):
            theme = i % len(THEMES)
            scene = make_scene(rng, theme, size)
            sid = f"{split}_{i:04d}"
            write_image(out / "images" / f"{sid}.png", scene.image)
            write_mask(out / "masks" / f"{sid}.png", scene.mask)
            write_boxes(out / "boxes" / f"{sid}.txt", scene.boxes)
            rows.append((sid, f"images/{sid}.png", f"masks/{sid}.png", f"boxes/{sid}.txt"))
        manifests[split] = out / f"{split}.tsv"
        write_manifest(manifests[split], rows)
    return manifests["test"], manifests["database"]
