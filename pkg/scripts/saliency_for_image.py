#!/usr/bin/env python3
"""Compute internal, external and fused maps for a single image file.

    python scripts/saliency_for_image.py photo.png INDEX_DIR out/ --gamma 0.5
"""
import argparse
from pathlib import Path

from eis_saliency.config import PipelineConfig
from eis_saliency.imaging import read_image, save_map
from eis_saliency.pipeline import detect
from eis_saliency.retrieval import load_index


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("image", type=Path)
    p.add_argument("index")
    p.add_argument("out", type=Path)
    p.add_argument("--gamma", type=float, default=PipelineConfig.gamma)
    a = p.parse_args()

    det = detect(read_image(a.image), load_index(a.index), PipelineConfig(gamma=a.gamma),
                 image_id=a.image.stem)
    a.out.mkdir(parents=True, exist_ok=True)
    for kind in ("internal", "external", "fused"):
        save_map(a.out / f"{a.image.stem}_{kind}", getattr(det, kind))
    for note in det.notes:
        print(note)
    print(f"wrote {a.out}/{a.image.stem}_{{internal,external,fused}}.png/.npy")


if __name__ == "__main__":
    main()
