#!/usr/bin/env python3
"""Re-fuse saved internal/external sidecars over a range of gamma values and
report mean F and AUC for each. Detection is not rerun.

    python scripts/gamma_sweep.py MAPS_DIR corpus/test.tsv --steps 11
"""
import argparse

import numpy as np

from eis_saliency.evaluation import ScoreReport, score_image
from eis_saliency.fusion import fuse
from eis_saliency.imaging import load_entry, load_map, read_manifest


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("maps")
    p.add_argument("manifest")
    p.add_argument("--steps", type=int, default=11)
    a = p.parse_args()

    pairs = []
    for entry in read_manifest(a.manifest):
        item = load_entry(entry)
        if item.ground_truth_mask is None:
            continue
        ext = load_map(f"{a.maps}/{item.id}_external")
        inner = load_map(f"{a.maps}/{item.id}_internal")
        pairs.append((item.id, ext, inner, item.ground_truth_mask))

    print(f"{'gamma':>6}{'F':>9}{'AUC':>9}")
    for gamma in np.linspace(0.0, 1.0, a.steps):
        report = ScoreReport([score_image(i, fuse(e, s, float(gamma)), g) for i, e, s, g in pairs])
        print(f"{gamma:>6.2f}{report.f_measure:>9.4f}{report.auc:>9.4f}")


if __name__ == "__main__":
    main()
