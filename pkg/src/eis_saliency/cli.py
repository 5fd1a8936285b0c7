"""Command-line entry point: ``gen-synthetic``, ``build-index``, ``detect``, ``eval``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import synthetic
from .classifier import dump_model
from .config import PipelineConfig, load_config
from .evaluation import ScoreReport, score_image, write_curve, write_report
from .imaging import ValidationError, load_dataset, load_entry, load_map, read_manifest, save_map
from .pipeline import ProposalSource, detect
from .proposals import read_masks
from .retrieval import build_index, load_index, save_index

log = logging.getLogger("eis_saliency")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2
KINDS = ("internal", "external", "fused")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    return cfg.replace(gamma=getattr(args, "gamma", None), top_k=getattr(args, "topk", None))


def _per_image(path: Path | None, image_id: str, suffixes: tuple[str, ...]) -> Path | None:
    """A directory holds one file per image id; a plain file applies to every image."""
    if path is None:
        return None
    if path.is_dir():
        for suffix in suffixes:
            cand = path / f"{image_id}{suffix}"
            if cand.exists():
                return cand
        raise ValidationError(f"{image_id}: nothing in {path} matching {'/'.join(suffixes)}")
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    return path


# ---------------------------------------------------------------------------
# gen-synthetic

def cmd_gen_synthetic(args) -> int:
    test, database = synthetic.generate_corpus(args.out, args.n_test, args.n_database, args.seed,
                                               args.size)
    print(f"test manifest: {test}")
    print(f"database manifest: {database}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# build-index

def cmd_build_index(args) -> int:
    cfg = _config(args)
    database = load_dataset(args.root or Path(args.manifest).parent, args.manifest)
    source = ProposalSource(cfg)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            index = build_index(database, source, cfg.pos_iou, cfg.neg_iou, map_fn=pool.map)
    else:
        index = build_index(database, source, cfg.pos_iou, cfg.neg_iou)
    save_index(index, args.out)
    labels = np.concatenate([r.labels for r in index.records])
    pos = int((labels > 0).sum())
    print(f"records: {len(index)}")
    print(f"proposals: {len(labels)}")
    print(f"labels: {pos} positive, {len(labels) - pos} negative")
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect

_WORKER: dict = {}


def _init_worker(index_dir, cfg, options):
    _WORKER["index"] = load_index(index_dir)
    _WORKER["cfg"] = cfg
    _WORKER["options"] = options


def _load_objectness(path: Path) -> np.ndarray:
    return load_map(path.with_suffix(""))


def _detect_one(entry):
    """Process one manifest entry; returns (id, scores-or-None, error-or-None)."""
    index, cfg, opt = _WORKER["index"], _WORKER["cfg"], _WORKER["options"]
    try:
        item = load_entry(entry)
        prop_path = _per_image(opt["proposals"], item.id, (".rle", ".masks.rle"))
        obj_path = _per_image(opt["objectness"], item.id, (".npy", ".png"))
        proposals = read_masks(prop_path) if prop_path else None
        objectness = _load_objectness(obj_path) if obj_path else None
        det = detect(item.image, index, cfg, image_id=item.id, proposals=proposals,
                     objectness=objectness)
    except (ValidationError, OSError, ValueError) as exc:
        return entry.id, None, str(exc)
    out = opt["out"]
    maps = dict(zip(KINDS, (det.internal, det.external, det.fused)))
    for kind, values in maps.items():
        save_map(out / f"{item.id}_{kind}", values)
    if opt["dump_internal"] is not None:
        d = opt["dump_internal"]
        for k, layer_map in enumerate(det.internal_result.layer_maps):
            save_map(d / f"{item.id}_layer{k}", layer_map)
        save_map(d / f"{item.id}_objectness", det.internal_result.objectness)
        save_map(d / f"{item.id}_internal", det.internal)
    if opt["dump_model"] is not None and det.model is not None:
        opt["dump_model"].mkdir(parents=True, exist_ok=True)
        dump_model(opt["dump_model"] / f"{item.id}.model.txt", det.model)
    scores = None
    if item.ground_truth_mask is not None and item.ground_truth_mask.any():
        scores = {kind: score_image(item.id, values, item.ground_truth_mask)
                  for kind, values in maps.items()}
    return item.id, scores, None


def cmd_detect(args) -> int:
    cfg = _config(args)
    entries = read_manifest(args.manifest, args.root)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    options = {
        "out": out,
        "proposals": Path(args.proposals) if args.proposals else None,
        "objectness": Path(args.objectness) if args.objectness else None,
        "dump_internal": Path(args.dump_internal) if args.dump_internal else None,
        "dump_model": Path(args.dump_model) if args.dump_model else None,
    }
    index = load_index(args.index)
    if index.descriptor_version != cfg.descriptor_version:
        raise ValidationError(f"index descriptor {index.descriptor_version!r} does not match "
                              f"config {cfg.descriptor_version!r}")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker,
                                 initargs=(args.index, cfg, options)) as pool:
            results = list(pool.map(_detect_one, entries))
    else:
        _WORKER.update(index=index, cfg=cfg, options=options)
        results = [_detect_one(e) for e in entries]

    failed = [(image_id, err) for image_id, _, err in results if err is not None]
    for image_id, err in failed:
        log.error("%s failed: %s", image_id, err)
    scored = [(image_id, s) for image_id, s, err in results if s is not None]
    if scored:
        excluded = [image_id for image_id, _ in failed]
        for kind in KINDS:
            report = ScoreReport([s[kind] for _, s in scored], excluded)
            write_report(out / f"report_{kind}.csv", report)
            write_curve(out / f"pr_{kind}.csv", report.mean_curve())
            print(f"{kind:>8}: precision {report.precision:.4f} recall {report.recall:.4f} "
                  f"F {report.f_measure:.4f} AUC {report.auc:.4f}")
    print(f"images: {len(results) - len(failed)} processed, {len(failed)} excluded")
    if failed:
        (out / "failed.txt").write_text("".join(f"{i}\t{e}\n" for i, e in failed), encoding="utf-8")
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    maps_dir = Path(args.maps)
    rows = []
    for entry in read_manifest(args.manifest, args.root):
        item = load_entry(entry)
        if item.ground_truth_mask is None:
            continue
        sidecar = maps_dir / f"{item.id}_{args.kind}.npy"
        if not sidecar.exists():
            raise ValidationError(f"missing sidecar: {sidecar}")
        rows.append(score_image(item.id, load_map(sidecar.with_suffix("")), item.ground_truth_mask))
    report = ScoreReport(rows)
    write_report(args.out, report)
    print(f"images: {len(rows)}  precision {report.precision:.4f} recall {report.recall:.4f} "
          f"F {report.f_measure:.4f} AUC {report.auc:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eis-saliency", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write the synthetic benchmark corpus")
    g.add_argument("out")
    g.add_argument("--n-test", type=int, default=synthetic.N_TEST)
    g.add_argument("--n-database", type=int, default=synthetic.N_DATABASE)
    g.add_argument("--seed", type=int, default=synthetic.SEED)
    g.add_argument("--size", type=int, default=synthetic.SIZE)
    g.set_defaults(func=cmd_gen_synthetic)

    b = sub.add_parser("build-index", help="build the annotation index from a database manifest")
    b.add_argument("manifest")
    b.add_argument("out")
    b.add_argument("--root", help="base directory for manifest paths (default: manifest dir)")
    b.add_argument("--config")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_build_index)

    d = sub.add_parser("detect", help="compute internal, external and fused maps")
    d.add_argument("manifest")
    d.add_argument("index")
    d.add_argument("out")
    d.add_argument("--root")
    d.add_argument("--config")
    d.add_argument("--gamma", type=float)
    d.add_argument("--topk", type=int)
    d.add_argument("--proposals", help="RLE mask file, or a directory of <id>.rle files")
    d.add_argument("--objectness", help="map file, or a directory of <id>.npy / <id>.png maps")
    d.add_argument("--dump-internal", metavar="DIR")
    d.add_argument("--dump-model", metavar="DIR")
    d.add_argument("--jobs", type=int, default=1)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score saved maps against ground truth")
    e.add_argument("maps")
    e.add_argument("manifest")
    e.add_argument("out")
    e.add_argument("--root")
    e.add_argument("--kind", choices=KINDS, default="fused")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
