"""Annotation database of labeled proposals keyed by global descriptors, with
exhaustive nearest-neighbour lookup."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .features import (DESCRIPTOR_VERSION, REGION_LAYOUT_VERSION, ImageDescriptor, PixelPlanes,
                       border_mask, image_descriptor, read_matrix, region_features_batch,
                       write_matrix)
from .imaging import LabeledImage, ValidationError
from .proposals import read_masks, write_masks

POS_IOU = 0.5
NEG_IOU = 0.2
TOP_K = 5
INDEX_MANIFEST = "index.manifest"
_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    descriptor: ImageDescriptor
    features: np.ndarray   # (P, 81) float32
    labels: np.ndarray     # (P,) int8, +1/-1
    masks: tuple = ()      # (H, W) bool per proposal, optional

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float32))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8))
        if len(self.labels) < 1:
            raise ValidationError(f"{self.image_id}: record needs at least one proposal")
        if self.features.shape != (len(self.labels), 81):
            raise ValidationError(f"{self.image_id}: features must be (P, 81)")
        if not np.isin(self.labels, (-1, 1)).all():
            raise ValidationError(f"{self.image_id}: labels must be +1/-1")


@dataclass(frozen=True)
class RetrievalIndex:
    records: tuple[AnnotationRecord, ...]
    descriptor_version: str = DESCRIPTOR_VERSION

    def __post_init__(self):
        dims = {r.descriptor.vector.shape for r in self.records}
        versions = {r.descriptor.version for r in self.records}
        if len(dims) > 1 or versions - {self.descriptor_version}:
            raise ValidationError("records disagree on descriptor version or dimension")

    def __len__(self):
        return len(self.records)

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([r.descriptor.vector for r in self.records]).astype(np.float64)


def box_iou(masks: np.ndarray, boxes, shape) -> np.ndarray:
    """Max IoU of each mask against the box regions."""
    flat = np.asarray(masks, dtype=bool).reshape(len(masks), -1)
    area = flat.sum(axis=1).astype(np.float64)
    best = np.zeros(len(flat))
    for b in boxes:
        bm = b.to_mask(*shape).ravel()
        inter = (flat & bm).sum(axis=1).astype(np.float64)
        best = np.maximum(best, inter / (area + b.area - inter))
    return best


def label_proposals(ious: np.ndarray, pos: float = POS_IOU, neg: float = NEG_IOU) -> np.ndarray:
    """+1 at IoU >= pos, -1 at IoU <= neg, 0 (dropped) in between."""
    out = np.zeros(len(ious), dtype=np.int8)
    out[ious >= pos] = 1
    out[ious <= neg] = -1
    return out


def build_record(item: LabeledImage, proposal_source: Callable[[np.ndarray], list],
                 pos: float = POS_IOU, neg: float = NEG_IOU, keep_masks: bool = True
                 ) -> AnnotationRecord:
    if not item.boxes:
        raise ValidationError(f"{item.id}: database image has no bounding boxes")
    if not _SAFE_ID.match(item.id):
        raise ValidationError(f"{item.id!r}: ids must match {_SAFE_ID.pattern}")
    masks = proposal_source(item.image)
    if len(masks) == 0:
        raise ValidationError(f"{item.id}: proposal generation returned nothing")
    masks = np.asarray(masks, dtype=bool)
    labels = label_proposals(box_iou(masks, item.boxes, item.shape), pos, neg)
    keep = labels != 0
    if not keep.any():
        raise ValidationError(f"{item.id}: no proposal falls outside the ambiguous IoU band")
    planes = PixelPlanes(item.image)
    feats = region_features_batch(item.image, masks[keep], border_mask(item.image), planes)
    return AnnotationRecord(
        image_id=item.id,
        descriptor=image_descriptor(item.image),
        features=feats,
        labels=labels[keep],
        masks=tuple(masks[keep]) if keep_masks else (),
    )


def build_index(database, proposal_source, pos: float = POS_IOU, neg: float = NEG_IOU,
                map_fn=map) -> RetrievalIndex:
    """One record per database image. ``map_fn`` may be a pool's ``map``; record
    order always follows the database order."""
    database = list(database)
    for item in database:
        if not item.boxes:
            raise ValidationError(f"{item.id}: database image has no bounding boxes")
    records = list(map_fn(_RecordBuilder(proposal_source, pos, neg), database))
    return RetrievalIndex(records=tuple(records))


class _RecordBuilder:
    # picklable callable for process pools
    def __init__(self, proposal_source, pos, neg):
        self.proposal_source = proposal_source
        self.pos = pos
        self.neg = neg

    def __call__(self, item):
        return build_record(item, self.proposal_source, self.pos, self.neg)


def query(index: RetrievalIndex, q: ImageDescriptor, k: int = TOP_K) -> list[AnnotationRecord]:
    """The ``k`` records with the smallest squared Euclidean descriptor distance,
    ascending; ties broken by image id."""
    if len(index) == 0:
        raise ValidationError("empty index")
    if k < 1 or k > len(index):
        raise ValidationError(f"k={k} outside 1..{len(index)}")
    if q.version != index.descriptor_version:
        raise ValidationError(f"descriptor version {q.version!r} != index {index.descriptor_version!r}")
    diff = index.matrix - q.vector.astype(np.float64)
    dist = np.einsum("ij,ij->i", diff, diff)
    ids = [r.image_id for r in index.records]
    order = sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))[:k]
    return [index.records[i] for i in order]


# ---------------------------------------------------------------------------
# on-disk format

def save_index(index: RetrievalIndex, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"descriptor_version\t{index.descriptor_version}\n",
        f"region_layout\t{REGION_LAYOUT_VERSION}\n",
        f"records\t{len(index)}\n",
    ]
    for r in index.records:
        stem = r.image_id
        write_matrix(directory / f"{stem}.desc.sf", r.descriptor.vector[None])
        write_matrix(directory / f"{stem}.feat.sf", r.features)
        if r.masks:
            write_masks(directory / f"{stem}.masks.rle", r.masks)
        labels = "".join("+" if v > 0 else "-" for v in r.labels)
        lines.append(f"{r.image_id}\t{len(r.labels)}\t{labels}\n")
    (directory / INDEX_MANIFEST).write_text("".join(lines), encoding="utf-8")


def load_index(directory, load_masks: bool = False) -> RetrievalIndex:
    directory = Path(directory)
    path = directory / INDEX_MANIFEST
    if not path.exists():
        raise ValidationError(f"missing file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    header = dict(line.split("\t", 1) for line in lines[:3])
    version = header.get("descriptor_version")
    if header.get("region_layout") != REGION_LAYOUT_VERSION:
        raise ValidationError(f"{path}: region layout {header.get('region_layout')!r} unsupported")
    records = []
    for line in lines[3:]:
        image_id, count, labels = line.split("\t")
        y = np.array([1 if c == "+" else -1 for c in labels], dtype=np.int8)
        if len(y) != int(count):
            raise ValidationError(f"{path}: label count mismatch for {image_id}")
        desc = read_matrix(directory / f"{image_id}.desc.sf")[0]
        feats = read_matrix(directory / f"{image_id}.feat.sf")
        mask_path = directory / f"{image_id}.masks.rle"
        masks = tuple(read_masks(mask_path)) if load_masks and mask_path.exists() else ()
        records.append(AnnotationRecord(image_id, ImageDescriptor(desc, version), feats, y, masks))
    if len(records) != int(header["records"]):
        raise ValidationError(f"{path}: expected {header['records']} records, found {len(records)}")
    return RetrievalIndex(tuple(records), version)
