"""Per-image detection: internal map, region selection, retrieval-trained SVM,
external map and fusion."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classifier import LinearModel, SingleClassError, external_map, train
from .config import PipelineConfig
from .features import border_mask, image_descriptor, region_features_batch
from .fusion import fuse
from .imaging import ValidationError, check_rgb
from .internal import InternalResult, run_internal
from .proposals import (DegenerateSaliency, center_prior, generate_proposals, psi_map,
                        select_by_center_prior, select_regions)
from .retrieval import RetrievalIndex, query
from .slic import build_layers

log = logging.getLogger(__name__)


class ProposalSource:
    """Default proposal generator (SLIC layers + agglomeration); picklable."""

    def __init__(self, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()

    def __call__(self, image: np.ndarray, layers=None) -> list[np.ndarray]:
        if layers is None:
            layers = build_layers(image, self.cfg.layer_counts, self.cfg.compactness)
        return generate_proposals(image, layers)


@dataclass
class Detection:
    image_id: str
    internal: np.ndarray
    external: np.ndarray
    fused: np.ndarray
    gamma: float
    notes: list[str] = field(default_factory=list)
    model: LinearModel | None = None
    internal_result: InternalResult | None = field(default=None, repr=False)
    regions: list = field(default_factory=list, repr=False)


def training_set(records) -> tuple[np.ndarray, np.ndarray]:
    """Stack the labeled proposals of the retrieved records, ordered by record id
    then proposal index."""
    records = sorted(records, key=lambda r: r.image_id)
    x = np.concatenate([r.features for r in records]).astype(np.float64)
    y = np.concatenate([r.labels for r in records]).astype(np.float64)
    return x, y


def detect(image: np.ndarray, index: RetrievalIndex, cfg: PipelineConfig | None = None, *,
           image_id: str = "image", proposals=None, objectness=None) -> Detection:
    cfg = cfg or PipelineConfig()
    check_rgb(image)
    h, w = image.shape[:2]
    notes = []

    layers = build_layers(image, cfg.layer_counts, cfg.compactness)
    inner = run_internal(image, layers=layers, objectness=objectness, **cfg.internal_kwargs())

    masks = generate_proposals(image, layers) if proposals is None else list(proposals)
    masks = [np.asarray(m, dtype=bool) for m in masks if np.any(m)]
    if not masks:
        raise ValidationError(f"{image_id}: no usable proposals")
    if any(m.shape != (h, w) for m in masks):
        raise ValidationError(f"{image_id}: proposal masks do not match the image")
    masks = np.stack(masks)
    prior = center_prior(w, h, cfg.sigma_x, cfg.sigma_y)
    psi = psi_map(inner.saliency, inner.objectness, prior)
    n = min(cfg.n_select, len(masks))
    try:
        regions = select_regions(masks, psi, n, cfg.tau)
    except DegenerateSaliency:
        notes.append("degenerate-psi: regions ranked by center prior")
        regions = select_by_center_prior(masks, prior, n)

    feats = region_features_batch(image, np.stack([r.mask for r in regions]), border_mask(image),
                                  inner.planes)
    for r, f in zip(regions, feats):
        r.features = f

    gamma = cfg.gamma
    model = None
    if cfg.descriptor_version != index.descriptor_version:
        raise ValidationError(f"config descriptor {cfg.descriptor_version!r} does not match "
                              f"index {index.descriptor_version!r}")
    records = query(index, image_descriptor(image), min(cfg.top_k, len(index)))
    try:
        model = train(training_set(records), C=cfg.svm_c)
    except SingleClassError as exc:
        notes.append(f"single-class retrieval ({exc}): gamma set to 0")
        gamma = 0.0
        ext = np.zeros((h, w))
    else:
        scores = model.decision(feats)
        for r, s in zip(regions, scores):
            r.score = float(s)
        ext = external_map((h, w), regions, clamp=cfg.clamp_scores)
    for note in notes:
        log.info("%s: %s", image_id, note)
    return Detection(image_id=image_id, internal=inner.saliency, external=ext,
                     fused=fuse(ext, inner.saliency, gamma), gamma=gamma, notes=notes, model=model,
                     internal_result=inner, regions=regions)
