"""End-to-end grounding over a dataset directory.

Work is split in two stages. :func:`prepare` computes everything that does
not depend on the fusion weights (pooled mask features, cosine and GIoU
scores, depth modes) once per instance; :func:`predict` then fuses, selects
and boxes for a given :class:`FusionConfig`. Grid search reuses the prepared
stage for every cell.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .dataset import Dataset
from .errors import ObjGroundError
from .geometry import Box, Mask, giou, mask_to_box
from .grounding import (
    FusionConfig,
    ScoredMask,
    cap_candidates,
    cosine,
    default_grid,
    depth_mode,
    evaluate_grid,
    generate_boxes,
    match_gt_masks,
    pool_human_query,
    pool_object_feature,
    select_masks,
    weighted_bce,
)
from .metrics import EvalReport, GroundingInstance, Tracklet, evaluate

log = logging.getLogger(__name__)


@dataclass
class FramePrep:
    ts: int
    masks: List[Mask]
    s_m: np.ndarray  # (n_queries, n_masks)
    s_d: np.ndarray  # (n_masks,)
    depth_modes: Optional[List[float]]
    labels: Optional[List[int]] = None


@dataclass
class InstancePrep:
    instance: GroundingInstance
    frames: List[FramePrep] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def has_depth(self) -> bool:
        return all(f.depth_modes is not None for f in self.frames)


def _frame_queries(ds: Dataset, inst: GroundingInstance, ts: int, hbox: Box,
                   fmap: np.ndarray, image_width: int) -> np.ndarray:
    q = ds.queries(inst.video_id, inst.human.instance_id, ts)
    if q is not None:
        return np.atleast_2d(q)
    # No decoder output on disk: fall back to the pooled human query, plus the
    # verb embedding when one is available.
    human_q = pool_human_query([fmap], hbox, spatial_scale=fmap.shape[1] / image_width)
    verb = ds.verb_embedding(inst.verb)
    return (human_q + verb if verb is not None else human_q)[None, :]


def prepare_instance(ds: Dataset, inst: GroundingInstance, cfg: RunConfig) -> InstancePrep:
    prep = InstancePrep(inst)
    object_ids = {o.instance_id for o in inst.objects}
    try:
        for ts, hbox in inst.human.frames:
            cand = ds.candidates(inst.video_id, ts)
            keep = cap_candidates(cand.masks, cfg.candidate_cap)
            masks = [cand.masks[i] for i in keep if cand.masks[i].area > 0]
            fmap = ds.feature_map(inst.video_id, ts)
            queries = _frame_queries(ds, inst, ts, hbox, fmap, cand.width)
            feats = [pool_object_feature(fmap, m, cfg.pooling) for m in masks]
            s_m = np.array([[cosine(q, f) for f in feats] for q in queries]).reshape(len(queries), len(masks))
            s_d = np.array([giou(hbox, mask_to_box(m)) for m in masks])
            modes = None
            if masks and all(m.has_depth for m in masks):
                modes = [depth_mode(m, cfg.depth_bin) for m in masks]
            labels = None
            accurate = [a["mask"] for a in cand.accurate
                        if a["human_id"] == inst.human.instance_id and a["object_id"] in object_ids]
            if accurate:
                hits = set()
                for acc in accurate:
                    hits.update(match_gt_masks(masks, acc))
                labels = [int(i in hits) for i in range(len(masks))]
            prep.frames.append(FramePrep(ts, masks, s_m, s_d, modes, labels))
    except (ObjGroundError, OSError) as exc:
        prep.error = f"{type(exc).__name__}: {exc}"
        log.error("instance %s failed: %s", inst.key, prep.error)
    return prep


def _frame_boxes(fp: FramePrep, fusion: FusionConfig, use_depth: bool,
                 depth_bin: float) -> List[Tuple[Box, float]]:
    fused = fusion.gamma * fp.s_m + (1.0 - fusion.gamma) * fp.s_d[None, :]
    selected = set()
    for q in range(fused.shape[0]):
        scored_q = [ScoredMask(i, fp.s_m[q, i], fp.s_d[i], fused[q, i]) for i in range(fused.shape[1])]
        selected.update(select_masks(scored_q, fusion))
    # Each mask keeps the query under which it scored best (first query wins ties).
    best_q = np.argmax(fused, axis=0)
    combined = [
        ScoredMask(i, fp.s_m[best_q[i], i], fp.s_d[i], fused[best_q[i], i],
                   fp.depth_modes[i] if fp.depth_modes is not None else None)
        for i in range(fused.shape[1])
    ]
    return generate_boxes(fp.masks, combined, sorted(selected), fusion, use_depth, depth_bin)


def predict(prep: InstancePrep, fusion: FusionConfig, use_depth: bool,
            depth_bin: float = 0.05) -> List[Tracklet]:
    if prep.error is not None or not prep.frames:
        return []
    inst = prep.instance
    per_frame = [(fp.ts, _frame_boxes(fp, fusion, use_depth, depth_bin))
                 for fp in prep.frames if fp.masks]
    if not per_frame:
        return []
    n_tracks = min(len(boxes) for _, boxes in per_frame)
    return [
        Tracklet(inst.video_id, inst.human.instance_id, inst.verb,
                 [(ts, boxes[k][0]) for ts, boxes in per_frame],
                 [boxes[k][1] for _, boxes in per_frame])
        for k in range(n_tracks)
    ]


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def prepare(ds: Dataset, cfg: RunConfig, threads: int = 1) -> List[InstancePrep]:
    return _map(lambda inst: prepare_instance(ds, inst, cfg), ds.instances, threads)


def resolve_depth(preps: Sequence[InstancePrep], cfg: RunConfig) -> bool:
    available = all(p.has_depth for p in preps if p.error is None)
    if cfg.use_depth is None:
        return available and any(p.error is None for p in preps)
    if cfg.use_depth and not available:
        log.warning("depth requested but some candidate masks lack it; running 2D-only")
        return False
    return cfg.use_depth


def _bce(preps: Sequence[InstancePrep], pos_weight: float) -> Optional[float]:
    probs, labels = [], []
    for p in preps:
        for fp in p.frames:
            if fp.labels is None or fp.s_m.size == 0:
                continue
            # Cosine in [-1, 1] mapped to a probability.
            probs.extend(((fp.s_m.max(axis=0) + 1.0) / 2.0).tolist())
            labels.extend(fp.labels)
    if not labels:
        return None
    return weighted_bce(probs, labels, pos_weight)


@dataclass
class PipelineResult:
    predictions: List[Tracklet]
    report: EvalReport
    failures: List[dict]


def predict_all(preps: Sequence[InstancePrep], fusion: FusionConfig, use_depth: bool,
                depth_bin: float) -> List[Tracklet]:
    out: List[Tracklet] = []
    for p in preps:
        out.extend(predict(p, fusion, use_depth, depth_bin))
    return out


def run_pipeline(ds: Dataset, cfg: RunConfig, threads: int = 1,
                 preps: Optional[List[InstancePrep]] = None) -> PipelineResult:
    if preps is None:
        preps = prepare(ds, cfg, threads)
    use_depth = resolve_depth(preps, cfg)
    preds = predict_all(preps, cfg.fusion, use_depth, cfg.depth_bin)
    report = evaluate(ds.instances, preds, cfg.thresholds, cfg.iou_aggregation, threads)
    failures = [
        {"video_id": p.instance.video_id, "human_id": p.instance.human.instance_id,
         "verb": p.instance.verb, "error": p.error}
        for p in preps if p.error is not None
    ]
    report.header = {
        "mode": "4d" if use_depth else "2d-only",
        "depth_boxes": use_depth,
        "n_failures": len(failures),
        "weighted_bce": _bce(preps, cfg.pos_weight),
        "fusion": cfg.fusion.to_dict(),
        "iou_aggregation": cfg.iou_aggregation,
    }
    return PipelineResult(preds, report, failures)


def tune(ds: Dataset, cfg: RunConfig, grid: Optional[Dict] = None, threads: int = 1,
         metric: str = "0.5"):
    """Grid search over the fusion parameters on a prepared dataset.

    Returns the best config and the full ``(config, score)`` table. The metric
    is a key of ``EvalReport.map`` or ``"miou_w"``.
    """
    preps = prepare(ds, cfg, threads)
    use_depth = resolve_depth(preps, cfg)

    def score(fusion: FusionConfig) -> float:
        preds = predict_all(preps, fusion, use_depth, cfg.depth_bin)
        rep = evaluate(ds.instances, preds, cfg.thresholds, cfg.iou_aggregation)
        return rep.miou_w if metric == "miou_w" else rep.map[metric]

    table = evaluate_grid(score, grid or cfg.grid or default_grid(), threads)
    best_cfg, best = table[0]
    for c, s in table[1:]:
        if s > best:
            best_cfg, best = c, s
    return best_cfg, table


def ranking(fp: FramePrep, fusion: FusionConfig, query: int = 0) -> List[int]:
    """Mask indices ordered by fused score for one query, best first."""
    fused = fusion.gamma * fp.s_m[query] + (1.0 - fusion.gamma) * fp.s_d
    return sorted(range(len(fused)), key=lambda i: (-fused[i], i))

