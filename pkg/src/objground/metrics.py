"""Tracklet-level grounding metrics.

For every ground-truth object tracklet the predictions of its (video, human,
verb) group are ranked by score. AP is the reciprocal rank of the first
prediction whose tracklet IoU exceeds the threshold; the weighted mIoU
averages prediction IoUs with weights 1/rank.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .geometry import Box, giou, iou

log = logging.getLogger(__name__)

THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)
SIZE_BINS = ("small", "medium", "large")
DISTANCE_BINS = ("far", "medium", "close")
SIZE_EDGES = (0.3, 1.0)
DISTANCE_EDGES = (0.04, 0.22)


@dataclass
class Tracklet:
    video_id: str
    instance_id: str
    verb: str
    frames: List[Tuple[int, Box]]
    frame_scores: Optional[List[float]] = None
    label: Optional[str] = None

    def __post_init__(self):
        if not self.frames:
            raise ValueError(f"tracklet {self.video_id}/{self.instance_id} has no frames")
        ts = [t for t, _ in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"tracklet {self.video_id}/{self.instance_id} timestamps not strictly increasing")
        if self.frame_scores is not None and len(self.frame_scores) != len(self.frames):
            raise ValueError("one score per frame required")

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.video_id, self.instance_id, self.verb)

    @property
    def score(self) -> float:
        if not self.frame_scores:
            return 0.0
        return sum(self.frame_scores) / len(self.frame_scores)

    def boxes_by_ts(self) -> Dict[int, Box]:
        return dict(self.frames)


@dataclass
class GroundingInstance:
    """One annotated sub-clip: a human tracklet, a verb and its object tracklets."""

    video_id: str
    human: Tracklet
    verb: str
    objects: List[Tracklet]

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.video_id, self.human.instance_id, self.verb)


@dataclass
class BinStats:
    count: int = 0
    map: Dict[str, float] = field(default_factory=dict)
    miou_w: float = 0.0


@dataclass
class EvalReport:
    map: Dict[str, float]
    miou_w: float
    miou: float
    n_instances: int
    size_bins: Dict[str, BinStats]
    distance_bins: Dict[str, BinStats]
    n_unbinned: int = 0
    header: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def bins(d):
            return {k: {"count": v.count, "map": dict(v.map), "miou_w": v.miou_w} for k, v in d.items()}
        return {
            "header": dict(self.header),
            "n_instances": self.n_instances,
            "n_unbinned": self.n_unbinned,
            "map": dict(self.map),
            "miou_w": self.miou_w,
            "miou": self.miou,
            "size_bins": bins(self.size_bins),
            "distance_bins": bins(self.distance_bins),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        def bins(raw):
            return {k: BinStats(v["count"], dict(v["map"]), v["miou_w"]) for k, v in raw.items()}
        return cls(dict(d["map"]), d["miou_w"], d["miou"], d["n_instances"],
                   bins(d["size_bins"]), bins(d["distance_bins"]), d.get("n_unbinned", 0),
                   dict(d.get("header", {})))

    def to_csv(self) -> str:
        """Rows per split, columns ``mAP@t ... mIoU_w`` like the usual results table."""
        keys = list(self.map)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["split", "count"] + [f"mAP@{k}" for k in keys] + ["mIoU_w"])
        writer.writerow(["all", self.n_instances] + [repr(self.map[k]) for k in keys] + [repr(self.miou_w)])
        for group, table in (("size", self.size_bins), ("distance", self.distance_bins)):
            for name, st in table.items():
                writer.writerow([f"{group}:{name}", st.count]
                                + [repr(st.map.get(k, 0.0)) for k in keys] + [repr(st.miou_w)])
        return buf.getvalue()


def threshold_key(t: float) -> str:
    return f"{t:g}"


def tracklet_iou(gt: Tracklet, pred: Tracklet, aggregation: str = "mean") -> float:
    """Per-keyframe box IoU aggregated over the GT keyframes.

    A GT keyframe the prediction does not cover scores 0. ``aggregation`` is
    ``"mean"`` (default) or ``"max"``.
    """
    boxes = pred.boxes_by_ts()
    per_frame = [iou(b, boxes[t]) if t in boxes else 0.0 for t, b in gt.frames]
    if aggregation == "mean":
        return sum(per_frame) / len(per_frame)
    if aggregation == "max":
        return max(per_frame)
    raise ValueError(f"unknown aggregation {aggregation!r}")


def rank_predictions(preds: Sequence[Tracklet]) -> List[Tracklet]:
    # sorted() is stable, so equal scores keep their input order.
    return sorted(preds, key=lambda p: -p.score)


def _ranked_ious(gt: Tracklet, preds: Sequence[Tracklet], aggregation: str) -> List[float]:
    return [tracklet_iou(gt, p, aggregation) for p in rank_predictions(preds)]


def _ap_from_ious(ious: Sequence[float], iou_thresh: float) -> float:
    for rank, v in enumerate(ious, start=1):
        if v > iou_thresh:
            return 1.0 / rank
    return 0.0


def _wmiou_from_ious(ious: Sequence[float]) -> float:
    if not ious:
        return 0.0
    num = sum(v / rank for rank, v in enumerate(ious, start=1))
    den = sum(1.0 / rank for rank in range(1, len(ious) + 1))
    return num / den


def instance_ap(gt: Tracklet, preds: Sequence[Tracklet], iou_thresh: float,
                aggregation: str = "mean") -> float:
    if not preds:
        log.warning("no predictions for %s", gt.key)
        return 0.0
    return _ap_from_ious(_ranked_ious(gt, preds, aggregation), iou_thresh)


def weighted_miou(gt: Tracklet, preds: Sequence[Tracklet], aggregation: str = "mean") -> float:
    if not preds:
        log.warning("no predictions for %s", gt.key)
        return 0.0
    return _wmiou_from_ious(_ranked_ious(gt, preds, aggregation))


def bin_instance(obj: Tracklet, human: Tracklet) -> Optional[Tuple[str, str]]:
    """Size and distance bins from the object/human area ratio and their GIoU.

    Averages over keyframes both tracklets share; ``None`` if they share none.
    """
    hboxes = human.boxes_by_ts()
    shared = [(hboxes[t], ob) for t, ob in obj.frames if t in hboxes]
    if not shared:
        return None
    r_size = sum(ob.area / hb.area for hb, ob in shared) / len(shared)
    r_dist = sum(giou(hb, ob) for hb, ob in shared) / len(shared)
    return _bin(r_size, SIZE_EDGES, SIZE_BINS), _bin(r_dist, DISTANCE_EDGES, DISTANCE_BINS)


def _bin(value: float, edges: Tuple[float, float], names: Tuple[str, str, str]) -> str:
    if value <= edges[0]:
        return names[0]
    if value <= edges[1]:
        return names[1]
    return names[2]


@dataclass
class _InstanceResult:
    ap: Dict[str, float]
    miou_w: float
    miou: float
    bins: Optional[Tuple[str, str]]


def _evaluate_one(obj: Tracklet, human: Tracklet, preds: Sequence[Tracklet],
                  thresholds: Sequence[float], aggregation: str) -> _InstanceResult:
    ious = _ranked_ious(obj, preds, aggregation)
    ap = {threshold_key(t): _ap_from_ious(ious, t) for t in thresholds}
    # Unweighted mIoU keeps the best-matching prediction.
    best = max(_ranked_ious(obj, preds, "max")) if preds else 0.0
    return _InstanceResult(ap, _wmiou_from_ious(ious), best, bin_instance(obj, human))


def evaluate(gt_set: Sequence[GroundingInstance], pred_set: Sequence[Tracklet],
             thresholds: Sequence[float] = THRESHOLDS, aggregation: str = "mean",
             threads: int = 1) -> EvalReport:
    """Average the per-instance metrics over every GT object tracklet.

    Predictions join GT by (video, human id, verb); a GT object without any
    prediction scores 0 everywhere. Each object tracklet of a multi-object
    instance is evaluated separately.
    """
    grouped: Dict[Tuple[str, str, str], List[Tracklet]] = {}
    for p in pred_set:
        grouped.setdefault(p.key, []).append(p)
    jobs = [(obj, inst.human, grouped.get(inst.key, [])) for inst in gt_set for obj in inst.objects]

    def run(job):
        return _evaluate_one(*job, thresholds, aggregation)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    keys = [threshold_key(t) for t in thresholds]
    n = len(results)

    def summarize(rs: List[_InstanceResult]) -> BinStats:
        if not rs:
            return BinStats(0, {k: 0.0 for k in keys}, 0.0)
        return BinStats(len(rs), {k: sum(r.ap[k] for r in rs) / len(rs) for k in keys},
                        sum(r.miou_w for r in rs) / len(rs))

    overall = summarize(results)
    size_bins = {name: summarize([r for r in results if r.bins and r.bins[0] == name])
                 for name in SIZE_BINS}
    dist_bins = {name: summarize([r for r in results if r.bins and r.bins[1] == name])
                 for name in DISTANCE_BINS}
    return EvalReport(
        map=overall.map,
        miou_w=overall.miou_w,
        miou=sum(r.miou for r in results) / n if n else 0.0,
        n_instances=n,
        size_bins=size_bins,
        distance_bins=dist_bins,
        n_unbinned=sum(1 for r in results if r.bins is None),
    )
