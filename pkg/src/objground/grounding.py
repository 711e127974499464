"""Non-neural grounding head.

Pools object and human features from a context feature map, scores every
candidate mask against a query by cosine similarity fused with human-mask
GIoU, thresholds the fused scores and turns the chosen masks into boxes.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    DimensionError,
    EmptyMaskError,
    MissingDepthError,
    NoCandidatesError,
    OutOfBoundsError,
    UndefinedCosineError,
)
from .geometry import Box, Mask, giou, mask_intersection_area, mask_to_box, union_box

log = logging.getLogger(__name__)

MAX_CANDIDATES = 255
GT_MATCH_RATIO = 0.9
DEPTH_BIN = 0.05
ROI_SIZE = 7
ROI_SAMPLES = 2  # per axis, i.e. 4 samples per output cell
# Box A trails box B by this fraction of |score| so the two never tie.
SECONDARY_BOX_DISCOUNT = 0.01


@dataclass(frozen=True)
class FusionConfig:
    gamma: float = 0.8
    tau: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not -1.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [-1, 1], got {self.tau}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "tau": self.tau, "beta": self.beta}


@dataclass(frozen=True)
class ScoredMask:
    index: int
    s_m: float
    s_d: float
    s_f: float
    depth_mode: Optional[float] = None


# ---------------------------------------------------------------------------
# feature pooling


def resize_mask(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize sampling each target cell at its centre."""
    src_h, src_w = grid.shape
    rows = np.minimum(((np.arange(height) + 0.5) * src_h / height).astype(int), src_h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * src_w / width).astype(int), src_w - 1)
    return grid[np.ix_(rows, cols)]


def pool_object_feature(fc: np.ndarray, m: Mask, mode: str = "masked") -> np.ndarray:
    """Average the feature map under a mask.

    ``mode="masked"`` divides by the number of covered cells; ``"all"`` divides
    by every cell of the map, which makes the vector shrink with mask size.
    """
    fc = np.asarray(fc, dtype=np.float64)
    if fc.ndim != 3:
        raise DimensionError(f"feature map must be (H, W, D), got {fc.shape}")
    h, w, _ = fc.shape
    small = resize_mask(m.grid, h, w)
    n = int(small.sum())
    if n == 0:
        raise EmptyMaskError("mask vanishes after resizing to the feature map")
    total = fc[small].sum(axis=0)
    if mode == "masked":
        return total / n
    if mode == "all":
        return total / (h * w)
    raise ConfigurationError(f"unknown pooling mode {mode!r}")


def _bilinear_weights(coords: np.ndarray, size: int) -> np.ndarray:
    weights = np.zeros((coords.shape[0], size))
    for i, c in enumerate(coords):
        if c < -1.0 or c > size:
            continue
        c = max(c, 0.0)
        low = int(math.floor(c))
        if low >= size - 1:
            weights[i, size - 1] = 1.0
            continue
        frac = c - low
        weights[i, low] += 1.0 - frac
        weights[i, low + 1] += frac
    return weights


def roi_align(fmap: np.ndarray, box: Box, output_size: int = ROI_SIZE,
              sampling: int = ROI_SAMPLES) -> np.ndarray:
    """Bilinear ROI-align of a box given in feature-map coordinates.

    Uses the half-pixel (aligned) convention: cell ``(r, c)`` is centred at
    ``(r + 0.5, c + 0.5)``. Returns an ``(output_size, output_size, D)`` grid.
    """
    h, w, d = fmap.shape
    n = output_size * sampling
    offsets = (np.arange(n) + 0.5) / n
    ys = box.y1 - 0.5 + offsets * box.height
    xs = box.x1 - 0.5 + offsets * box.width
    wy = _bilinear_weights(ys, h)
    wx = _bilinear_weights(xs, w)
    samples = np.einsum("ih,hwd,jw->ijd", wy, fmap, wx)
    return samples.reshape(output_size, sampling, output_size, sampling, d).mean(axis=(1, 3))


def pool_human_query(fc_slices: Sequence[np.ndarray], hbox: Box,
                     spatial_scale: float = 1.0) -> np.ndarray:
    """Temporal mean, ROI-align of the human box, then spatial mean."""
    if len(fc_slices) == 0:
        raise DimensionError("need at least one temporal slice")
    stack = np.stack([np.asarray(f, dtype=np.float64) for f in fc_slices])
    fmap = stack.mean(axis=0)
    h, w, _ = fmap.shape
    box = Box(hbox.x1 * spatial_scale, hbox.y1 * spatial_scale,
              hbox.x2 * spatial_scale, hbox.y2 * spatial_scale)
    if box.x1 >= w or box.y1 >= h or box.x2 <= 0 or box.y2 <= 0:
        raise OutOfBoundsError(f"human box {hbox.to_list()} lies outside the {h}x{w} map")
    return roi_align(fmap, box).mean(axis=(0, 1))


# ---------------------------------------------------------------------------
# candidate handling


def cap_candidates(masks: Sequence[Mask], cap: int = MAX_CANDIDATES) -> List[int]:
    """Indices of the masks kept under the per-keyframe cap, in original order.

    On overflow the largest masks survive; equal areas keep the earlier mask.
    """
    if len(masks) <= cap:
        return list(range(len(masks)))
    log.warning("%d candidate masks exceed the cap of %d; keeping the largest", len(masks), cap)
    order = sorted(range(len(masks)), key=lambda i: (-masks[i].area, i))
    return sorted(order[:cap])


def match_gt_masks(proposals: Sequence[Mask], accurate: Mask,
                   threshold: float = GT_MATCH_RATIO) -> List[int]:
    """Proposals whose overlap with the accurate mask exceeds ``threshold``.

    The ratio is intersection over the proposal's own area and the comparison
    is strict and exact (rational arithmetic against the decimal threshold).
    """
    limit = Fraction(repr(float(threshold)))
    matched = []
    for i, p in enumerate(proposals):
        if p.shape != accurate.shape:
            raise DimensionError(f"proposal {i} is {p.shape}, accurate mask is {accurate.shape}")
        if p.area == 0:
            log.warning("proposal %d has zero area; skipped", i)
            continue
        if Fraction(mask_intersection_area(p, accurate), p.area) > limit:
            matched.append(i)
    return matched


# ---------------------------------------------------------------------------
# scoring and selection


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        raise UndefinedCosineError("cosine similarity of a zero vector")
    return float(np.dot(a / na, b / nb))


def score_masks(fq: np.ndarray, mask_feats: Sequence[np.ndarray], mask_boxes: Sequence[Box],
                hbox: Box, cfg: FusionConfig,
                depth_modes: Optional[Sequence[Optional[float]]] = None) -> List[ScoredMask]:
    fq = np.asarray(fq, dtype=np.float64)
    if len(mask_feats) != len(mask_boxes):
        raise DimensionError("one box per mask feature required")
    out = []
    for i, (f, b) in enumerate(zip(mask_feats, mask_boxes)):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != fq.shape:
            raise DimensionError(f"mask feature {i} has shape {f.shape}, query {fq.shape}")
        s_m = cosine(fq, f)
        s_d = giou(hbox, b)
        s_f = cfg.gamma * s_m + (1.0 - cfg.gamma) * s_d
        dm = depth_modes[i] if depth_modes is not None else None
        out.append(ScoredMask(i, s_m, s_d, s_f, dm))
    return out


def best_index(scored: Sequence[ScoredMask]) -> int:
    """Position of the highest fused score; the first one wins ties."""
    best = 0
    for pos in range(1, len(scored)):
        if scored[pos].s_f > scored[best].s_f:
            best = pos
    return best


def select_masks(scored: Sequence[ScoredMask], cfg: FusionConfig) -> List[int]:
    if not scored:
        raise NoCandidatesError("no scored masks to select from")
    picked = [s.index for s in scored if s.s_f > cfg.tau]
    if picked:
        return picked
    return [scored[best_index(scored)].index]


def depth_mode(m: Mask, bin_width: float = DEPTH_BIN) -> float:
    """Most populated depth bin of a mask, reported as the median depth inside it.

    Bins are ``floor(depth / bin_width)``; equally populated bins resolve to
    the shallower one.
    """
    if m.depth is None:
        raise MissingDepthError("mask carries no depth values")
    if m.depth.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    bins = np.floor(m.depth / bin_width).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    modal = uniq[np.argmax(counts)]  # np.unique sorts, argmax takes the first max
    return float(np.median(m.depth[bins == modal]))


def generate_boxes(masks: Sequence[Mask], scored: Sequence[ScoredMask], selected: Sequence[int],
                   cfg: FusionConfig, use_depth: bool,
                   bin_width: float = DEPTH_BIN) -> List[Tuple[Box, float]]:
    """Boxes for the selected masks, ranked best first, each with a confidence.

    Box A bounds every selected mask. With depth, box B bounds the top mask
    plus the selected masks within ``beta`` of its depth mode; B comes first
    with the top mask's fused score and A follows slightly discounted.
    """
    if not selected:
        raise NoCandidatesError("no masks selected")
    by_index = {s.index: s for s in scored}
    chosen = [by_index[i] for i in selected]
    top = chosen[best_index(chosen)]
    score = top.s_f
    box_a = union_box(mask_to_box(masks[s.index]) for s in chosen)
    if not use_depth:
        return [(box_a, score)]

    def mode_of(s: ScoredMask) -> float:
        return s.depth_mode if s.depth_mode is not None else depth_mode(masks[s.index], bin_width)

    ref = mode_of(top)
    cluster = [top] + [s for s in chosen
                       if s is not top and abs(mode_of(s) - ref) < cfg.beta]
    box_b = union_box(mask_to_box(masks[s.index]) for s in cluster)
    return [(box_b, score), (box_a, score - SECONDARY_BOX_DISCOUNT * abs(score))]


# ---------------------------------------------------------------------------
# loss and tuning


def weighted_bce(predictions: Sequence[float], labels: Sequence[int],
                 pos_weight: float = 10.0, eps: float = 1e-7) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        return 0.0
    p = np.clip(p, eps, 1.0 - eps)
    loss = -(pos_weight * y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss.mean())


def _steps(start: float, stop: float, step: float) -> List[float]:
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


def default_grid() -> Dict[str, List[float]]:
    return {
        "gamma": _steps(0.0, 1.0, 0.1),
        "tau": _steps(-0.2, 0.8, 0.1),
        "beta": [0.1, 0.25, 0.5, 1.0],
    }


def grid_cells(grid: Mapping[str, Sequence[float]]) -> List[FusionConfig]:
    try:
        axes = [sorted(set(float(v) for v in grid[k])) for k in ("gamma", "tau", "beta")]
    except KeyError as exc:
        raise ConfigurationError(f"grid is missing axis {exc}") from None
    if any(not axis for axis in axes):
        raise ConfigurationError("every grid axis needs at least one value")
    return [FusionConfig(g, t, b) for g, t, b in itertools.product(*axes)]


def evaluate_grid(eval_fn: Callable[[FusionConfig], float],
                  grid: Mapping[str, Sequence[float]],
                  threads: int = 1) -> List[Tuple[FusionConfig, float]]:
    cells = grid_cells(grid)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(eval_fn, cells))
    else:
        scores = [eval_fn(c) for c in cells]
    return list(zip(cells, (float(s) for s in scores)))


def grid_search(eval_fn: Callable[[FusionConfig], float],
                grid: Optional[Mapping[str, Sequence[float]]] = None,
                threads: int = 1) -> FusionConfig:
    """Config with the highest ``eval_fn`` score.

    Cells are visited in ascending (gamma, tau, beta) order and only a strictly
    better score replaces the incumbent, so ties go to the smallest cell.
    """
    table = evaluate_grid(eval_fn, grid if grid is not None else default_grid(), threads)
    best_cfg, best_score = table[0]
    for cfg, score in table[1:]:
        if score > best_score:
            best_cfg, best_score = cfg, score
    return best_cfg
