"""Axis-aligned boxes and run-length encoded binary masks.

Boxes live in continuous pixel coordinates with the half-open convention:
pixel ``(x, y)`` covers ``[x, x+1) x [y, y+1)``, so a mask's tight box is
``[xmin, ymin, xmax + 1, ymax + 1]`` and its area equals the pixel count of a
solid rectangle.

Masks are stored as COCO-style uncompressed RLE: column-major order, the
first run counts background pixels (possibly zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, EmptyMaskError, GeometryError


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        # Plain floats keep serialization canonical whatever the caller passed.
        for name in ("x1", "y1", "x2", "y2"):
            try:
                object.__setattr__(self, name, float(getattr(self, name)))
            except (TypeError, ValueError):
                raise GeometryError(f"box coordinate {name}={getattr(self, name)!r} is not a number") from None
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"non-finite box coordinates {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise GeometryError(f"box has negative extent: {coords}")

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "Box":
        if len(coords) != 4:
            raise GeometryError(f"box needs 4 coordinates, got {len(coords)}")
        return cls(*coords)

    def to_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, other: "Box") -> bool:
        return (self.x1 <= other.x1 and self.y1 <= other.y1
                and self.x2 >= other.x2 and self.y2 >= other.y2)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def hull(a: Box, b: Box) -> Box:
    """Smallest box enclosing both ``a`` and ``b``."""
    return Box(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def union_box(boxes: Iterable[Box]) -> Box:
    boxes = list(boxes)
    if not boxes:
        raise EmptyMaskError("union of zero boxes")
    out = boxes[0]
    for b in boxes[1:]:
        out = hull(out, b)
    return out


def iou(a: Box, b: Box) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        raise GeometryError("IoU undefined for two zero-area boxes")
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU in [-1, 1]; higher means closer."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        raise GeometryError("GIoU undefined for two zero-area boxes")
    enclosing = hull(a, b).area
    return inter / union - (enclosing - union) / enclosing


class Mask:
    """Binary mask of ``height`` x ``width`` pixels.

    ``depth``, when present, holds one value per foreground pixel in the same
    column-major order the RLE walks the grid.
    """

    def __init__(self, width: int, height: int, runs: Sequence[int],
                 depth: Optional[Sequence[float]] = None):
        if width <= 0 or height <= 0:
            raise DimensionError(f"mask dimensions must be positive, got {width}x{height}")
        runs = tuple(int(r) for r in runs)
        if any(r < 0 for r in runs):
            raise DimensionError("negative run length")
        if sum(runs) != width * height:
            raise DimensionError(
                f"run lengths sum to {sum(runs)}, expected {width * height}")
        self.width = int(width)
        self.height = int(height)
        self.runs = runs
        if depth is not None:
            depth = np.asarray(depth, dtype=np.float64)
            if depth.ndim != 1 or depth.shape[0] != self.area:
                raise DimensionError(
                    f"depth has {depth.size} values for {self.area} foreground pixels")
        self.depth = depth

    @classmethod
    def from_grid(cls, grid, depth=None) -> "Mask":
        """Build from a boolean ``(height, width)`` array.

        ``depth`` may be a full ``(height, width)`` depth image, in which case
        the foreground values are extracted, or an already-flat per-pixel list.
        """
        grid = np.asarray(grid, dtype=bool)
        if grid.ndim != 2:
            raise DimensionError("mask grid must be 2-D")
        h, w = grid.shape
        runs = encode_rle(grid)
        if depth is not None:
            depth = np.asarray(depth, dtype=np.float64)
            if depth.shape == grid.shape:
                depth = depth.ravel(order="F")[grid.ravel(order="F")]
        return cls(w, h, runs, depth)

    @classmethod
    def from_box(cls, width: int, height: int, box: Box, depth=None) -> "Mask":
        """Rasterize an integer-aligned box; ``depth`` may be a scalar."""
        grid = np.zeros((height, width), dtype=bool)
        grid[int(box.y1):int(box.y2), int(box.x1):int(box.x2)] = True
        if depth is not None and np.ndim(depth) == 0:
            depth = np.full(int(grid.sum()), float(depth))
        return cls.from_grid(grid, depth)

    @cached_property
    def grid(self) -> np.ndarray:
        return decode_rle(self.runs, self.width, self.height)

    @property
    def area(self) -> int:
        return sum(self.runs[1::2])

    @property
    def has_depth(self) -> bool:
        return self.depth is not None

    @property
    def shape(self):
        return (self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        if (self.width, self.height, self.runs) != (other.width, other.height, other.runs):
            return False
        if (self.depth is None) != (other.depth is None):
            return False
        return self.depth is None or bool(np.array_equal(self.depth, other.depth))

    def __repr__(self):
        return f"Mask({self.width}x{self.height}, area={self.area}, depth={self.has_depth})"


def encode_rle(grid) -> list:
    flat = np.asarray(grid, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return []
    # Positions where the value flips, plus both ends.
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def decode_rle(runs: Sequence[int], width: int, height: int) -> np.ndarray:
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, runs)
    if flat.size != width * height:
        raise DimensionError(f"RLE decodes to {flat.size} cells, expected {width * height}")
    return flat.reshape((height, width), order="F")


def mask_to_box(m: Mask) -> Box:
    if m.area == 0:
        raise EmptyMaskError("cannot box an empty mask")
    ys, xs = np.nonzero(m.grid)
    return Box(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def mask_intersection_area(a: Mask, b: Mask) -> int:
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a.grid & b.grid))
