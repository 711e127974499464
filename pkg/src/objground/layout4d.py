"""Human/scene point clouds, scale-shift alignment and basis-point encoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import (
    ConfigurationError,
    DegenerateCloudError,
    DimensionError,
    EmptyCloudError,
    InsufficientPointsError,
    InvalidAnthropometryError,
)

ROLES = ("human-mesh", "scene", "human-front-surface", "scene-front-surface", "base")

# Linear scan below this many cloud points, k-d tree at or above it.
INDEX_THRESHOLD = 10_000


@dataclass
class PointCloud:
    points: np.ndarray
    role: str = "scene"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DimensionError(f"point cloud must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DimensionError("point cloud has non-finite coordinates")
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown point-cloud role {self.role!r}")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise EmptyCloudError("centroid of an empty cloud")
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class AlignmentTransform:
    scale: float
    displacement: Tuple[float, float, float]

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError(f"alignment scale must be positive, got {self.scale}")

    def to_dict(self) -> dict:
        return {"scale": self.scale, "displacement": list(self.displacement)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "AlignmentTransform":
        return cls(float(d["scale"]), tuple(float(v) for v in d["displacement"]))


@dataclass(frozen=True)
class BpsConfig:
    feature_dim: int = 256
    radius_factor: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim <= 0 or self.feature_dim % 2:
            raise ConfigurationError(f"feature_dim must be even and positive, got {self.feature_dim}")
        if not self.radius_factor > 0:
            raise ConfigurationError("radius_factor must be positive")

    @property
    def n_base(self) -> int:
        return self.feature_dim // 2


@dataclass
class BpsFeature:
    values: np.ndarray
    anchor: Tuple[float, float, float]
    variant: str = "norm"


def mean_pairwise_distance(points: np.ndarray) -> float:
    """Mean Euclidean distance over all N^2 ordered pairs, self-pairs included."""
    n = points.shape[0]
    return 2.0 * float(pdist(points).sum()) / (n * n)


def align_scene_to_human(human_front: PointCloud, scene_corresp: PointCloud) -> AlignmentTransform:
    """Scale and shift that bring the scene correspondences onto the human front surface.

    The scale is the ratio of mean pairwise distances (human over scene); the
    displacement is computed after scaling, so ``scene * s + b`` shares the
    human front-surface centroid.
    """
    h, s = human_front.points, scene_corresp.points
    if h.shape != s.shape:
        raise DimensionError(
            f"correspondence clouds differ in size: {h.shape[0]} vs {s.shape[0]}")
    if h.shape[0] < 2:
        raise InsufficientPointsError("alignment needs at least two correspondences")
    d_h = mean_pairwise_distance(h)
    d_s = mean_pairwise_distance(s)
    if d_s == 0:
        raise DegenerateCloudError("scene correspondences are all coincident")
    if d_h == 0:
        raise DegenerateCloudError("human front-surface points are all coincident")
    scale = d_h / d_s
    b = h.mean(axis=0) - (s * scale).mean(axis=0)
    return AlignmentTransform(scale, tuple(float(v) for v in b))


def apply_alignment(cloud: PointCloud, t: AlignmentTransform) -> PointCloud:
    pts = cloud.points * t.scale + np.asarray(t.displacement)
    return PointCloud(pts, cloud.role)


def body_height(mesh: PointCloud, up_axis: int = 1) -> float:
    """Vertical extent of the human mesh along ``up_axis``."""
    if len(mesh) == 0:
        raise EmptyCloudError("empty human mesh")
    col = mesh.points[:, up_axis]
    return float(col.max() - col.min())


def generate_base_points(cfg: BpsConfig, pelvis: Sequence[float], body_height: float) -> PointCloud:
    """Uniform-in-volume samples inside the sphere around the pelvis.

    Rejection sampling from the enclosing cube, seeded by ``cfg.seed``; the
    radius is ``cfg.radius_factor * body_height``.
    """
    if not body_height > 0:
        raise InvalidAnthropometryError(f"body height must be positive, got {body_height}")
    rng = np.random.default_rng(cfg.seed)
    need = cfg.n_base
    kept = []
    count = 0
    while count < need:
        cand = rng.uniform(-1.0, 1.0, size=(2 * need, 3))
        cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
        kept.append(cand)
        count += cand.shape[0]
    unit = np.concatenate(kept)[:need]
    radius = cfg.radius_factor * body_height
    return PointCloud(unit * radius + np.asarray(pelvis, dtype=np.float64), "base")


def _scan_min_distances(base: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    out = np.empty(base.shape[0])
    for i, (bx, by, bz) in enumerate(base):
        dx = cloud[:, 0] - bx
        dy = cloud[:, 1] - by
        dz = cloud[:, 2] - bz
        out[i] = np.sqrt(dx * dx + dy * dy + dz * dz).min()
    return out


def _indexed_min_distances(base: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    # The tree only shortlists candidates; distances are recomputed with the
    # scan formula so both paths agree bit for bit.
    tree = cKDTree(cloud)
    approx, _ = tree.query(base, k=1)
    out = np.empty(base.shape[0])
    for i, (b, r) in enumerate(zip(base, approx)):
        idx = tree.query_ball_point(b, r * (1 + 1e-9) + 1e-12)
        out[i] = _scan_min_distances(b[None, :], cloud[idx])[0]
    return out


def nearest_distances(base: np.ndarray, cloud: np.ndarray, method: str = "auto") -> np.ndarray:
    if cloud.shape[0] == 0:
        raise EmptyCloudError("nearest-point query against an empty cloud")
    if method == "auto":
        method = "index" if cloud.shape[0] >= INDEX_THRESHOLD else "scan"
    if method == "scan":
        return _scan_min_distances(base, cloud)
    if method == "index":
        return _indexed_min_distances(base, cloud)
    raise ConfigurationError(f"unknown nearest-point method {method!r}")


def bps_encode(base: PointCloud, human: PointCloud, scene: PointCloud,
               anchor: Optional[Sequence[float]] = None, method: str = "auto") -> BpsFeature:
    """Distances from each base point to its nearest human and scene point.

    The first half of ``values`` holds human-cloud distances, the second half
    scene-cloud distances, both indexed by base point.
    """
    if len(human) == 0 or len(scene) == 0:
        raise EmptyCloudError("BPS encoding needs non-empty human and scene clouds")
    hd = nearest_distances(base.points, human.points, method)
    sd = nearest_distances(base.points, scene.points, method)
    if anchor is None:
        anchor = base.points.mean(axis=0)
    return BpsFeature(np.concatenate([hd, sd]), tuple(float(v) for v in anchor))


def arrange_features(features: Mapping[Tuple[int, int], np.ndarray], n_slots: int,
                     dim: int) -> Tuple[np.ndarray, list]:
    """Pack per-(frame, human) vectors into an ``(n_slots, dim)`` block.

    Keys are ordered frame-major then human id; surplus entries are dropped and
    missing slots are zero. Returns the block and the keys occupying slots.
    """
    keys = sorted(features)[:n_slots]
    out = np.zeros((n_slots, dim))
    for row, key in enumerate(keys):
        vec = np.asarray(features[key], dtype=np.float64)
        if vec.shape != (dim,):
            raise DimensionError(f"feature for {key} has shape {vec.shape}, expected ({dim},)")
        out[row] = vec
    return out, keys

