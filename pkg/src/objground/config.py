"""Run configuration loaded from JSON."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

from .errors import ConfigurationError
from .grounding import DEPTH_BIN, MAX_CANDIDATES, FusionConfig
from .layout4d import BpsConfig
from .metrics import THRESHOLDS

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    bps: BpsConfig = field(default_factory=BpsConfig)
    thresholds: Tuple[float, ...] = THRESHOLDS
    iou_aggregation: str = "mean"
    pooling: str = "masked"
    use_depth: Optional[bool] = None  # None: use depth when every candidate mask has it
    depth_bin: float = DEPTH_BIN
    n_o: int = 256
    n_q: int = 24
    n_3d: int = 256
    pos_weight: float = 10.0
    grid: Optional[dict] = None

    def __post_init__(self):
        if self.iou_aggregation not in ("mean", "max"):
            raise ConfigurationError(f"iou_aggregation must be 'mean' or 'max', got {self.iou_aggregation!r}")
        if self.pooling not in ("masked", "all"):
            raise ConfigurationError(f"pooling must be 'masked' or 'all', got {self.pooling!r}")
        if not all(0 < t < 1 for t in self.thresholds):
            raise ConfigurationError("IoU thresholds must lie in (0, 1)")
        if min(self.n_o, self.n_q, self.n_3d) <= 0:
            raise ConfigurationError("n_o, n_q and n_3d must be positive")
        if not self.depth_bin > 0:
            raise ConfigurationError("depth_bin must be positive")

    @property
    def candidate_cap(self) -> int:
        """Masks kept per keyframe: ``n_o`` is a padded width, at most 255 are real."""
        return min(self.n_o, MAX_CANDIDATES)

    def to_dict(self) -> dict:
        return {
            "fusion": self.fusion.to_dict(),
            "bps": {"feature_dim": self.bps.feature_dim, "radius_factor": self.bps.radius_factor,
                    "seed": self.bps.seed},
            "thresholds": list(self.thresholds),
            "iou_aggregation": self.iou_aggregation,
            "pooling": self.pooling,
            "use_depth": self.use_depth,
            "depth_bin": self.depth_bin,
            "n_o": self.n_o,
            "n_q": self.n_q,
            "n_3d": self.n_3d,
            "pos_weight": self.pos_weight,
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "fusion" in d:
                d["fusion"] = FusionConfig(**d["fusion"])
            if "bps" in d:
                d["bps"] = BpsConfig(**d["bps"])
            if "thresholds" in d:
                d["thresholds"] = tuple(float(t) for t in d["thresholds"])
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None
        if cfg.n_o > MAX_CANDIDATES:
            log.warning("n_o=%d exceeds the %d-mask cap; extra slots are padding only",
                        cfg.n_o, MAX_CANDIDATES)
        return cfg
