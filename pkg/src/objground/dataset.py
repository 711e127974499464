"""Dataset directory layout, validation and lazy loading.

::

    root/
      manifest.json
      annotations.jsonl                       one grounding instance per line
      candidates/<video>/<ts>.json            candidate masks per keyframe
      features/<video>/<ts>.stgt              context feature map (H, W, D)
      queries/<video>/<human>_<ts>.stgt       decoder outputs (N_q, D), optional
      verb_embeddings.stgt                    (51, D) language features, optional
      pointclouds/<video>/<ts>_<human>_<role>.stgt  (+ .json sidecar), optional
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .formats import CandidateFile, read_annotations, read_candidates, read_json, read_tensor
from .metrics import GroundingInstance

VERBS = (
    "jump/leap", "lie/sleep", "sit", "answer phone", "brush teeth", "carry/hold", "catch",
    "chop", "clink glass", "close", "cook", "cut", "dig", "dress/put on clothing", "drink",
    "drive", "eat", "enter", "exit", "extract", "fishing", "hit", "kick", "lift/pick up",
    "listen", "open", "paint", "play board game", "play musical instrument", "play with pets",
    "point to", "press", "pull", "push", "put down", "read", "ride", "row boat", "sail boat",
    "shoot", "shovel", "smoke", "stir", "take a photo", "text on/look at a cellphone", "throw",
    "touch", "turn", "watch", "work on a computer", "write",
)
VERB_INDEX = {v: i for i, v in enumerate(VERBS)}


def candidate_path(root: Path, video: str, ts: int) -> Path:
    return root / "candidates" / video / f"{ts:06d}.json"


def feature_path(root: Path, video: str, ts: int) -> Path:
    return root / "features" / video / f"{ts:06d}.stgt"


def query_path(root: Path, video: str, human: str, ts: int) -> Path:
    return root / "queries" / video / f"{human}_{ts:06d}.stgt"


def pointcloud_path(root: Path, video: str, ts: int, human: str, role: str) -> Path:
    return root / "pointclouds" / video / f"{ts:06d}_{human}_{role}.stgt"


@dataclass
class Dataset:
    root: Path
    manifest: dict
    instances: List[GroundingInstance]
    _cache: Dict[Tuple, object] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def videos(self) -> List[str]:
        seen = dict.fromkeys(i.video_id for i in self.instances)
        return list(seen)

    def keyframes(self) -> List[Tuple[str, int]]:
        keys = {(i.video_id, t) for i in self.instances for t, _ in i.human.frames}
        return sorted(keys)

    def _cached(self, key, loader):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = loader()
        with self._lock:
            return self._cache.setdefault(key, value)

    def candidates(self, video: str, ts: int) -> CandidateFile:
        return self._cached(("cand", video, ts), lambda: read_candidates(candidate_path(self.root, video, ts)))

    def feature_map(self, video: str, ts: int) -> np.ndarray:
        return self._cached(("feat", video, ts),
                            lambda: read_tensor(feature_path(self.root, video, ts))[0].astype(np.float64))

    def queries(self, video: str, human: str, ts: int) -> Optional[np.ndarray]:
        p = query_path(self.root, video, human, ts)
        if not p.exists():
            return None
        return read_tensor(p)[0].astype(np.float64)

    def verb_embedding(self, verb: str) -> Optional[np.ndarray]:
        p = self.root / "verb_embeddings.stgt"
        if not p.exists():
            return None
        table = self._cached(("verbs",), lambda: read_tensor(p)[0].astype(np.float64))
        return table[VERB_INDEX[verb]]

    def pointcloud_groups(self) -> List[Tuple[str, int, str]]:
        """``(video, ts, human)`` triples that have point-cloud records."""
        base = self.root / "pointclouds"
        if not base.is_dir():
            return []
        groups = set()
        for sidecar in base.glob("*/*.json"):
            meta = read_json(sidecar)
            groups.add((str(meta["video_id"]), int(meta["ts"]), str(meta["human_id"])))
        return sorted(groups)

    def pointcloud(self, video: str, ts: int, human: str, role: str):
        """Points and sidecar metadata for one record."""
        p = pointcloud_path(self.root, video, ts, human, role)
        pts, _ = read_tensor(p)
        return pts.astype(np.float64), read_json(p.with_suffix(".json"))


def validate_instance(inst: GroundingInstance, root: Path, path: Path, lineno: int) -> None:
    if inst.verb not in VERB_INDEX:
        raise ValidationError(f"verb {inst.verb!r} is not one of the {len(VERBS)} interaction classes",
                              path, lineno)
    if not inst.objects:
        raise ValidationError("instance has no object tracklets", path, lineno)
    human_ts = {t for t, _ in inst.human.frames}
    for obj in inst.objects:
        missing = [t for t, _ in obj.frames if t not in human_ts]
        if missing:
            raise ValidationError(f"object {obj.instance_id} has keyframes {missing} outside the human tracklet",
                                  path, lineno)
    for t in sorted(human_ts):
        for p in (candidate_path(root, inst.video_id, t), feature_path(root, inst.video_id, t)):
            if not p.exists():
                raise ValidationError(f"referenced file {p} does not exist", path, lineno)


def load_dataset(path) -> Dataset:
    root = Path(path)
    manifest_file = root / "manifest.json"
    manifest = read_json(manifest_file) if manifest_file.exists() else {}
    ann = root / "annotations.jsonl"
    if not ann.exists():
        raise ValidationError("annotation file not found", ann)
    lines = [n for n, line in enumerate(ann.read_text(encoding="utf-8").splitlines(), start=1) if line.strip()]
    instances = read_annotations(ann)
    keys = set()
    for inst, lineno in zip(instances, lines):
        validate_instance(inst, root, ann, lineno)
        key = (inst.key, tuple(o.instance_id for o in inst.objects))
        if key in keys:
            raise ValidationError(f"duplicate instance {inst.key}", ann, lineno)
        keys.add(key)
    ds = Dataset(root, manifest, instances)
    if manifest:
        expected = manifest.get("n_instances")
        if expected is not None and expected != len(instances):
            raise ValidationError(f"manifest lists {expected} instances, annotations hold {len(instances)}",
                                  manifest_file)
    return ds
