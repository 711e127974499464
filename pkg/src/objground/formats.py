"""On-disk formats: STGT tensors, JSON/JSONL documents and candidate files.

STGT layout::

    b"STGT" | version (1 byte) | header length (uint32 LE) | JSON header | payload

The header is canonical JSON (sorted keys) holding at least ``shape``,
``dtype`` ("<f4") and ``role``; the payload is row-major little-endian
float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import GeometryError, ValidationError
from .geometry import Box, Mask
from .metrics import GroundingInstance, Tracklet

MAGIC = b"STGT"
VERSION = 1
PathLike = Union[str, Path]


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: PathLike, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path: PathLike):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None


def write_jsonl(path: PathLike, records: Iterable[Mapping]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def iter_jsonl(path: PathLike) -> Iterator[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON: {exc.msg}", path, lineno) from None


# ---------------------------------------------------------------------------
# tensors


def write_tensor(path: PathLike, data, role: str, **extra) -> None:
    arr = np.ascontiguousarray(np.asarray(data, dtype="<f4"))
    header = dict(extra)
    header.update({"shape": list(arr.shape), "dtype": "<f4", "role": role})
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: PathLike) -> Tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValidationError("not an STGT tensor (bad magic)", path)
    if raw[4] != VERSION:
        raise ValidationError(f"unsupported STGT version {raw[4]}", path)
    (n,) = struct.unpack("<I", raw[5:9])
    try:
        header = json.loads(raw[9:9 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ValidationError("corrupt STGT header", path) from None
    if header.get("dtype") != "<f4":
        raise ValidationError(f"unsupported dtype {header.get('dtype')!r}", path)
    shape = tuple(header["shape"])
    payload = raw[9 + n:]
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(payload) != expected:
        raise ValidationError(f"payload has {len(payload)} bytes, header implies {expected}", path)
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy(), header


# ---------------------------------------------------------------------------
# tracklets


def _frames(raw, path, lineno, with_scores=False):
    frames, scores = [], []
    try:
        for f in raw:
            ts = f["ts"]
            if isinstance(ts, bool) or not isinstance(ts, int):
                raise ValidationError(f"timestamp {ts!r} is not an integral second", path, lineno)
            frames.append((ts, Box.from_list(f["box"])))
            if with_scores:
                scores.append(float(f["score"]))
    except (KeyError, TypeError, GeometryError) as exc:
        raise ValidationError(f"malformed frame entry ({exc})", path, lineno) from None
    return frames, scores


def _tracklet(video, ident, verb, raw, path, lineno, with_scores=False, label=None) -> Tracklet:
    frames, scores = _frames(raw, path, lineno, with_scores)
    try:
        return Tracklet(video, ident, verb, frames, scores if with_scores else None, label)
    except ValueError as exc:
        raise ValidationError(str(exc), path, lineno) from None


def instance_to_record(inst: GroundingInstance) -> dict:
    return {
        "video_id": inst.video_id,
        "verb": inst.verb,
        "human": {"id": inst.human.instance_id,
                  "frames": [{"ts": t, "box": b.to_list()} for t, b in inst.human.frames]},
        "objects": [
            {"id": o.instance_id, "label": o.label,
             "frames": [{"ts": t, "box": b.to_list()} for t, b in o.frames]}
            for o in inst.objects
        ],
    }


def record_to_instance(rec: Mapping, path=None, lineno=None) -> GroundingInstance:
    try:
        video, verb = str(rec["video_id"]), str(rec["verb"])
        h = rec["human"]
        human = _tracklet(video, str(h["id"]), verb, h["frames"], path, lineno)
        objects = [
            _tracklet(video, str(o["id"]), verb, o["frames"], path, lineno, label=o.get("label"))
            for o in rec["objects"]
        ]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"missing or malformed field {exc}", path, lineno) from None
    return GroundingInstance(video, human, verb, objects)


def read_annotations(path: PathLike) -> List[GroundingInstance]:
    return [record_to_instance(rec, path, n) for n, rec in iter_jsonl(path)]


def write_annotations(path: PathLike, instances: Iterable[GroundingInstance]) -> None:
    write_jsonl(path, (instance_to_record(i) for i in instances))


def prediction_to_record(p: Tracklet) -> dict:
    return {
        "video_id": p.video_id,
        "human_id": p.instance_id,
        "verb": p.verb,
        "frames": [{"ts": t, "box": b.to_list(), "score": s}
                   for (t, b), s in zip(p.frames, p.frame_scores or [0.0] * len(p.frames))],
    }


def read_predictions(path: PathLike) -> List[Tracklet]:
    out = []
    for n, rec in iter_jsonl(path):
        try:
            out.append(_tracklet(str(rec["video_id"]), str(rec["human_id"]), str(rec["verb"]),
                                 rec["frames"], path, n, with_scores=True))
        except KeyError as exc:
            raise ValidationError(f"missing field {exc}", path, n) from None
    return out


def write_predictions(path: PathLike, preds: Iterable[Tracklet]) -> None:
    write_jsonl(path, (prediction_to_record(p) for p in preds))


# ---------------------------------------------------------------------------
# candidate files


class CandidateFile:
    """Candidate masks for one keyframe plus optional box-prompted accurate masks."""

    def __init__(self, video_id: str, ts: int, width: int, height: int,
                 masks: List[Mask], accurate: Optional[List[dict]] = None):
        self.video_id = video_id
        self.ts = ts
        self.width = width
        self.height = height
        self.masks = masks
        # entries: {"human_id", "object_id", "mask": Mask}
        self.accurate = accurate or []

    @property
    def has_depth(self) -> bool:
        return bool(self.masks) and all(m.has_depth for m in self.masks)

    def to_dict(self) -> dict:
        def enc(m: Mask) -> dict:
            d = {"counts": list(m.runs)}
            if m.depth is not None:
                d["depth"] = [float(v) for v in m.depth]
            return d

        return {
            "video_id": self.video_id,
            "ts": self.ts,
            "width": self.width,
            "height": self.height,
            "masks": [enc(m) for m in self.masks],
            "accurate": [
                {"human_id": a["human_id"], "object_id": a["object_id"], "counts": list(a["mask"].runs)}
                for a in self.accurate
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping, path=None) -> "CandidateFile":
        try:
            w, h = int(d["width"]), int(d["height"])
            masks = [Mask(w, h, m["counts"], m.get("depth")) for m in d["masks"]]
            accurate = [
                {"human_id": str(a["human_id"]), "object_id": str(a["object_id"]),
                 "mask": Mask(w, h, a["counts"])}
                for a in d.get("accurate", [])
            ]
            return cls(str(d["video_id"]), int(d["ts"]), w, h, masks, accurate)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed candidate file ({exc})", path) from None
        except ValueError as exc:
            raise ValidationError(str(exc), path) from None


def read_candidates(path: PathLike) -> CandidateFile:
    return CandidateFile.from_dict(read_json(path), path)


def write_candidates(path: PathLike, cf: CandidateFile) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(cf.to_dict(), sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")
