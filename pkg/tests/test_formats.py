import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objground.config import RunConfig
from objground.errors import ConfigurationError, ValidationError
from objground.formats import (
    CandidateFile,
    instance_to_record,
    read_annotations,
    read_candidates,
    read_json,
    read_predictions,
    read_tensor,
    record_to_instance,
    write_annotations,
    write_candidates,
    write_json,
    write_predictions,
    write_tensor,
)
from objground.geometry import Box, Mask
from objground.grounding import FusionConfig
from objground.metrics import GroundingInstance, Tracklet


def test_tensor_layout_bytes(tmp_path):
    p = tmp_path / "t.stgt"
    write_tensor(p, [[1.0, 2.0]], "context")
    raw = p.read_bytes()
    assert raw[:5] == b"STGT\x01"
    n = int.from_bytes(raw[5:9], "little")
    header = json.loads(raw[9:9 + n])
    assert header == {"dtype": "<f4", "role": "context", "shape": [1, 2]}
    assert raw[9 + n:] == np.array([1.0, 2.0], dtype="<f4").tobytes()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(0, 1000))
def test_tensor_round_trip(tmp_path_factory, shape, seed):
    p = tmp_path_factory.mktemp("t") / "x.stgt"
    arr = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    write_tensor(p, arr, "bps", bps_variant="norm")
    back, header = read_tensor(p)
    assert np.array_equal(back, arr) and back.shape == arr.shape
    assert header["bps_variant"] == "norm"


def test_tensor_corruption(tmp_path):
    p = tmp_path / "t.stgt"
    write_tensor(p, np.zeros(4), "scene")
    raw = p.read_bytes()
    (tmp_path / "bad_magic").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValidationError):
        read_tensor(tmp_path / "bad_magic")
    (tmp_path / "short").write_bytes(raw[:-4])
    with pytest.raises(ValidationError):
        read_tensor(tmp_path / "short")


def _instance():
    human = Tracklet("v1", "h0", "sit", [(3, Box(0, 0, 10, 20)), (4, Box(1, 0, 11, 20))])
    obj = Tracklet("v1", "o0", "sit", [(3, Box(5.5, 5, 9, 9.25))], label="chair")
    return GroundingInstance("v1", human, "sit", [obj])


def test_annotation_round_trip(tmp_path):
    inst = _instance()
    assert record_to_instance(instance_to_record(inst)) == inst
    p = tmp_path / "a.jsonl"
    write_annotations(p, [inst, inst])
    assert read_annotations(p) == [inst, inst]
    first = p.read_bytes()
    write_annotations(p, read_annotations(p))
    assert p.read_bytes() == first


def test_annotation_errors_carry_line(tmp_path):
    p = tmp_path / "a.jsonl"
    good = json.dumps(instance_to_record(_instance()))
    bad = json.loads(good)
    bad["human"]["frames"][0]["ts"] = 1.5
    p.write_text(good + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(ValidationError) as exc:
        read_annotations(p)
    assert exc.value.line == 2
    p.write_text(good + "\n{not json\n")
    with pytest.raises(ValidationError) as exc:
        read_annotations(p)
    assert exc.value.line == 2


def test_prediction_round_trip(tmp_path):
    preds = [Tracklet("v", "h0", "eat", [(1, Box(0, 0, 2, 2)), (2, Box(0, 0, 3, 3))], [0.25, 0.1 + 0.2])]
    p = tmp_path / "p.jsonl"
    write_predictions(p, preds)
    assert read_predictions(p) == preds


def test_candidate_round_trip(tmp_path):
    masks = [Mask.from_box(8, 6, Box(1, 1, 4, 3), [1.0, 1.25, 2.5, 0.1 + 0.2, 7.0, 1e-9]),
             Mask.from_box(8, 6, Box(0, 0, 8, 6))]
    acc = [{"human_id": "h0", "object_id": "o0", "mask": Mask.from_box(8, 6, Box(1, 1, 5, 5))}]
    cf = CandidateFile("v", 12, 8, 6, masks, acc)
    p = tmp_path / "c.json"
    write_candidates(p, cf)
    back = read_candidates(p)
    assert back.masks == masks
    assert back.accurate[0]["mask"] == acc[0]["mask"]
    assert back.to_dict() == cf.to_dict()
    assert not back.has_depth


def test_candidate_validation(tmp_path):
    p = tmp_path / "c.json"
    write_json(p, {"video_id": "v", "ts": 0, "width": 2, "height": 2, "masks": [{"counts": [1, 1]}]})
    with pytest.raises(ValidationError):
        read_candidates(p)


def test_run_config_round_trip_and_validation(caplog):
    cfg = RunConfig(fusion=FusionConfig(0.3, 0.1, 0.25), n_o=200, use_depth=False)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.candidate_cap == 200
    with caplog.at_level(logging.WARNING):
        big = RunConfig.from_dict({"n_o": 256})
    assert big.candidate_cap == 255
    assert "255" in caplog.text
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"gama": 0.5})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"fusion": {"gamma": 2.0}})
    with pytest.raises(ConfigurationError):
        RunConfig(iou_aggregation="median")


def test_read_json_error(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{\n  oops\n}")
    with pytest.raises(ValidationError) as exc:
        read_json(p)
    assert exc.value.line == 2
