"""Deterministic synthetic datasets with oracle features.

Every scene is a 128x96 image whose masks are rectangles aligned to the
4-pixel feature stride, so pooled features are exact. Each grounding
instance owns one feature channel: cells under its object carry that
one-hot vector, distractor masks carry the last channel and background the
second to last. The oracle query for an instance is its own channel; the
adversarial query points at the distractor channel instead.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np

from .dataset import VERBS, candidate_path, feature_path, pointcloud_path, query_path
from .formats import CandidateFile, write_candidates, write_json, write_jsonl, write_tensor
from .geometry import Box, Mask
from .grounding import FusionConfig
from .splitter import SplitProblem

WIDTH, HEIGHT, STRIDE = 128, 96, 4
FOCAL = 100.0
LABELS = ("cup", "bottle", "bag", "box", "phone", "computer", "camera", "guitar", "chair",
          "table", "bicycle", "apple", "orange", "carrot", "coffee", "tea", "dog", "cat")
ORACLE_FUSION = FusionConfig(gamma=0.8, tau=0.5, beta=0.5)
HEATMAP_SIDE = 4


def _overlaps(a: Tuple[int, int, int, int], b: Tuple[int, int, int, int]) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _place(rng, occupied, min_side, max_side, tries=200):
    for _ in range(tries):
        w = STRIDE * int(rng.integers(min_side // STRIDE, max_side // STRIDE + 1))
        h = STRIDE * int(rng.integers(min_side // STRIDE, max_side // STRIDE + 1))
        x = STRIDE * int(rng.integers(0, (WIDTH - w) // STRIDE + 1))
        y = STRIDE * int(rng.integers(0, (HEIGHT - h) // STRIDE + 1))
        rect = (x, y, x + w, y + h)
        if not any(_overlaps(rect, o) for o in occupied):
            occupied.append(rect)
            return rect
    return None


def _depth_pixels(rng, n: int, depth: float) -> np.ndarray:
    values = np.full(n, depth)
    noisy = rng.random(n) < 0.15
    values[noisy] = np.round(depth + rng.uniform(-0.3, 0.3, noisy.sum()), 3)
    return values


def _backproject(u, v, z):
    return np.stack([(u - WIDTH / 2) * z / FOCAL, (v - HEIGHT / 2) * z / FOCAL, z], axis=1)


def _human_clouds(rng, hbox: Box, depth: float):
    n = 240
    u = rng.uniform(hbox.x1, hbox.x2, n)
    v = rng.uniform(hbox.y1, hbox.y2, n)
    z = depth + rng.uniform(0.0, 0.3, n)
    z[:60] = depth  # first 60 vertices form the visible front surface
    mesh = _backproject(u, v, z)
    return mesh, mesh[:60]


def generate_fixture(out, seed: int = 0, n_videos: int = 2, n_instances: int = 3,
                     adversarial: bool = False, with_depth: bool = True,
                     with_pointclouds: bool = True) -> dict:
    """Write a synthetic dataset under ``out`` and return its manifest.

    ``n_instances`` is per video. The same arguments always produce
    byte-identical files.
    """
    if n_videos < 1 or n_instances < 1:
        raise ValueError("n_videos and n_instances must be at least 1")
    root = Path(out)
    rng = np.random.default_rng(seed)
    dim = n_instances + 2
    bg_channel, distractor_channel = dim - 2, dim - 1
    fh, fw = HEIGHT // STRIDE, WIDTH // STRIDE
    annotations = []
    split_videos = []
    n_keyframes = 0

    for v in range(n_videos):
        video = f"vid{v:03d}"
        t0 = int(rng.integers(0, 900))
        n_frames = int(rng.integers(2, 5))
        stamps = list(range(t0, t0 + n_frames))
        n_keyframes += n_frames
        verbs = [VERBS[int(rng.integers(len(VERBS)))] for _ in range(n_instances)]
        labels = [LABELS[int(rng.integers(len(LABELS)))] for _ in range(n_instances)]
        depths = [float(rng.integers(4, 13)) / 2 for _ in range(n_instances)]
        tracks = {k: {"human": [], "object": []} for k in range(n_instances)}
        heat = np.zeros(HEATMAP_SIDE * HEATMAP_SIDE, dtype=int)

        for ts in stamps:
            occupied: List[Tuple[int, int, int, int]] = []
            fmap = np.zeros((fh, fw, dim), dtype=np.float32)
            fmap[..., bg_channel] = 1.0
            masks: List[Mask] = []
            accurate = []
            human_boxes = {}
            for k in range(n_instances):
                rect = _place(rng, occupied, 12, 36)
                if rect is None:
                    raise RuntimeError("could not place object; scene too crowded")
                x1, y1, x2, y2 = rect
                obj = Box(float(x1), float(y1), float(x2), float(y2))
                # Split wide objects into two parts, as a segmenter often does.
                if x2 - x1 >= 16 and rng.random() < 0.6:
                    cut = x1 + STRIDE * int(rng.integers(1, (x2 - x1) // STRIDE))
                    parts = [(x1, y1, cut, y2), (cut, y1, x2, y2)]
                else:
                    parts = [rect]
                for px1, py1, px2, py2 in parts:
                    part = Box(float(px1), float(py1), float(px2), float(py2))
                    n_pix = (px2 - px1) * (py2 - py1)
                    depth = _depth_pixels(rng, n_pix, depths[k]) if with_depth else None
                    masks.append(Mask.from_box(WIDTH, HEIGHT, part, depth))
                    fmap[py1 // STRIDE:py2 // STRIDE, px1 // STRIDE:px2 // STRIDE] = 0.0
                    fmap[py1 // STRIDE:py2 // STRIDE, px1 // STRIDE:px2 // STRIDE, k] = 1.0
                accurate.append({"human_id": f"h{k}", "object_id": f"o{k}",
                                 "mask": Mask.from_box(WIDTH, HEIGHT, obj)})
                # Human box overlaps or touches its object.
                hw = float(rng.integers(16, 33))
                hh = float(rng.integers(40, 73))
                hx = float(np.clip(rng.uniform(x1 - hw + 4, x2 - 4), 0, WIDTH - hw))
                hy = float(np.clip(rng.uniform(y1 - hh / 2, y2 - hh / 2), 0, HEIGHT - hh))
                hbox = Box(hx, hy, hx + hw, hy + hh)
                human_boxes[k] = hbox
                tracks[k]["human"].append({"ts": ts, "box": hbox.to_list()})
                tracks[k]["object"].append({"ts": ts, "box": obj.to_list()})
                cx = min(int((x1 + x2) / 2 * HEATMAP_SIDE / WIDTH), HEATMAP_SIDE - 1)
                cy = min(int((y1 + y2) / 2 * HEATMAP_SIDE / HEIGHT), HEATMAP_SIDE - 1)
                heat[cy * HEATMAP_SIDE + cx] += 1
            for _ in range(int(rng.integers(3, 7))):
                rect = _place(rng, occupied, 8, 32)
                if rect is None:
                    continue
                x1, y1, x2, y2 = rect
                n_pix = (x2 - x1) * (y2 - y1)
                d = float(rng.integers(2, 33)) / 4
                depth = _depth_pixels(rng, n_pix, d) if with_depth else None
                masks.append(Mask.from_box(WIDTH, HEIGHT, Box(*map(float, rect)), depth))
                fmap[y1 // STRIDE:y2 // STRIDE, x1 // STRIDE:x2 // STRIDE] = 0.0
                fmap[y1 // STRIDE:y2 // STRIDE, x1 // STRIDE:x2 // STRIDE, distractor_channel] = 1.0
            order = rng.permutation(len(masks))
            masks = [masks[i] for i in order]
            write_candidates(candidate_path(root, video, ts),
                             CandidateFile(video, ts, WIDTH, HEIGHT, masks, accurate))
            write_tensor(feature_path(root, video, ts), fmap, "context", stride=STRIDE)
            for k in range(n_instances):
                q = np.zeros((2, dim), dtype=np.float32)
                channel = distractor_channel if adversarial else k
                q[0, channel] = 1.0
                q[1, channel] = 2.0  # same direction, different norm
                write_tensor(query_path(root, video, f"h{k}", ts), q, "decoder-output")
                if with_pointclouds:
                    _write_clouds(rng, root, video, ts, f"h{k}", human_boxes[k], depths[k], masks)

        interactions = np.zeros(len(VERBS), dtype=int)
        objects = np.zeros(len(LABELS), dtype=int)
        for k in range(n_instances):
            interactions[VERBS.index(verbs[k])] += 1
            objects[LABELS.index(labels[k])] += 1
            annotations.append({
                "video_id": video,
                "verb": verbs[k],
                "human": {"id": f"h{k}", "frames": tracks[k]["human"]},
                "objects": [{"id": f"o{k}", "label": labels[k], "frames": tracks[k]["object"]}],
            })
        split_videos.append({"id": video, "interactions": interactions.tolist(),
                             "objects": objects.tolist(), "heatmap": heat.tolist()})

    write_jsonl(root / "annotations.jsonl", annotations)
    write_json(root / "config.json", {"fusion": ORACLE_FUSION.to_dict()})
    problem = SplitProblem.from_dict({"n_target": max(1, n_videos // 2), "videos": split_videos})
    write_json(root / "split_problem.json", problem.to_dict())
    manifest = {
        "format": 1,
        "seed": seed,
        "adversarial": adversarial,
        "videos": [f"vid{v:03d}" for v in range(n_videos)],
        "n_instances": len(annotations),
        "n_keyframes": n_keyframes,
        "image_size": [WIDTH, HEIGHT],
        "feature_dim": dim,
        "feature_stride": STRIDE,
    }
    write_json(root / "manifest.json", manifest)
    return manifest


def _write_clouds(rng, root: Path, video: str, ts: int, human: str, hbox: Box,
                  depth: float, masks: List[Mask]) -> None:
    mesh, front = _human_clouds(rng, hbox, depth)
    # Scene points live in an unaligned frame: p_raw = (p - shift) / scale.
    scale = float(rng.uniform(0.5, 2.0))
    shift = rng.uniform(-1.0, 1.0, 3)
    scene_pts = []
    for m in masks:
        if m.depth is None:
            continue
        # Foreground pixels in RLE (column-major) order line up with m.depth.
        cols, rows = np.nonzero(m.grid.T)
        step = max(1, cols.size // 40)
        scene_pts.append(_backproject(cols[::step] + 0.5, rows[::step] + 0.5, m.depth[::step]))
    u = rng.uniform(0, WIDTH, 200)
    v = rng.uniform(0, HEIGHT, 200)
    scene_pts.append(_backproject(u, v, np.full(200, 9.0)))
    scene = np.concatenate(scene_pts)
    records = {
        "human-mesh": mesh,
        "human-front-surface": front,
        "scene-front-surface": (front - shift) / scale,
        "scene": (scene - shift) / scale,
    }
    pelvis = mesh.mean(axis=0)
    for role, pts in records.items():
        path = pointcloud_path(root, video, ts, human, role)
        write_tensor(path, pts, role)
        write_json(path.with_suffix(".json"), {
            "video_id": video, "ts": ts, "human_id": human, "role": role,
            "pelvis": [float(c) for c in pelvis],
        })
