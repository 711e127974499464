"""Command-line entry point.

Exit status is 0 on success, 2 when an input fails validation and 3 when a
batch finished but some instances or records failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RunConfig
from .dataset import Dataset, load_dataset
from .errors import ObjGroundError
from .fixture import generate_fixture
from .formats import (
    read_annotations,
    read_json,
    read_predictions,
    write_json,
    write_jsonl,
    write_predictions,
    write_tensor,
)
from .grounding import FusionConfig, match_gt_masks
from .layout4d import (
    BpsConfig,
    PointCloud,
    align_scene_to_human,
    apply_alignment,
    arrange_features,
    body_height,
    bps_encode,
    generate_base_points,
)
from .metrics import evaluate
from .pipeline import _map, run_pipeline, tune
from .splitter import EXACT_LIMIT, SplitProblem, solve_exact, solve_heuristic
from .taxonomy import TaxonomyGraph, build_class_tree, cluster_classes, load_overrides, toy_overrides

log = logging.getLogger("objground")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 2, 3


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_dict(read_json(args.config)) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("gamma", "tau", "beta")}
    if any(v is not None for v in overrides.values()):
        f = cfg.fusion
        cfg.fusion = FusionConfig(
            overrides["gamma"] if overrides["gamma"] is not None else f.gamma,
            overrides["tau"] if overrides["tau"] is not None else f.tau,
            overrides["beta"] if overrides["beta"] is not None else f.beta,
        )
    if getattr(args, "no_depth", False):
        cfg.use_depth = False
    if getattr(args, "iou_aggregation", None):
        cfg.iou_aggregation = args.iou_aggregation
    return cfg


def _write_report(out: Path, report) -> None:
    write_json(out / "report.json", report.to_dict())
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_fixture(args) -> int:
    m = generate_fixture(args.out, seed=args.seed or 0, n_videos=args.videos,
                         n_instances=args.instances, adversarial=args.adversarial,
                         with_depth=not args.no_depth, with_pointclouds=not args.no_pointclouds)
    log.info("wrote %d instances over %d videos to %s", m["n_instances"], len(m["videos"]), args.out)
    return EXIT_OK


def cmd_ground(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(args.dataset)
    res = run_pipeline(ds, cfg, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / "predictions.jsonl", res.predictions)
    _write_report(out, res.report)
    if res.failures:
        write_jsonl(out / "failures.jsonl", res.failures)
        log.error("%d of %d instances failed", len(res.failures), len(ds.instances))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    gt_path = Path(args.gt)
    if gt_path.is_dir():
        gt_path = gt_path / "annotations.jsonl"
    report = evaluate(read_annotations(gt_path), read_predictions(args.pred),
                      cfg.thresholds, cfg.iou_aggregation, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    return EXIT_OK


def cmd_match_gt(args) -> int:
    ds = load_dataset(args.dataset)
    records = []
    for video, ts in ds.keyframes():
        cand = ds.candidates(video, ts)
        for acc in cand.accurate:
            hits = match_gt_masks(cand.masks, acc["mask"])
            records.append({"video_id": video, "ts": ts, "human_id": acc["human_id"],
                            "object_id": acc["object_id"], "matches": sorted(hits)})
    write_jsonl(args.out, records)
    return EXIT_OK


def _align_group(ds: Dataset, group):
    video, ts, human = group
    front, _ = ds.pointcloud(video, ts, human, "human-front-surface")
    corresp, _ = ds.pointcloud(video, ts, human, "scene-front-surface")
    return align_scene_to_human(PointCloud(front, "human-front-surface"),
                                PointCloud(corresp, "scene-front-surface"))


def _guarded(fn):
    def run(x):
        try:
            return fn(x), None
        except (ObjGroundError, OSError) as exc:
            return None, f"{type(exc).__name__}: {exc}"
    return run


def cmd_align(args) -> int:
    ds = load_dataset(args.dataset)
    groups = ds.pointcloud_groups()
    results = _map(_guarded(lambda g: _align_group(ds, g)), groups, args.threads)
    records, failed = [], 0
    for (video, ts, human), (t, err) in zip(groups, results):
        rec = {"video_id": video, "ts": ts, "human_id": human}
        if err is None:
            rec.update(t.to_dict())
        else:
            rec["error"] = err
            failed += 1
        records.append(rec)
    write_json(args.out, records)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_bps(args) -> int:
    cfg = _load_config(args)
    bps_cfg = cfg.bps if args.seed is None else BpsConfig(cfg.bps.feature_dim, cfg.bps.radius_factor, args.seed)
    ds = load_dataset(args.dataset)
    groups = ds.pointcloud_groups()

    def encode(group):
        video, ts, human = group
        t = _align_group(ds, group)
        mesh_pts, meta = ds.pointcloud(video, ts, human, "human-mesh")
        scene_pts, _ = ds.pointcloud(video, ts, human, "scene")
        mesh = PointCloud(mesh_pts, "human-mesh")
        scene = apply_alignment(PointCloud(scene_pts, "scene"), t)
        base = generate_base_points(bps_cfg, meta["pelvis"], body_height(mesh))
        return t, bps_encode(base, mesh, scene, anchor=meta["pelvis"], method=args.method).values

    results = _map(_guarded(encode), groups, args.threads)
    out = Path(args.out)
    per_video: dict = {}
    alignments, failed = [], 0
    for (video, ts, human), (res, err) in zip(groups, results):
        rec = {"video_id": video, "ts": ts, "human_id": human}
        if err is not None:
            rec["error"] = err
            failed += 1
        else:
            rec.update(res[0].to_dict())
            per_video.setdefault(video, {})[(ts, human)] = res[1]
        alignments.append(rec)
    for video, feats in sorted(per_video.items()):
        block, keys = arrange_features(feats, cfg.n_3d, bps_cfg.feature_dim)
        write_tensor(out / "features3d" / f"{video}.stgt", block, "bps", bps_variant="norm",
                     slots=[[ts, human] for ts, human in keys], seed=bps_cfg.seed)
    write_json(out / "alignments.json", alignments)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_split(args) -> int:
    problem = SplitProblem.from_dict(read_json(args.problem))
    method = args.method
    if method == "auto":
        method = "exact" if problem.n_videos <= EXACT_LIMIT else "heuristic"
    if method == "exact":
        sol = solve_exact(problem, args.threads)
    else:
        sol = solve_heuristic(problem, seed=args.seed or 0, iterations=args.iterations)
    if not sol.feasible:
        log.warning("no feasible selection found; constraint slack is reported")
    write_json(args.out, sol.to_dict(problem))
    return EXIT_OK


def _read_words(args) -> List[str]:
    words = list(args.words)
    if args.classes:
        text = Path(args.classes).read_text(encoding="utf-8")
        words += [w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#")]
    return words


def cmd_taxonomy(args) -> int:
    if args.graph:
        g = TaxonomyGraph.from_tsv(args.graph)
        overrides = load_overrides(args.overrides) if args.overrides else {}
    else:
        g = TaxonomyGraph.toy()
        overrides = load_overrides(args.overrides) if args.overrides else toy_overrides()
    words = _read_words(args)
    if not words:
        raise ObjGroundError("no class names given")
    clusters = cluster_classes(words, g, overrides)
    tree, merges = build_class_tree(clusters, g, overrides, args.virtual_root)
    out = Path(args.out)
    write_json(out / "clusters.json", clusters)
    write_json(out / "tree.json", {"tree": tree.to_dict(),
                                   "merges": [list(m) for m in merges]})
    (out / "tree.txt").write_text(tree.outline(), encoding="utf-8")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    grid = read_json(args.grid) if args.grid else None
    ds = load_dataset(args.dataset)
    best, table = tune(ds, cfg, grid, args.threads, args.metric)
    write_json(args.out, {
        "metric": args.metric,
        "best": best.to_dict(),
        "table": [dict(c.to_dict(), score=s) for c, s in table],
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration JSON")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="objground", parents=[common],
                                     description="Spatio-temporal interacted-object grounding toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    def fusion_flags(p):
        p.add_argument("--gamma", type=float, help="weight of the semantic score")
        p.add_argument("--tau", type=float, help="fused-score selection threshold")
        p.add_argument("--beta", type=float, help="depth tolerance for the depth-aware box")
        p.add_argument("--no-depth", action="store_true", help="force 2D-only box generation")
        p.add_argument("--iou-aggregation", choices=("mean", "max"))

    p = add("fixture", cmd_fixture, "write a synthetic dataset")
    p.add_argument("out")
    p.add_argument("--videos", type=int, default=2)
    p.add_argument("--instances", type=int, default=3, help="instances per video")
    p.add_argument("--adversarial", action="store_true", help="queries point at distractor features")
    p.add_argument("--no-depth", action="store_true")
    p.add_argument("--no-pointclouds", action="store_true")

    p = add("ground", cmd_ground, "run grounding and evaluation over a dataset")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    fusion_flags(p)

    p = add("evaluate", cmd_evaluate, "score predictions against annotations")
    p.add_argument("--gt", required=True, help="annotations.jsonl or a dataset directory")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-aggregation", choices=("mean", "max"))

    p = add("match-gt", cmd_match_gt, "label candidate masks against accurate object masks")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)

    p = add("align", cmd_align, "align scene point clouds to the human front surface")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)

    p = add("bps", cmd_bps, "encode aligned human and scene clouds with base points")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("auto", "scan", "index"), default="auto")

    p = add("split", cmd_split, "select a balanced test subset")
    p.add_argument("problem")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("auto", "exact", "heuristic"), default="auto")
    p.add_argument("--iterations", type=int, default=1000)

    p = add("taxonomy", cmd_taxonomy, "cluster class names and build a class tree")
    p.add_argument("words", nargs="*")
    p.add_argument("--classes", help="file with one class name per line")
    p.add_argument("--graph", help="hypernym edges as child<TAB>parent (default: bundled toy graph)")
    p.add_argument("--overrides", help="word<TAB>node remapping table")
    p.add_argument("--virtual-root", help="join a multi-rooted graph under this name when merging")
    p.add_argument("--out", required=True)

    p = add("tune", cmd_tune, "grid-search the fusion parameters")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", help="JSON with gamma/tau/beta value lists")
    p.add_argument("--metric", default="0.5", help="mAP threshold key or miou_w")
    p.add_argument("--no-depth", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("threads", 1), ("seed", None), ("verbose", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ObjGroundError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
