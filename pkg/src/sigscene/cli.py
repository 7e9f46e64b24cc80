"""Batch command line: ``synth``, ``run``, ``score`` and ``validate``.

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .clustering import ClusterAssignment, read_assignment
from .embedding import read_embeddings, write_embeddings
from .exceptions import InvalidParam, SigsceneError
from .pipeline import (
    RunConfig,
    cluster_diagnostics,
    dumps_report,
    format_submission,
    process_dataset,
    read_config_file,
    read_submission,
)
from .scoring import read_ground_truth, score_dataset, write_ground_truth
from .sigreg import CalibrationCache
from .synthgen import SynthSpec, generate_dataset

log = logging.getLogger("sigscene")

# flag dest -> RunConfig field
RUN_FLAGS = {
    "method": "method",
    "t_grid": "t_grid",
    "eps_grid": "eps_grid",
    "min_pts_grid": "min_pts_grid",
    "consensus": "consensus",
    "eps_k": "eps_k",
    "ratio_max": "ratio_max",
    "mean_max": "mean_max",
    "min_cluster_size": "min_cluster_size",
    "slices": "slices",
    "seed": "seed",
    "alpha": "alpha",
    "target_outliers": "target_outliers",
    "thresholds": "thresholds",
}


class CommandError(Exception):
    """Runtime failure reported with exit code 1."""


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_run_options(p, with_method=True):
    p.add_argument("--config", help="flat key=value file; flags override it")
    if with_method:
        p.add_argument("--method", choices=["gaussian-cosine", "char-fn"])
        p.add_argument("--t-grid", help="comma-separated frequencies for char-fn")
        p.add_argument("--eps-grid", help="comma-separated DBSCAN radii (default: around the k-distance elbow)")
        p.add_argument("--min-pts-grid", help="comma-separated DBSCAN min_pts values (default 2,3)")
        p.add_argument("--consensus", type=float, help="co-association threshold (default 0.5)")
        p.add_argument("--eps-k", type=int, help="neighbour rank for the radius estimate")
        p.add_argument("--min-cluster-size", type=int, help="smallest scene kept (default 3)")
        p.add_argument("--target-outliers", type=float, help="minimum outlier fraction")
        p.add_argument("--thresholds", help="comma-separated rotation thresholds in degrees")
    p.add_argument("--ratio-max", type=float, help="eigenvalue-ratio threshold (default 10)")
    p.add_argument("--mean-max", type=float, help="mean-norm threshold (default 1.0)")
    p.add_argument("--slices", type=int, help="random slices per cluster (default 32)")
    p.add_argument("--seed", type=int, help="seed for the random slices (default 0)")
    p.add_argument("--alpha", type=float, help="level of the sliced normality test (default 0.05)")
    p.add_argument("--calibration-cache", help="JSON file caching Monte-Carlo critical values")


def build_parser():
    parser = argparse.ArgumentParser(prog="sigscene", description="Scene discovery over image embeddings.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset with ground truth")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--per-scene", type=_int_list, default=[10], help="images per scene, one value or one per scene")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.5, help="per-coordinate noise standard deviation")
    p.add_argument("--separation", type=float, default=8.0, help="minimum center distance in noise units")
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("run", help="cluster embeddings and write a submission")
    p.add_argument("embeddings")
    p.add_argument("-o", "--submission", default="submission.csv")
    p.add_argument("--report", default="report.json")
    p.add_argument("--raw", action="store_true", help="skip SIGReg normalization")
    _add_run_options(p)

    p = sub.add_parser("score", help="score a submission against ground truth")
    p.add_argument("submission")
    p.add_argument("ground_truth")
    p.add_argument("--thresholds", help="comma-separated rotation thresholds in degrees")

    p = sub.add_parser("validate", help="Gaussian-shape diagnostics for given clusters")
    p.add_argument("embeddings")
    p.add_argument("assignment")
    p.add_argument("--raw", action="store_true", help="skip SIGReg normalization")
    _add_run_options(p, with_method=False)
    return parser


def _run_config(args, parser) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(read_config_file(args.config))
        except (OSError, SigsceneError) as exc:
            parser.error(f"cannot read config: {exc}")
    for dest, name in RUN_FLAGS.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            values[name] = str(flag)
    if getattr(args, "raw", False):
        values["normalize"] = "false"
    try:
        return RunConfig.from_mapping(values)
    except (InvalidParam, TypeError, ValueError) as exc:
        parser.error(str(exc))


def _cache(args):
    path = getattr(args, "calibration_cache", None)
    return CalibrationCache(path) if path else None


def _atomic_write(targets: dict):
    """Write ``{path: text}`` all-or-nothing."""
    staged = []
    try:
        for path, text in targets.items():
            path = Path(path)
            fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)


def cmd_synth(args, parser):
    per = args.per_scene
    if len(per) == 1:
        per = per * args.scenes
    try:
        spec = SynthSpec(args.scenes, tuple(per), args.dim, args.noise, args.separation, args.outliers, args.seed)
    except InvalidParam as exc:
        parser.error(str(exc))
    try:
        embeddings, truth = generate_dataset(spec)
    except SigsceneError as exc:
        raise CommandError(f"generation failed: {exc}") from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(out / "embeddings.jsonl", embeddings)
    write_ground_truth(out / "ground_truth.jsonl", truth)
    log.info("wrote %d images to %s", len(embeddings), out)


def cmd_run(args, parser):
    config = _run_config(args, parser)
    stage = "load"
    try:
        embeddings = read_embeddings(args.embeddings)
        stage = "pipeline"
        result = process_dataset(embeddings, config, _cache(args))
        stage = "write"
        _atomic_write({
            args.submission: format_submission(result.assignment, result.poses),
            args.report: dumps_report(result.report),
        })
    except (OSError, SigsceneError, ValueError) as exc:
        raise CommandError(f"{stage} stage failed: {exc}") from None
    r = result.report
    log.info("%d scenes, %d outliers of %d images", r["scenes"], r["outliers"], r["images"])


def cmd_score(args, parser):
    thresholds = None
    if args.thresholds:
        try:
            thresholds = tuple(float(x) for x in args.thresholds.split(","))
        except ValueError:
            parser.error(f"bad --thresholds {args.thresholds!r}")
        if not thresholds or any(t <= 0 for t in thresholds):
            parser.error("thresholds must be positive")
    try:
        pred, poses = read_submission(args.submission)
    except (OSError, SigsceneError) as exc:
        raise CommandError(f"{args.submission}: {exc}") from None
    try:
        truth = read_ground_truth(args.ground_truth)
    except (OSError, SigsceneError) as exc:
        raise CommandError(f"{args.ground_truth}: {exc}") from None
    try:
        report = score_dataset(pred, poses, truth, *([thresholds] if thresholds else []))
    except SigsceneError as exc:
        raise CommandError(str(exc)) from None
    sys.stdout.write(dumps_report(report.to_dict()))


def cmd_validate(args, parser):
    config = _run_config(args, parser)
    try:
        embeddings = read_embeddings(args.embeddings)
        assignment = read_assignment(args.assignment)
    except (OSError, SigsceneError) as exc:
        raise CommandError(str(exc)) from None
    if not len(assignment.ids):
        sys.stdout.write(dumps_report({"clusters": []}))
        return
    if set(assignment.ids) != set(embeddings.image_ids):
        raise CommandError("assignment and embedding image ids differ")
    lookup = dict(zip(assignment.ids, assignment.labels))
    aligned = ClusterAssignment(embeddings.image_ids, np.array([lookup[i] for i in embeddings.image_ids]))
    if config.normalize:
        embeddings = embeddings.normalize()
    for label, idx in aligned.members().items():
        if len(idx) < 2:
            raise CommandError(f"cluster {label}: needs at least 2 images to validate")
    try:
        clusters = cluster_diagnostics(embeddings, aligned, config, _cache(args))
    except SigsceneError as exc:
        raise CommandError(str(exc)) from None
    sys.stdout.write(dumps_report({"normalized": embeddings.normalized, "clusters": clusters}))


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "score": cmd_score, "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args, parser)
    except CommandError as exc:
        print(f"sigscene {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
