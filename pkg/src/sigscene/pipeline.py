"""End-to-end scene discovery: embeddings in, clusters, poses and a report out."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .clustering import ClusterAssignment, cluster_scenes, prepare_cluster, _global_scale
from .embedding import DEFAULT_T_GRID, METHODS, EmbeddingSet
from .exceptions import FormatError, InvalidParam, SigsceneError
from .poses import CameraPose, generate_cluster_poses, infer_scene_type
from .scoring import DEFAULT_THRESHOLDS
from .sigreg import MIN_EP_SAMPLES, CalibrationCache, sliced_isotropy, validate_cluster_gaussian


@dataclass
class RunConfig:
    method: str = "gaussian_cosine"
    t_grid: tuple = DEFAULT_T_GRID
    eps_grid: tuple | None = None
    min_pts_grid: tuple = (2, 3)
    consensus: float = 0.5
    eps_k: int | None = None
    ratio_max: float = 10.0
    mean_max: float = 1.0
    min_cluster_size: int = 3
    slices: int = 32
    seed: int = 0
    alpha: float = 0.05
    target_outliers: float | None = None
    normalize: bool = True
    radius: float = 1.0
    spacing: float = 1.0
    linear_max: float = 1.5
    planar_max: float = 2.5
    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        self.method = self.method.replace("-", "_")
        if self.method not in METHODS:
            raise InvalidParam(f"unknown method {self.method!r}")
        if self.slices < 1:
            raise InvalidParam("slices must be >= 1")
        if self.min_cluster_size < 1:
            raise InvalidParam("min_cluster_size must be >= 1")
        if self.target_outliers is not None and not 0.0 <= self.target_outliers < 1.0:
            raise InvalidParam("target_outliers must lie in [0, 1)")
        if not self.ratio_max > 0 or not self.mean_max > 0:
            raise InvalidParam("ratio_max and mean_max must be positive")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        """Build from string or typed values keyed by field name (``-`` or ``_``)."""
        kinds = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in kinds:
                raise InvalidParam(f"unknown setting {key!r}")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs)

    def as_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


_LISTS = {"t_grid": float, "eps_grid": float, "min_pts_grid": int, "thresholds": float}
_SCALARS = {
    "method": str, "consensus": float, "eps_k": int, "ratio_max": float, "mean_max": float,
    "min_cluster_size": int, "slices": int, "seed": int, "alpha": float, "target_outliers": float,
    "radius": float, "spacing": float, "linear_max": float, "planar_max": float,
}


def _coerce(name, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    raw = raw.strip()
    if name in _LISTS:
        if not raw or raw.lower() == "none":
            return None
        return tuple(_LISTS[name](x) for x in raw.split(",") if x.strip())
    if name == "normalize":
        if raw.lower() not in {"true", "false", "1", "0", "yes", "no"}:
            raise InvalidParam(f"normalize expects a boolean, got {raw!r}")
        return raw.lower() in {"true", "1", "yes"}
    if raw.lower() == "none" and name in {"eps_k", "target_outliers"}:
        return None
    try:
        return _SCALARS[name](raw)
    except ValueError:
        raise InvalidParam(f"bad value {raw!r} for {name}") from None


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError("expected key=value", lineno)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


@dataclass
class RunResult:
    assignment: ClusterAssignment
    poses: dict
    report: dict = field(repr=False)


def cluster_diagnostics(embeddings: EmbeddingSet, assignment: ClusterAssignment, config: RunConfig, cache=None) -> list:
    """Isotropy verdict and sliced-normality summary for every cluster."""
    X = embeddings.matrix
    scale = _global_scale(X) if len(X) else None
    out = []
    for label, idx in assignment.members().items():
        entry = {"cluster": label, "size": len(idx)}
        if len(idx) >= 2:
            verdict = validate_cluster_gaussian(
                prepare_cluster(X[idx], scale), config.ratio_max, config.mean_max, shrinkage=True
            )
            entry["isotropy"] = verdict.to_dict()
            entry["scene_type"] = infer_scene_type(X[idx], config.linear_max, config.planar_max).value
        else:
            entry["isotropy"] = None
            entry["scene_type"] = None
        if len(idx) >= MIN_EP_SAMPLES:
            try:
                report = sliced_isotropy(X[idx], config.slices, config.seed, config.alpha, cache)
            except SigsceneError as exc:
                raise type(exc)(f"cluster {label}: {exc}") from None
            entry["slices"] = report.summary()
        else:
            entry["slices"] = None
        out.append(entry)
    return out


def process_dataset(embeddings: EmbeddingSet, config: RunConfig | None = None, cache: CalibrationCache | None = None) -> RunResult:
    """Normalize, cluster, filter, pose and summarise one dataset."""
    config = config or RunConfig()
    if config.normalize:
        embeddings = embeddings.normalize()
    result = cluster_scenes(
        embeddings,
        method=config.method,
        t_grid=config.t_grid,
        eps_grid=config.eps_grid,
        min_pts_grid=config.min_pts_grid,
        consensus_threshold=config.consensus,
        eps_k=config.eps_k,
        ratio_max=config.ratio_max,
        mean_max=config.mean_max,
        min_cluster_size=config.min_cluster_size,
        target_outliers=config.target_outliers,
    )
    assignment = result.assignment
    poses = {}
    for idx in assignment.members().values():
        ids = [assignment.ids[i] for i in idx]
        poses.update(generate_cluster_poses(
            embeddings.matrix[idx], ids, config.radius, config.spacing, config.linear_max, config.planar_max
        ))
    n = len(assignment.ids)
    sizes = [len(v) for v in assignment.members().values()]
    n_out = int(np.count_nonzero(assignment.labels < 0))
    report = {
        "images": n,
        "scenes": len(sizes),
        "outliers": n_out,
        "outlier_fraction": n_out / n if n else 0.0,
        "avg_scene_size": float(np.mean(sizes)) if sizes else 0.0,
        "normalized": embeddings.normalized,
        "eps_estimate": None if np.isnan(result.eps_estimate) else result.eps_estimate,
        "eps_grid": list(result.config.eps_grid),
        "clusters": cluster_diagnostics(embeddings, assignment, config, cache),
        "config": config.as_dict(),
    }
    return RunResult(assignment, poses, report)


def fmt_float(x) -> str:
    # + 0.0 folds -0.0 into 0.0
    return f"{float(x) + 0.0:.9g}"


def _round_floats(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(fmt_float(obj))
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dumps_report(report) -> str:
    """Canonical JSON: sorted keys, floats to 9 significant digits."""
    return json.dumps(_round_floats(report), sort_keys=True, indent=2) + "\n"


def format_submission(assignment: ClusterAssignment, poses: dict) -> str:
    """Submission CSV text; outliers and unposed images get cluster -1."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image", "cluster", "rotation", "translation"])
    for name, lab in zip(assignment.ids, assignment.labels):
        pose = poses.get(name)
        if lab < 0 or pose is None:
            writer.writerow([name, -1, "", ""])
            continue
        writer.writerow([
            name,
            int(lab),
            ";".join(fmt_float(x) for x in pose.rotation.ravel()),
            ";".join(fmt_float(x) for x in pose.translation),
        ])
    return buf.getvalue()


def write_submission(path, assignment: ClusterAssignment, poses: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_submission(assignment, poses))


def read_submission(path):
    """Parse a submission CSV into ``(ClusterAssignment, poses)``."""
    ids, labels, poses = [], [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image", "cluster", "rotation", "translation"]:
            raise FormatError("expected header 'image,cluster,rotation,translation'", 1)
        seen = set()
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4 or not row[0]:
                raise FormatError("expected 4 fields", lineno)
            name, cluster, rot, trans = row
            if name in seen:
                raise FormatError(f"duplicate image {name!r}", lineno)
            seen.add(name)
            try:
                lab = int(cluster)
            except ValueError:
                raise FormatError(f"cluster {cluster!r} is not an integer", lineno) from None
            if lab < -1:
                raise FormatError(f"cluster {lab} below -1", lineno)
            if lab >= 0:
                try:
                    R = np.array([float(x) for x in rot.split(";")]).reshape(3, 3)
                    T = np.array([float(x) for x in trans.split(";")]).reshape(3)
                    poses[name] = CameraPose(R, T)
                except ValueError as exc:
                    raise FormatError(f"bad pose ({exc})", lineno) from None
            elif rot or trans:
                raise FormatError("outliers must have empty pose fields", lineno)
            ids.append(name)
            labels.append(lab)
    return ClusterAssignment(ids, np.array(labels, dtype=int)), poses
