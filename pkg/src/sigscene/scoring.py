"""Clustering precision, relative-pose mAA and their harmonic mean.

Predicted clusters are paired one-to-one with ground-truth scenes by
greedy overlap. For each scene, precision is the share of the matched
cluster that belongs to the scene, and mAA averages, over a ladder of
rotation thresholds, the fraction of image pairs whose relative pose is
recovered. Relative poses make the metric independent of the arbitrary
world frame of heuristic poses. Scenes without a matched cluster score 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .clustering import ClusterAssignment
from .exceptions import FormatError, IdMismatch, TooFewSamples
from .poses import CameraPose

DEFAULT_THRESHOLDS = tuple(float(t) for t in range(1, 11))


@dataclass(frozen=True)
class GroundTruth:
    ids: list
    scene_labels: np.ndarray
    poses: dict = field(repr=False)

    def __post_init__(self):
        labels = np.asarray(self.scene_labels, dtype=int).ravel()
        if len(labels) != len(self.ids):
            raise ValueError("one scene label per image is required")
        missing = [i for i, lab in zip(self.ids, labels) if lab >= 0 and i not in self.poses]
        if missing:
            raise ValueError(f"no ground-truth pose for {missing[0]!r}")
        object.__setattr__(self, "ids", list(self.ids))
        object.__setattr__(self, "scene_labels", labels)

    def scenes(self) -> dict:
        """Scene label -> list of image ids, in label order."""
        out = {}
        for name, lab in zip(self.ids, self.scene_labels):
            if lab >= 0:
                out.setdefault(int(lab), []).append(name)
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class SceneScore:
    scene: int
    cluster: int | None
    precision: float
    maa: float
    score: float


@dataclass(frozen=True)
class ScoreReport:
    per_scene: list
    dataset_precision: float
    dataset_maa: float
    dataset_score: float
    overall: float

    def to_dict(self):
        return asdict(self)


def harmonic_mean(a, b) -> float:
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


def _clusters(pred: ClusterAssignment) -> dict:
    out = {}
    for name, lab in zip(pred.ids, pred.labels):
        if lab >= 0:
            out.setdefault(int(lab), set()).add(name)
    return dict(sorted(out.items()))


def _check_ids(pred: ClusterAssignment, gt: GroundTruth):
    a, b = set(pred.ids), set(gt.ids)
    if a != b or len(a) != len(pred.ids):
        extra = sorted(a - b)[:3]
        missing = sorted(b - a)[:3]
        raise IdMismatch(f"image ids differ (only predicted: {extra}, only ground truth: {missing})")


def match_clusters(pred: ClusterAssignment, gt: GroundTruth) -> dict:
    """Greedy one-to-one pairing of scenes and predicted clusters.

    The pair with the largest overlap is taken first; ties prefer the larger
    overlap share of the cluster, then the lower scene, then the lower
    cluster label. Scenes left without overlapping clusters map to ``None``.
    """
    _check_ids(pred, gt)
    scenes = {s: set(m) for s, m in gt.scenes().items()}
    clusters = _clusters(pred)
    candidates = []
    for s, S in scenes.items():
        for c, C in clusters.items():
            inter = len(S & C)
            if inter:
                candidates.append((-inter, -inter / len(C), s, c))
    candidates.sort()
    matching = {s: None for s in scenes}
    used = set()
    for _, _, s, c in candidates:
        if matching[s] is None and c not in used:
            matching[s] = c
            used.add(c)
    return matching


def precision_for_scene(scene_images, cluster_images) -> float:
    S, C = set(scene_images), set(cluster_images)
    if not C:
        raise ValueError("cluster must be non-empty")
    return len(S & C) / len(C)


def _angle_deg(cos_value) -> float:
    return math.degrees(math.acos(min(1.0, max(-1.0, cos_value))))


def relative_pose_error(pi: CameraPose, pj: CameraPose, gi: CameraPose, gj: CameraPose):
    """Rotation and translation-direction errors of the relative pose i<-j.

    Returns ``(rot_deg, trans_deg)``; ``trans_deg`` is ``None`` when either
    relative translation is shorter than 1e-9.
    """
    R_pred = pi.rotation @ pj.rotation.T
    R_gt = gi.rotation @ gj.rotation.T
    rot = _angle_deg((np.trace(R_pred @ R_gt.T) - 1.0) / 2.0)
    t_pred = pi.translation - R_pred @ pj.translation
    t_gt = gi.translation - R_gt @ gj.translation
    n_pred, n_gt = np.linalg.norm(t_pred), np.linalg.norm(t_gt)
    if n_pred < 1e-9 or n_gt < 1e-9:
        return rot, None
    return rot, _angle_deg(float(t_pred @ t_gt) / (n_pred * n_gt))


def maa_for_scene(pred_poses: dict, gt: GroundTruth, scene, matched_cluster, thresholds=DEFAULT_THRESHOLDS) -> float:
    """Mean accuracy of the scene's relative poses over the threshold ladder.

    A pair passes threshold ``theta`` when its rotation error is at most
    ``theta`` degrees and its translation-direction error (if defined) is at
    most ``2 * theta``. Pairs with an image outside ``matched_cluster`` or
    without a predicted pose fail at every threshold.
    """
    images = gt.scenes().get(int(scene), [])
    if len(images) < 2:
        raise TooFewSamples(f"scene {scene} has fewer than 2 images")
    matched = set(matched_cluster or ())
    thresholds = np.asarray(thresholds, dtype=float)
    hits = np.zeros(len(thresholds))
    pairs = list(combinations(images, 2))
    for a, b in pairs:
        if a not in matched or b not in matched or a not in pred_poses or b not in pred_poses:
            continue
        rot, trans = relative_pose_error(pred_poses[a], pred_poses[b], gt.poses[a], gt.poses[b])
        ok = rot <= thresholds
        if trans is not None:
            ok &= trans <= 2.0 * thresholds
        hits += ok
    return float(np.mean(hits / len(pairs)))


def score_dataset(pred: ClusterAssignment, pred_poses: dict, gt: GroundTruth, thresholds=DEFAULT_THRESHOLDS) -> ScoreReport:
    """Per-scene and dataset-level precision, mAA and harmonic score."""
    matching = match_clusters(pred, gt)
    clusters = _clusters(pred)
    scenes = gt.scenes()
    per_scene = []
    for s, images in scenes.items():
        c = matching[s]
        if c is None:
            per_scene.append(SceneScore(s, None, 0.0, 0.0, 0.0))
            continue
        members = clusters[c]
        p = precision_for_scene(images, members)
        if len(images) >= 2:
            m = maa_for_scene(pred_poses, gt, s, members, thresholds)
        else:
            # a single-image scene has no pairs; credit a posed image
            m = 1.0 if images[0] in members and images[0] in pred_poses else 0.0
        per_scene.append(SceneScore(s, c, p, m, harmonic_mean(p, m)))
    if per_scene:
        precision = float(np.mean([r.precision for r in per_scene]))
        maa = float(np.mean([r.maa for r in per_scene]))
    else:
        precision = maa = 0.0
    score = harmonic_mean(precision, maa)
    return ScoreReport(per_scene, precision, maa, score, score)


def aggregate_scores(reports) -> float:
    """Mean dataset score over several datasets."""
    reports = list(reports)
    return float(np.mean([r.dataset_score for r in reports])) if reports else 0.0


def read_ground_truth(path) -> GroundTruth:
    ids, labels, poses, seen = [], [], {}, set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                name = rec["image"]
                scene = rec["scene"]
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"bad ground-truth record ({exc})", lineno) from None
            if not isinstance(name, str) or not name:
                raise FormatError("image must be a non-empty string", lineno)
            if not isinstance(scene, int) or scene < -1:
                raise FormatError("scene must be an integer >= -1", lineno)
            if name in seen:
                raise FormatError(f"duplicate image {name!r}", lineno)
            seen.add(name)
            if scene >= 0:
                try:
                    poses[name] = CameraPose(np.reshape(rec["R"], (3, 3)), np.reshape(rec["T"], 3))
                except (KeyError, ValueError, TypeError) as exc:
                    raise FormatError(f"bad pose for {name!r} ({exc})", lineno) from None
            ids.append(name)
            labels.append(scene)
    return GroundTruth(ids, np.array(labels, dtype=int), poses)


def write_ground_truth(path, gt: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, lab in zip(gt.ids, gt.scene_labels):
            rec = {"image": name, "scene": int(lab)}
            if lab >= 0:
                pose = gt.poses[name]
                rec["R"] = [float(x) for x in pose.rotation.ravel()]
                rec["T"] = [float(x) for x in pose.translation]
            fh.write(json.dumps(rec) + "\n")
