"""Heuristic camera poses for discovered scenes.

Poses use the world-to-camera convention ``x_cam = R @ x_world + T``
with the camera looking down its +z axis; the camera center is
``-R.T @ T``. A cluster's scene type (linear, planar or object-centric)
is read off the effective rank of its embedding covariance and selects
the trajectory its images are laid out on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DegenerateGeometry, InvalidParam, TooFewSamples

DOWN = np.array([0.0, -1.0, 0.0])


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        T = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(T))):
            raise ValueError("pose entries must be finite")
        # loose enough for poses read back from 9-digit text
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


class SceneType(str, Enum):
    LINEAR = "linear"
    PLANAR = "planar"
    OBJECT_CENTRIC = "object_centric"


def look_at(eye, target, up=DOWN) -> CameraPose:
    """Pose of a camera at ``eye`` looking at ``target``.

    Rows of ``R`` are (right, down, forward) with ``forward`` the unit
    vector to the target, ``right = forward x up`` normalized and
    ``down = forward x right``.
    """
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    up = np.asarray(up, dtype=float)
    view = target - eye
    dist = np.linalg.norm(view)
    if dist <= 1e-9:
        raise DegenerateGeometry("eye and target coincide")
    forward = view / dist
    right = np.cross(forward, up)
    rn = np.linalg.norm(right)
    if rn <= 1e-9:
        raise DegenerateGeometry("up vector is parallel to the viewing direction")
    right /= rn
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    return CameraPose(R, -R @ eye)


def _covariance_spectrum(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected an (n, d) matrix")
    centered = X - X.mean(axis=0)
    cov = np.atleast_2d(np.cov(centered.T, ddof=1))
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return np.clip(vals, 0.0, None), vecs


def effective_rank(X) -> float:
    """``(sum lambda)**2 / sum lambda**2`` of the sample covariance; 0 if it vanishes."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise TooFewSamples("need at least 2 embeddings")
    lam, _ = _covariance_spectrum(X)
    sq = float(np.sum(lam * lam))
    if sq <= 0.0:
        return 0.0
    return float(np.sum(lam)) ** 2 / sq


def infer_scene_type(cluster_embeddings, linear_max=1.5, planar_max=2.5) -> SceneType:
    r = effective_rank(cluster_embeddings)
    if r == 0.0:
        # no spread at all: nothing suggests a path, orbit the object
        return SceneType.OBJECT_CENTRIC
    if r <= linear_max:
        return SceneType.LINEAR
    if r <= planar_max:
        return SceneType.PLANAR
    return SceneType.OBJECT_CENTRIC


def order_images(cluster_embeddings, ids=None) -> list:
    """Order images along the first principal axis of their embeddings.

    Ties are broken by position. Of the two directions of the axis the one
    that starts with the smaller id is used (``ids`` default to positions).
    """
    X = np.asarray(cluster_embeddings, dtype=float)
    n = X.shape[0]
    if n <= 1:
        return list(range(n))
    if ids is None:
        ids = list(range(n))
    lam, vecs = _covariance_spectrum(X)
    if lam[-1] <= 1e-12:
        return list(range(n))
    proj = (X - X.mean(axis=0)) @ vecs[:, -1]
    pos = np.arange(n)
    forward = np.lexsort((pos, proj))
    backward = np.lexsort((pos, -proj))
    if ids[backward[0]] < ids[forward[0]]:
        return backward.tolist()
    return forward.tolist()


def _check_count(n):
    if int(n) != n or n < 1:
        raise InvalidParam(f"need at least one pose, got n={n}")


def circular_trajectory_poses(n, radius=1.0) -> list:
    """``n`` cameras evenly spaced on a circle in the x-z plane, facing the origin."""
    _check_count(n)
    if not radius > 0:
        raise InvalidParam(f"radius must be positive, got {radius}")
    poses = []
    for k in range(n):
        theta = 2.0 * math.pi * k / n
        eye = np.array([radius * math.cos(theta), 0.0, radius * math.sin(theta)])
        poses.append(look_at(eye, np.zeros(3), DOWN))
    return poses


def linear_trajectory_poses(n, spacing=1.0) -> list:
    _check_count(n)
    if not spacing > 0:
        raise InvalidParam(f"spacing must be positive, got {spacing}")
    poses = []
    for k in range(n):
        eye = np.array([k * spacing, 0.0, -5.0 * spacing])
        poses.append(look_at(eye, eye + np.array([0.0, 0.0, 1.0]), DOWN))
    return poses


def planar_grid_poses(n, spacing=1.0) -> list:
    """Row-major fill of the smallest square grid holding ``n`` cameras."""
    _check_count(n)
    if not spacing > 0:
        raise InvalidParam(f"spacing must be positive, got {spacing}")
    side = math.isqrt(n - 1) + 1
    poses = []
    for k in range(n):
        row, col = divmod(k, side)
        eye = np.array([col * spacing, row * spacing, -5.0 * spacing])
        poses.append(look_at(eye, eye + np.array([0.0, 0.0, 1.0]), DOWN))
    return poses


def generate_cluster_poses(cluster_embeddings, ids, radius=1.0, spacing=1.0, linear_max=1.5, planar_max=2.5) -> dict:
    """Map each image id of one cluster to a heuristic pose."""
    X = np.asarray(cluster_embeddings, dtype=float)
    ids = list(ids)
    if X.shape[0] != len(ids) or not ids:
        raise ValueError("need one id per embedding and at least one image")
    n = len(ids)
    if n == 1:
        return {ids[0]: circular_trajectory_poses(1, radius)[0]}
    kind = infer_scene_type(X, linear_max, planar_max)
    if kind is SceneType.LINEAR:
        poses = linear_trajectory_poses(n, spacing)
    elif kind is SceneType.PLANAR:
        poses = planar_grid_poses(n, spacing)
    else:
        poses = circular_trajectory_poses(n, radius)
    order = order_images(X, ids)
    return {ids[i]: pose for i, pose in zip(order, poses)}
