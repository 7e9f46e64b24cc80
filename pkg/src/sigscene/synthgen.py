"""Synthetic multi-scene datasets with known clusters and poses.

Each scene has a center on the sphere of radius ``sqrt(dim)``; its
images are the center plus isotropic Gaussian noise of standard deviation
``noise_std``. Outliers are uniform in the cube of half-width
``2 * sqrt(dim)``.

Images of a scene are named in trajectory order, and trajectory order is
the order of the images along the first principal axis of their
norm-scaled embeddings: appearance drifts along the camera path.
Ground-truth poses follow a unit circle in that order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .embedding import EmbeddingSet, sigreg_normalize_rows
from .exceptions import InvalidParam, SeparationInfeasible
from .poses import circular_trajectory_poses, order_images
from .scoring import GroundTruth

MAX_CENTER_ATTEMPTS = 1000


@dataclass(frozen=True)
class SynthSpec:
    n_scenes: int
    images_per_scene: tuple
    dim: int = 16
    noise_std: float = 0.5
    center_separation: float = 8.0
    n_outliers: int = 0
    seed: int = 0

    def __post_init__(self):
        per = self.images_per_scene
        if isinstance(per, int):
            per = (per,) * self.n_scenes
        per = tuple(int(p) for p in per)
        object.__setattr__(self, "images_per_scene", per)
        if self.n_scenes < 1:
            raise InvalidParam("n_scenes must be >= 1")
        if len(per) != self.n_scenes:
            raise InvalidParam(f"{len(per)} scene sizes for {self.n_scenes} scenes")
        if any(p < 1 for p in per):
            raise InvalidParam("every scene needs at least one image")
        if self.dim < 2:
            raise InvalidParam("dim must be >= 2")
        if not self.noise_std > 0 or not self.center_separation > 0:
            raise InvalidParam("noise_std and center_separation must be positive")
        if self.n_outliers < 0:
            raise InvalidParam("n_outliers must be >= 0")


def _scene_centers(rng, spec: SynthSpec) -> np.ndarray:
    radius = np.sqrt(spec.dim)
    min_dist = spec.center_separation * spec.noise_std
    for _ in range(MAX_CENTER_ATTEMPTS):
        c = rng.standard_normal((spec.n_scenes, spec.dim))
        c *= radius / np.linalg.norm(c, axis=1, keepdims=True)
        if spec.n_scenes < 2 or pdist(c).min() >= min_dist:
            return c
    raise SeparationInfeasible(
        f"could not place {spec.n_scenes} centers {min_dist:g} apart on a sphere of radius {radius:g}"
    )


def generate_dataset(spec: SynthSpec):
    """Draw embeddings and ground truth for ``spec``.

    Returns
    -------
    embeddings : EmbeddingSet
        Raw (not normalized) embeddings, rows in shuffled order.
    truth : GroundTruth
    """
    rng = np.random.default_rng(spec.seed)
    centers = _scene_centers(rng, spec)
    total = sum(spec.images_per_scene) + spec.n_outliers
    width = max(4, len(str(total - 1)))
    rows, labels = [], []
    for s, (center, count) in enumerate(zip(centers, spec.images_per_scene)):
        samples = center + spec.noise_std * rng.standard_normal((count, spec.dim))
        samples = samples[order_images(sigreg_normalize_rows(samples))]
        rows.append(samples)
        labels += [s] * count
    half = 2.0 * np.sqrt(spec.dim)
    rows.append(rng.uniform(-half, half, size=(spec.n_outliers, spec.dim)))
    labels += [-1] * spec.n_outliers
    X = np.vstack(rows)
    labels = np.array(labels, dtype=int)
    ids = [f"img_{i:0{width}d}" for i in range(total)]

    poses = {}
    for s, count in enumerate(spec.images_per_scene):
        members = [ids[i] for i in np.flatnonzero(labels == s)]
        poses.update(zip(members, circular_trajectory_poses(count, 1.0)))

    perm = rng.permutation(total)
    embeddings = EmbeddingSet([ids[i] for i in perm], X[perm])
    truth = GroundTruth([ids[i] for i in perm], labels[perm], poses)
    return embeddings, truth
