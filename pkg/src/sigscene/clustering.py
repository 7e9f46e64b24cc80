"""Scene clustering over a precomputed distance matrix.

The building blocks are a deterministic DBSCAN, a k-distance elbow
estimate of its radius, an evidence-accumulation ensemble over a grid of
DBSCAN parameters, a post-filter that enforces the Gaussian cluster-shape
test, and optional outlier-rate targeting. ``SceneClusterer`` wires them
into a scikit-learn compatible estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .embedding import DEFAULT_T_GRID, DistanceMatrix, EmbeddingSet, pairwise_similarity, to_distance
from .exceptions import FormatError, InvalidParam, TooFewSamples
from .sigreg import validate_cluster_gaussian

OUTLIER = -1
# smallest log second difference accepted as a k-distance elbow
ELBOW_MIN_DROP = 0.1


def canonicalize(labels) -> np.ndarray:
    """Relabel clusters ``0..K-1`` by first appearance; negatives become -1."""
    labels = np.asarray(labels, dtype=int)
    out = np.full(labels.shape, OUTLIER, dtype=int)
    mapping = {}
    for i, lab in enumerate(labels):
        if lab < 0:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


@dataclass(frozen=True)
class ClusterAssignment:
    ids: list
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int).ravel()
        if len(labels) != len(self.ids):
            raise ValueError(f"{len(labels)} labels for {len(self.ids)} ids")
        object.__setattr__(self, "ids", list(self.ids))
        object.__setattr__(self, "labels", labels)

    def canonical(self) -> "ClusterAssignment":
        return ClusterAssignment(self.ids, canonicalize(self.labels))

    @property
    def n_clusters(self) -> int:
        return len({int(lab) for lab in self.labels if lab >= 0})

    @property
    def outlier_fraction(self) -> float:
        return float(np.mean(self.labels < 0)) if len(self.labels) else 0.0

    def members(self) -> dict:
        """Cluster label -> list of row indices, in label order."""
        out = {}
        for i, lab in enumerate(self.labels):
            if lab >= 0:
                out.setdefault(int(lab), []).append(i)
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class EnsembleConfig:
    eps_grid: tuple
    min_pts_grid: tuple = (2, 3)
    consensus_threshold: float = 0.5

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_grid)
        pts = tuple(int(p) for p in self.min_pts_grid)
        if not eps or not pts:
            raise InvalidParam("ensemble grids must be non-empty")
        if any(not 0.0 < e <= 1.0 for e in eps):
            raise InvalidParam(f"eps values must lie in (0, 1], got {eps}")
        if any(p < 2 for p in pts):
            raise InvalidParam(f"min_pts values must be >= 2, got {pts}")
        if not 0.0 < self.consensus_threshold <= 1.0:
            raise InvalidParam("consensus_threshold must lie in (0, 1]")
        object.__setattr__(self, "eps_grid", eps)
        object.__setattr__(self, "min_pts_grid", pts)

    @classmethod
    def around(cls, eps, min_pts_grid=(2, 3), consensus_threshold=0.5, factors=(0.75, 1.0, 1.25)):
        """Grid of radii scaled from a data-driven estimate, clipped to (0, 1]."""
        grid = tuple(sorted({min(1.0, max(1e-6, eps * f)) for f in factors}))
        return cls(grid, tuple(min_pts_grid), consensus_threshold)


@dataclass(frozen=True)
class CoassociationMatrix:
    ids: list
    entries: np.ndarray = field(repr=False)


def _distance_array(dist) -> tuple[list, np.ndarray]:
    if isinstance(dist, DistanceMatrix):
        return dist.ids, dist.entries
    D = np.asarray(dist, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    return [f"{i}" for i in range(len(D))], D


def dbscan(dist, eps, min_pts) -> ClusterAssignment:
    """DBSCAN on a precomputed distance matrix.

    A point is core when at least ``min_pts`` points, itself included, lie
    within distance ``<= eps``. Clusters are the connected components of
    core points; a border point joins the cluster of its lowest-index core
    neighbour. Everything else is labelled -1.
    """
    if not eps > 0:
        raise InvalidParam(f"eps must be positive, got {eps}")
    if min_pts < 2:
        raise InvalidParam(f"min_pts must be >= 2, got {min_pts}")
    ids, D = _distance_array(dist)
    n = len(D)
    labels = np.full(n, OUTLIER, dtype=int)
    if n == 0:
        return ClusterAssignment(ids, labels)
    within = D <= eps
    core = within.sum(axis=1) >= min_pts
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        _, comp = connected_components(within[np.ix_(core_idx, core_idx)], directed=False)
        labels[core_idx] = comp
        for i in np.flatnonzero(~core):
            hits = core_idx[within[i, core_idx]]
            if hits.size:
                labels[i] = labels[hits[0]]
    return ClusterAssignment(ids, canonicalize(labels))


def estimate_eps(dist, k) -> float:
    """DBSCAN radius from the elbow of the sorted k-distance curve.

    The k-th nearest-neighbour distance (self excluded) of every point is
    sorted in descending order and the value at the largest discrete second
    difference is returned. Differences are taken on the log of the
    distances so the elbow is judged by relative, not absolute, drops. Only
    the upper half of the curve is searched, since a noise tail is a
    minority, and an elbow must exceed ``ELBOW_MIN_DROP``. Without one the
    largest k-distance is returned, which makes every point a core point;
    on a flat curve this equals the median.
    """
    _, D = _distance_array(dist)
    n = len(D)
    if k < 1:
        raise InvalidParam(f"k must be >= 1, got {k}")
    if n <= k:
        raise TooFewSamples(f"need more than k={k} points, got {n}")
    others = D[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    kdist = np.sort(np.partition(others, k - 1, axis=1)[:, k - 1])[::-1]
    if n >= 3:
        y = np.log(np.maximum(kdist, 1e-9))
        second = (y[:-2] - 2.0 * y[1:-1] + y[2:])[: max(1, math.ceil(n / 2) - 1)]
        j = int(np.argmax(second))
        if second[j] >= ELBOW_MIN_DROP:
            return float(kdist[j + 1])
    return float(kdist[0])


def coassociation(runs, n) -> np.ndarray:
    counts = np.zeros((n, n), dtype=np.int64)
    for labels in runs:
        for lab in np.unique(labels[labels >= 0]):
            idx = np.flatnonzero(labels == lab)
            counts[np.ix_(idx, idx)] += 1
    C = counts / len(runs)
    np.fill_diagonal(C, 1.0)
    return C


def ensemble_cluster(dist, config: EnsembleConfig):
    """Consensus of DBSCAN runs over the ``eps x min_pts`` grid.

    Returns
    -------
    coassoc : CoassociationMatrix
        Fraction of runs in which each pair shares a cluster.
    assignment : ClusterAssignment
        DBSCAN on ``1 - coassoc`` with radius ``1 - consensus_threshold``.
    """
    ids, D = _distance_array(dist)
    runs = []
    for eps, min_pts in product(config.eps_grid, config.min_pts_grid):
        try:
            runs.append(dbscan(D, eps, min_pts).labels)
        except InvalidParam as exc:
            raise InvalidParam(f"grid point eps={eps}, min_pts={min_pts}: {exc}") from None
    C = coassociation(runs, len(D))
    consensus_eps = max(1.0 - config.consensus_threshold, 1e-12)
    final = dbscan(1.0 - C, consensus_eps, min(config.min_pts_grid))
    return CoassociationMatrix(list(ids), C), ClusterAssignment(ids, final.labels)


def _global_scale(X: np.ndarray) -> np.ndarray:
    scale = X.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    return scale


def prepare_cluster(X_cluster, scale) -> np.ndarray:
    """Center a cluster on its own mean and divide by the dataset scale."""
    return (X_cluster - X_cluster.mean(axis=0)) / scale


def _split_on_principal_axis(Xp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # exact 1-D 2-means: best cut of the sorted projections
    cov = np.cov(Xp.T, ddof=1)
    _, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    proj = Xp @ vecs[:, -1]
    order = np.lexsort((np.arange(len(proj)), proj))
    s = proj[order]
    csum = np.cumsum(s)
    csq = np.cumsum(s * s)
    n = len(s)
    best, cut = np.inf, 1
    for i in range(1, n):
        left = csq[i - 1] - csum[i - 1] ** 2 / i
        right = (csq[-1] - csq[i - 1]) - (csum[-1] - csum[i - 1]) ** 2 / (n - i)
        if left + right < best - 1e-12:
            best, cut = left + right, i
    return np.sort(order[:cut]), np.sort(order[cut:])


def sigreg_filter(assignment: ClusterAssignment, embeddings: EmbeddingSet, ratio_max=10.0, mean_max=1.0,
                  min_cluster_size=3, shrinkage=True) -> ClusterAssignment:
    """Enforce the isotropic-cluster test on every cluster.

    Each cluster is centered on its mean and scaled by the dataset-wide
    per-coordinate standard deviation, then tested. A cluster failing the
    eigenvalue-ratio test is split once into two halves by 2-means along its
    first principal axis; halves that fail again, and any cluster smaller
    than ``min_cluster_size``, become outliers.

    ``shrinkage`` selects the Ledoit-Wolf covariance for the test, which is
    needed when clusters have about as many members as dimensions.
    """
    if list(assignment.ids) != list(embeddings.image_ids):
        raise ValueError("assignment ids do not match embedding ids")
    X = embeddings.matrix
    scale = _global_scale(X)
    labels = np.full(len(X), OUTLIER, dtype=int)
    next_label = 0

    def passes(idx):
        if len(idx) < max(min_cluster_size, 2):
            return False
        verdict = validate_cluster_gaussian(prepare_cluster(X[idx], scale), ratio_max, mean_max, shrinkage=shrinkage)
        return verdict.is_isotropic

    for idx in assignment.members().values():
        idx = np.asarray(idx)
        if len(idx) < min_cluster_size:
            continue
        if passes(idx):
            labels[idx] = next_label
            next_label += 1
            continue
        for half in _split_on_principal_axis(prepare_cluster(X[idx], scale)):
            part = idx[half]
            if passes(part):
                labels[part] = next_label
                next_label += 1
    return ClusterAssignment(assignment.ids, canonicalize(labels))


def target_outlier_rate(assignment: ClusterAssignment, coassoc, target_fraction) -> ClusterAssignment:
    """Demote weakly co-associated images until the outlier share reaches a target.

    Images are ranked by their mean co-association with the other members of
    their cluster (ties by image id) and the weakest are labelled -1.
    Outliers are never promoted.
    """
    if not 0.0 <= target_fraction < 1.0:
        raise InvalidParam("target_fraction must lie in [0, 1)")
    C = coassoc.entries if isinstance(coassoc, CoassociationMatrix) else np.asarray(coassoc, dtype=float)
    labels = assignment.labels.copy()
    n = len(labels)
    current = int(np.count_nonzero(labels < 0))
    need = max(0, math.ceil(target_fraction * n - current - 1e-9))
    if need == 0:
        return assignment.canonical()
    strength = []
    for idx in assignment.members().values():
        for i in idx:
            others = [j for j in idx if j != i]
            s = float(np.mean(C[i, others])) if others else 0.0
            strength.append((s, assignment.ids[i], i))
    strength.sort()
    for _, _, i in strength[:need]:
        labels[i] = OUTLIER
    return ClusterAssignment(assignment.ids, canonicalize(labels))


def read_assignment(path) -> ClusterAssignment:
    ids, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ClusterAssignment([], np.zeros(0, dtype=int))
        if [h.strip() for h in header] != ["image", "label"]:
            raise FormatError("expected header 'image,label'", 1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 2 or not row[0]:
                raise FormatError("expected 'image,label'", lineno)
            try:
                lab = int(row[1])
            except ValueError:
                raise FormatError(f"label {row[1]!r} is not an integer", lineno) from None
            if lab < -1:
                raise FormatError(f"label {lab} below -1", lineno)
            ids.append(row[0])
            labels.append(lab)
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate image ids in assignment")
    return ClusterAssignment(ids, np.array(labels, dtype=int))


def write_assignment(path, assignment: ClusterAssignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "label"])
        for name, lab in zip(assignment.ids, assignment.labels):
            writer.writerow([name, int(lab)])


@dataclass
class ClusteringResult:
    assignment: ClusterAssignment
    coassociation: CoassociationMatrix
    eps_estimate: float
    config: EnsembleConfig


def cluster_scenes(embeddings: EmbeddingSet, method="gaussian_cosine", t_grid=None, eps_grid=None,
                   min_pts_grid=(2, 3), consensus_threshold=0.5, eps_k=None, ratio_max=10.0, mean_max=1.0,
                   min_cluster_size=3, use_sigreg_filter=True, target_outliers=None) -> ClusteringResult:
    """Similarity -> ensemble DBSCAN -> SIGReg filter -> optional outlier targeting."""
    n = len(embeddings)
    if method == "char_fn" and t_grid is None:
        t_grid = DEFAULT_T_GRID
    ids = embeddings.image_ids
    if n < 2:
        # nothing to cluster against; a lone image is always below min_cluster_size
        labels = np.full(n, OUTLIER, dtype=int)
        config = EnsembleConfig(tuple(eps_grid) if eps_grid else (1.0,), tuple(min_pts_grid), consensus_threshold)
        return ClusteringResult(ClusterAssignment(ids, labels), CoassociationMatrix(ids, np.eye(n)), float("nan"), config)
    sim = pairwise_similarity(embeddings, method, t_grid if method == "char_fn" else None)
    dist = to_distance(sim)
    k = eps_k if eps_k is not None else min(max(min_pts_grid), n - 1)
    eps_hat = estimate_eps(dist, k)
    if eps_grid:
        config = EnsembleConfig(tuple(eps_grid), tuple(min_pts_grid), consensus_threshold)
    else:
        config = EnsembleConfig.around(eps_hat, min_pts_grid, consensus_threshold)
    coassoc, assignment = ensemble_cluster(dist, config)
    if use_sigreg_filter:
        assignment = sigreg_filter(assignment, embeddings, ratio_max, mean_max, min_cluster_size)
    if target_outliers:
        assignment = target_outlier_rate(assignment, coassoc, target_outliers)
    return ClusteringResult(assignment.canonical(), coassoc, eps_hat, config)


class SceneClusterer(ClusterMixin, BaseEstimator):
    """Scene discovery estimator over an ``(n_samples, n_features)`` embedding matrix.

    Parameters
    ----------
    method : {'gaussian_cosine', 'char_fn'}, default='gaussian_cosine'
    t_grid : sequence of float, optional
        Frequencies for ``char_fn``.
    eps_grid : sequence of float, optional
        DBSCAN radii. By default 0.75, 1 and 1.25 times the k-distance
        elbow estimate.
    min_pts_grid : sequence of int, default=(2, 3)
    consensus_threshold : float, default=0.5
    eps_k : int, optional
        Neighbour rank for the radius estimate; largest ``min_pts`` by default.
    normalize : bool, default=True
        Rescale rows to norm ``sqrt(n_features)`` first.
    ratio_max, mean_max : float
        Thresholds of the isotropic-cluster test.
    min_cluster_size : int, default=3
    sigreg_filter : bool, default=True
    target_outliers : float, optional
        Minimum outlier fraction to enforce.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Scene index per sample, -1 for outliers.
    coassociation_ : ndarray of shape (n_samples, n_samples)
    eps_estimate_ : float
    """

    def __init__(self, method="gaussian_cosine", t_grid=None, eps_grid=None, min_pts_grid=(2, 3),
                 consensus_threshold=0.5, eps_k=None, normalize=True, ratio_max=10.0, mean_max=1.0,
                 min_cluster_size=3, sigreg_filter=True, target_outliers=None):
        self.method = method
        self.t_grid = t_grid
        self.eps_grid = eps_grid
        self.min_pts_grid = min_pts_grid
        self.consensus_threshold = consensus_threshold
        self.eps_k = eps_k
        self.normalize = normalize
        self.ratio_max = ratio_max
        self.mean_max = mean_max
        self.min_cluster_size = min_cluster_size
        self.sigreg_filter = sigreg_filter
        self.target_outliers = target_outliers

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        width = len(str(len(X)))
        embeddings = EmbeddingSet([f"{i:0{width}d}" for i in range(len(X))], X)
        if self.normalize:
            embeddings = embeddings.normalize()
        result = cluster_scenes(
            embeddings,
            method=self.method,
            t_grid=self.t_grid,
            eps_grid=self.eps_grid,
            min_pts_grid=self.min_pts_grid,
            consensus_threshold=self.consensus_threshold,
            eps_k=self.eps_k,
            ratio_max=self.ratio_max,
            mean_max=self.mean_max,
            min_cluster_size=self.min_cluster_size,
            use_sigreg_filter=self.sigreg_filter,
            target_outliers=self.target_outliers,
        )
        self.labels_ = result.assignment.labels
        self.coassociation_ = result.coassociation.entries
        self.eps_estimate_ = result.eps_estimate
        self.eps_grid_ = result.config.eps_grid
        return self

    @property
    def n_clusters_(self):
        check_is_fitted(self, "labels_")
        return len(set(self.labels_[self.labels_ >= 0].tolist()))
