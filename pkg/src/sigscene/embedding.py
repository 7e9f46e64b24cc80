"""Embedding containers, SIGReg normalization and pairwise similarities.

Two similarity measures are provided:

* ``gaussian_cosine`` -- the cosine of two embeddings mapped affinely onto
  ``[0, 1]``.
* ``char_fn`` -- agreement of the empirical characteristic functions of the
  two embeddings' coordinates, averaged over a fixed grid of frequencies.

Similarity matrices are dense and symmetric; each unordered pair is
evaluated exactly once through the same kernel used by the scalar
functions, so a matrix entry is bit-identical to the scalar result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .exceptions import DimMismatch, EmptyGrid, FormatError, InvalidParam, ZeroVector

ZERO_NORM_TOL = 1e-12
DEFAULT_T_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
METHODS = ("gaussian_cosine", "char_fn")


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D embedding, got shape {arr.shape}")
    if arr.size < 2:
        raise ValueError("embedding dimension must be at least 2")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


def _norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(v * v)))


def sigreg_normalize(v) -> np.ndarray:
    """Rescale ``v`` to Euclidean norm ``sqrt(d)`` keeping its direction.

    Raises
    ------
    ZeroVector
        If ``||v|| < 1e-12``.
    """
    v = _as_vector(v)
    norm = _norm(v)
    if norm < ZERO_NORM_TOL:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm * np.sqrt(v.size)


def sigreg_normalize_rows(X) -> np.ndarray:
    """Row-wise :func:`sigreg_normalize` for an ``(n, d)`` matrix."""
    X = check_array(X, dtype=float, ensure_min_features=2)
    norms = np.sqrt(np.sum(X * X, axis=1))
    bad = np.flatnonzero(norms < ZERO_NORM_TOL)
    if bad.size:
        raise ZeroVector(f"row {int(bad[0])} has zero norm")
    return X / norms[:, None] * np.sqrt(X.shape[1])


# Row kernels. The scalar similarity functions call these with a single row so
# that matrix entries and scalar results share one code path.

def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(X * X, axis=1))
    bad = np.flatnonzero(norms < ZERO_NORM_TOL)
    if bad.size:
        raise ZeroVector(f"row {int(bad[0])} has zero norm")
    return X / norms[:, None]


def _gaussian_cosine_rows(ui: np.ndarray, U: np.ndarray) -> np.ndarray:
    cos = np.sum(U * ui, axis=1)
    return np.clip(0.5 * (1.0 + cos), 0.0, 1.0)


def _char_fn_rows(phi_i: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    gap = np.mean(np.abs(Phi - phi_i) / 2.0, axis=1)
    return np.clip(1.0 - gap, 0.0, 1.0)


def _check_pair(zi, zj) -> tuple[np.ndarray, np.ndarray]:
    zi, zj = _as_vector(zi), _as_vector(zj)
    if zi.size != zj.size:
        raise DimMismatch(f"dimensions differ: {zi.size} != {zj.size}")
    return zi, zj


def _check_grid(t_grid, allow_zero=True) -> np.ndarray:
    if t_grid is None:
        raise EmptyGrid("t_grid is required")
    grid = np.asarray(t_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGrid("t_grid is empty")
    if not np.all(np.isfinite(grid)):
        raise InvalidParam("t_grid contains non-finite values")
    if not allow_zero and np.any(grid == 0.0):
        raise InvalidParam("t=0 carries no information and must be excluded")
    return grid


def gaussian_cosine_similarity(zi, zj) -> float:
    """``(1 + cos(zi, zj)) / 2``, a symmetric score in ``[0, 1]``."""
    zi, zj = _check_pair(zi, zj)
    U = _unit_rows(np.vstack([zi, zj]))
    return float(_gaussian_cosine_rows(U[0], U[1:2])[0])


def empirical_char_fn(v, t_grid) -> np.ndarray:
    """Empirical characteristic function of the coordinates of ``v``.

    Each coordinate is treated as one draw of a scalar distribution, so
    ``phi(t) = mean_k exp(1j * t * v[k])``.

    Returns
    -------
    ndarray of complex, shape ``(len(t_grid),)``
    """
    v = _as_vector(v)
    grid = _check_grid(t_grid)
    return np.mean(np.exp(1j * np.outer(grid, v)), axis=1)


def char_fn_similarity(zi, zj, t_grid=DEFAULT_T_GRID) -> float:
    """One minus the mean half-modulus gap of the two empirical CFs."""
    zi, zj = _check_pair(zi, zj)
    grid = _check_grid(t_grid, allow_zero=False)
    phi_i = empirical_char_fn(zi, grid)
    phi_j = empirical_char_fn(zj, grid)
    return float(_char_fn_rows(phi_i, phi_j[None, :])[0])


@dataclass(frozen=True)
class EmbeddingSet:
    """Named embeddings, one row per image."""

    image_ids: list
    matrix: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        ids = list(self.image_ids)
        if any(not isinstance(i, str) or not i for i in ids):
            raise ValueError("image ids must be non-empty strings")
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise ValueError(f"duplicate image id {dup!r}")
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2:
            if matrix.size == 0 and not ids:
                matrix = matrix.reshape(0, 2)
            else:
                raise ValueError("embedding matrix must be 2-D")
        if matrix.shape[0] != len(ids):
            raise ValueError(f"{matrix.shape[0]} rows for {len(ids)} image ids")
        if matrix.shape[1] < 2:
            raise ValueError("embedding dimension must be at least 2")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embedding matrix contains non-finite values")
        if self.normalized and len(ids):
            norms = np.linalg.norm(matrix, axis=1)
            if not np.allclose(norms, np.sqrt(matrix.shape[1]), rtol=1e-6, atol=0):
                raise ValueError("normalized=True but row norms differ from sqrt(d)")
        object.__setattr__(self, "image_ids", ids)
        object.__setattr__(self, "matrix", matrix)

    def __len__(self):
        return len(self.image_ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def normalize(self) -> "EmbeddingSet":
        if self.normalized:
            return self
        if not len(self):
            return EmbeddingSet([], self.matrix, normalized=True)
        return EmbeddingSet(self.image_ids, sigreg_normalize_rows(self.matrix), normalized=True)

    def subset(self, indices) -> "EmbeddingSet":
        indices = list(indices)
        return EmbeddingSet(
            [self.image_ids[i] for i in indices],
            self.matrix[indices],
            normalized=self.normalized,
        )


@dataclass(frozen=True)
class SimilarityMatrix:
    ids: list
    entries: np.ndarray
    method: str = "gaussian_cosine"


@dataclass(frozen=True)
class DistanceMatrix:
    ids: list
    entries: np.ndarray = field(repr=False)

    @classmethod
    def from_array(cls, entries, ids=None) -> "DistanceMatrix":
        D = np.asarray(entries, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.all(np.isfinite(D)) or np.any(D < 0):
            raise ValueError("distances must be finite and non-negative")
        if not np.array_equal(D, D.T):
            raise ValueError("distance matrix must be symmetric")
        if ids is None:
            ids = [f"{i}" for i in range(D.shape[0])]
        return cls(list(ids), D)

    def __len__(self):
        return len(self.ids)


def pairwise_similarity(embeddings: EmbeddingSet, method="gaussian_cosine", t_grid=None) -> SimilarityMatrix:
    """Dense symmetric similarity matrix with unit diagonal.

    Parameters
    ----------
    embeddings : EmbeddingSet
    method : {'gaussian_cosine', 'char_fn'}
    t_grid : sequence of float, optional
        Frequencies for ``char_fn``; required for that method only.
    """
    if method not in METHODS:
        raise InvalidParam(f"unknown similarity method {method!r}")
    if method == "char_fn":
        grid = _check_grid(t_grid, allow_zero=False)
    elif t_grid is not None:
        raise InvalidParam("t_grid only applies to the char_fn method")
    n = len(embeddings)
    if n < 1:
        raise InvalidParam("need at least one embedding")
    X = embeddings.matrix
    ids = embeddings.image_ids
    S = np.eye(n)

    if method == "gaussian_cosine":
        norms = np.sqrt(np.sum(X * X, axis=1))
        bad = np.flatnonzero(norms < ZERO_NORM_TOL)
        if bad.size:
            raise ZeroVector(f"image {ids[bad[0]]!r} has a zero embedding")
        feats = X / norms[:, None]
        kernel = _gaussian_cosine_rows
    else:
        feats = np.mean(np.exp(1j * (grid[None, :, None] * X[:, None, :])), axis=2)
        kernel = _char_fn_rows

    for i in range(n - 1):
        row = kernel(feats[i], feats[i + 1:])
        S[i, i + 1:] = row
        S[i + 1:, i] = row
    return SimilarityMatrix(list(ids), S, method)


def to_distance(sim: SimilarityMatrix) -> DistanceMatrix:
    D = 1.0 - sim.entries
    np.fill_diagonal(D, 0.0)
    return DistanceMatrix(list(sim.ids), np.clip(D, 0.0, 1.0))


class SIGRegNormalizer(TransformerMixin, BaseEstimator):
    """Stateless transformer scaling each row to norm ``sqrt(n_features)``."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        return sigreg_normalize_rows(X)


def read_embeddings(path) -> EmbeddingSet:
    """Load ``{"image": ..., "embedding": [...]}`` JSON Lines."""
    ids, rows = [], []
    seen = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                name = rec["image"]
                vec = [float(x) for x in rec["embedding"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"bad embedding record ({exc})", lineno) from None
            if not isinstance(name, str) or not name:
                raise FormatError("image must be a non-empty string", lineno)
            if name in seen:
                raise FormatError(f"duplicate image {name!r} (first on line {seen[name]})", lineno)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FormatError(f"embedding has {len(vec)} values, expected {dim}", lineno)
            if dim < 2:
                raise FormatError("embedding dimension must be at least 2", lineno)
            if not np.all(np.isfinite(vec)):
                raise FormatError("embedding contains non-finite values", lineno)
            seen[name] = lineno
            ids.append(name)
            rows.append(vec)
    matrix = np.array(rows, dtype=float).reshape(len(rows), dim if dim else 2)
    return EmbeddingSet(ids, matrix)


def write_embeddings(path, embeddings: EmbeddingSet) -> None:
    # repr-precision floats keep the round trip exact
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, row in zip(embeddings.image_ids, embeddings.matrix):
            fh.write(json.dumps({"image": name, "embedding": [float(x) for x in row]}) + "\n")
