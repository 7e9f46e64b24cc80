"""Gaussian-shape diagnostics for clusters of embeddings.

``validate_cluster_gaussian`` checks two conditions on a cluster: the
covariance spectrum is close to isotropic (``lambda_max / lambda_min`` below
a threshold) and the cluster mean is close to the origin.

``sliced_isotropy`` complements it with a distributional check: the
standardized embeddings are projected on random unit directions and each
1-D projection is tested for normality with the Epps-Pulley statistic.
Critical values are calibrated by Monte-Carlo under the standard normal
and cached per sample size.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.covariance import ledoit_wolf

from .exceptions import DegenerateSample, InvalidParam, TooFewSamples

CALIBRATION_SEED = 20250101
CALIBRATION_REPLICATIONS = 1000
MIN_EP_SAMPLES = 8


@dataclass(frozen=True)
class ClusterStats:
    mean: np.ndarray
    covariance: np.ndarray
    eigenvalues: np.ndarray  # descending


@dataclass(frozen=True)
class IsotropyVerdict:
    eigenvalue_ratio: float
    mean_norm: float
    is_isotropic: bool
    mean_near_zero: bool
    passes: bool

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SliceReport:
    directions: np.ndarray
    statistics: np.ndarray
    critical_value: float
    pass_fraction: float

    def summary(self):
        return {
            "slices": int(len(self.statistics)),
            "critical_value": float(self.critical_value),
            "pass_fraction": float(self.pass_fraction),
            "max_statistic": float(np.max(self.statistics)),
            "median_statistic": float(np.median(self.statistics)),
        }


def _as_matrix(embeddings) -> np.ndarray:
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected an (n, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("embeddings contain non-finite values")
    return X


def cluster_stats(embeddings, shrinkage=False) -> ClusterStats:
    """Mean, covariance and descending covariance spectrum of a cluster.

    Parameters
    ----------
    embeddings : array_like, shape (n, d)
    shrinkage : bool, default False
        If False the unbiased sample covariance (divisor ``n - 1``) is used.
        If True the Ledoit-Wolf shrinkage estimate is used instead, which
        stays well conditioned when ``n`` is comparable to ``d``.
    """
    X = _as_matrix(embeddings)
    n = X.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 embeddings, got {n}")
    mean = X.mean(axis=0)
    centered = X - mean
    if shrinkage:
        cov = ledoit_wolf(centered, assume_centered=True)[0]
    else:
        cov = np.atleast_2d(np.cov(centered.T, ddof=1))
    cov = 0.5 * (cov + cov.T)
    eigenvalues = np.linalg.eigvalsh(cov)[::-1]
    return ClusterStats(mean=mean, covariance=cov, eigenvalues=eigenvalues)


def validate_cluster_gaussian(embeddings, ratio_max=10.0, mean_max=1.0, eps=1e-8, shrinkage=False) -> IsotropyVerdict:
    """Check spectral isotropy and a near-zero mean for one cluster.

    ``eigenvalue_ratio = lambda_max / (lambda_min + eps)``, floored at 1;
    both conditions are strict inequalities so boundary values fail.
    """
    stats = cluster_stats(embeddings, shrinkage=shrinkage)
    lam = np.clip(stats.eigenvalues, 0.0, None)
    ratio = max(1.0, float(lam[0] / (lam[-1] + eps)))
    mean_norm = float(np.linalg.norm(stats.mean))
    is_isotropic = ratio < ratio_max
    mean_near_zero = mean_norm < mean_max
    return IsotropyVerdict(
        eigenvalue_ratio=ratio,
        mean_norm=mean_norm,
        is_isotropic=bool(is_isotropic),
        mean_near_zero=bool(mean_near_zero),
        passes=bool(is_isotropic and mean_near_zero),
    )


def random_slices(d: int, m: int, seed: int) -> np.ndarray:
    """``m`` random unit directions in ``R^d`` (rows), Gaussian then normalized."""
    if d < 2 or m < 1:
        raise InvalidParam(f"need d >= 2 and m >= 1, got d={d}, m={m}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((m, d))
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def _ep_closed_form(y: np.ndarray) -> float:
    n = y.size
    diff = y[:, None] - y[None, :]
    pair_term = np.exp(-0.5 * diff * diff).sum() / n
    cross_term = np.sqrt(2.0) * np.exp(-0.25 * y * y).sum()
    return float(pair_term - cross_term + n / np.sqrt(3.0))


def _standardize_1d(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < MIN_EP_SAMPLES:
        raise TooFewSamples(f"Epps-Pulley needs at least {MIN_EP_SAMPLES} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    centered = x - x.mean()
    sd = np.sqrt(np.mean(centered * centered))
    if sd <= 1e-12:
        raise DegenerateSample("sample standard deviation is zero")
    return centered / sd


def epps_pulley_1d(sample) -> float:
    """Epps-Pulley normality statistic of a 1-D sample.

    The sample is standardized (population variance) and the weighted
    L2 distance between its empirical characteristic function and
    ``exp(-t**2 / 2)`` is evaluated in closed form, with a standard normal
    weight on ``t``::

        T = (1/n) sum_jk exp(-(y_j - y_k)**2 / 2)
            - sqrt(2) sum_j exp(-y_j**2 / 4) + n / sqrt(3)

    Large values indicate departure from normality.
    """
    return max(0.0, _ep_closed_form(_standardize_1d(sample)))


def _ep_null_distribution(n: int, replications: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.empty(replications)
    for r in range(replications):
        out[r] = epps_pulley_1d(rng.standard_normal(n))
    return out


class CalibrationCache:
    """Thread-safe store of Monte-Carlo critical values.

    With a ``path`` the entries persist as a JSON list of
    ``{"n", "alpha", "critical_value", "replications", "seed"}`` objects; the
    file is written whenever a new entry is computed.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries = {}
        self._loaded = False

    @staticmethod
    def _key(n, alpha, replications, seed):
        return (int(n), float(alpha), int(replications), int(seed))

    def _load(self):
        if self._loaded:
            return
        self._loaded = True
        if self.path is None or not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for e in json.load(fh):
                key = self._key(e["n"], e["alpha"], e["replications"], e["seed"])
                self._entries[key] = float(e["critical_value"])

    def _save(self):
        if self.path is None:
            return
        entries = [
            {"n": k[0], "alpha": k[1], "replications": k[2], "seed": k[3], "critical_value": v}
            for k, v in sorted(self._entries.items())
        ]
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(entries, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.path)

    def critical_value(self, n, alpha=0.05, replications=CALIBRATION_REPLICATIONS, seed=CALIBRATION_SEED):
        if not 0.0 < alpha < 1.0:
            raise InvalidParam(f"alpha must lie in (0, 1), got {alpha}")
        if n < MIN_EP_SAMPLES:
            raise TooFewSamples(f"cannot calibrate for n={n}")
        key = self._key(n, alpha, replications, seed)
        with self._lock:
            self._load()
            if key not in self._entries:
                null = _ep_null_distribution(int(n), int(replications), int(seed))
                self._entries[key] = float(np.quantile(null, 1.0 - alpha))
                self._save()
            return self._entries[key]


default_cache = CalibrationCache()


def critical_value(n, alpha=0.05, cache=None) -> float:
    """Upper ``alpha`` quantile of the Epps-Pulley statistic for size ``n``."""
    return (cache or default_cache).critical_value(n, alpha)


def standardize_columns(X) -> np.ndarray:
    """Center by the column mean and divide by the column standard deviation.

    Constant columns are centered but left unscaled.
    """
    X = _as_matrix(X)
    centered = X - X.mean(axis=0)
    scale = centered.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    return centered / scale


def sliced_isotropy(embeddings, m=32, seed=0, alpha=0.05, cache=None) -> SliceReport:
    """Test normality of ``m`` random 1-D projections of the embeddings."""
    X = _as_matrix(embeddings)
    n, d = X.shape
    if n < MIN_EP_SAMPLES:
        raise TooFewSamples(f"sliced test needs at least {MIN_EP_SAMPLES} embeddings, got {n}")
    directions = random_slices(d, m, seed)
    projections = standardize_columns(X) @ directions.T
    statistics = np.empty(m)
    for k in range(m):
        try:
            statistics[k] = epps_pulley_1d(projections[:, k])
        except DegenerateSample as exc:
            raise DegenerateSample(f"slice {k}: {exc}") from None
    crit = critical_value(n, alpha, cache)
    return SliceReport(
        directions=directions,
        statistics=statistics,
        critical_value=crit,
        pass_fraction=float(np.count_nonzero(statistics <= crit)) / m,
    )
