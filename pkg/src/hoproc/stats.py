"""Statistical primitives for the verification suite."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import cdist

from . import rng

DEFAULT_PERMUTATIONS = 500


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    sizes: tuple[int, ...]
    method: str

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "sizes": list(self.sizes), "method": self.method}


def ks_1d(sample, cdf: Callable) -> TestResult:
    """One-sample Kolmogorov-Smirnov test with the asymptotic p-value."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    if len(x) < 8:
        raise ValueError("KS test needs at least 8 observations")
    if x[0] == x[-1]:
        raise ValueError("degenerate sample: all values equal")
    res = sps.kstest(x, cdf, method="asymp")
    return TestResult(float(res.statistic), float(res.pvalue), (len(x),), "ks_1d")


def chi_square_uniform(counts) -> TestResult:
    """Pearson chi-square test of equal cell probabilities (m - 1 degrees of freedom)."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or len(counts) < 2:
        raise ValueError("need a 1-D array of at least two cell counts")
    expected = counts.sum() / len(counts)
    if expected < 5:
        raise ValueError(f"expected count per cell is {expected:.3g} < 5")
    stat = float(np.sum((counts - expected) ** 2) / expected)
    p = float(sps.chi2.sf(stat, len(counts) - 1))
    return TestResult(stat, p, (int(counts.sum()),), "chi_square_uniform")


def energy_statistic(a, b) -> float:
    """V-statistic ``2E|A-B| - E|A-A'| - E|B-B'|``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return float(2 * cdist(a, b).mean() - cdist(a, a).mean() - cdist(b, b).mean())


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def energy_distance_perm(a, b, permutations: int = DEFAULT_PERMUTATIONS, seed: int = 0) -> TestResult:
    """Energy distance with a permutation p-value ``(1 + #{perm ≥ obs}) / (1 + B)``."""
    a, b = _as_2d(a), _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if min(len(a), len(b)) < 50:
        raise ValueError("energy test needs at least 50 observations per sample")
    na, nb = len(a), len(b)
    pooled = np.vstack([a, b])
    D = cdist(pooled, pooled)

    def stat(mask):
        ia = mask.astype(float)
        ib = 1.0 - ia
        Dia = D @ ia
        saa = ia @ Dia
        sab = ib @ Dia
        sbb = ib @ (D @ ib)
        return 2 * sab / (na * nb) - saa / na ** 2 - sbb / nb ** 2

    labels = np.zeros(na + nb, dtype=bool)
    labels[:na] = True
    observed = stat(labels)
    gen = rng.generator(seed, rng.CHANNELS["stats"], 0)
    exceed = 0
    for _ in range(permutations):
        perm = gen.permutation(labels)
        if stat(perm) >= observed - 1e-12 * abs(observed):
            exceed += 1
    p = (1 + exceed) / (1 + permutations)
    return TestResult(float(max(observed, 0.0)), float(p), (na, nb), "energy_distance_perm")


@dataclass(frozen=True)
class MeanCov:
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    n: int


def mean_cov(sample) -> MeanCov:
    """Mean, unbiased covariance, and standard errors (fourth-moment formula for covariances)."""
    x = _as_2d(sample)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    mu = x.mean(axis=0)
    c = x - mu
    cov = c.T @ c / (n - 1)
    mean_se = np.sqrt(np.diag(cov) / n)
    m4 = np.einsum("ki,kj,ki,kj->ij", c, c, c, c) / n
    cov_se = np.sqrt(np.maximum(m4 - (c.T @ c / n) ** 2, 0.0) / n)
    return MeanCov(mu, cov, mean_se, cov_se, n)


def operator_norm_deviation(cov, target=None) -> float:
    cov = np.atleast_2d(cov)
    target = np.eye(len(cov)) if target is None else np.atleast_2d(target)
    return float(np.linalg.norm(cov - target, 2))


def mean_with_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))
