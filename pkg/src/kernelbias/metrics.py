"""Directional-bias and generalization metrics, the quadratic level-set bound and
the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import KernelSpec, cross_gram
from .rng import Pcg32
from .spectral import EigenDecomposition, eig_sym


@dataclass(frozen=True)
class BiasMeasurement:
    rq: float
    rq_ratio: float
    rrq: float
    gamma1: float
    gamma_n: float
    mode: str = "error"

    def to_dict(self) -> dict:
        return asdict(self)


def bias_measurement(eig: EigenDecomposition, K, b, mode: str = "error") -> BiasMeasurement:
    """Rayleigh quotient of ``b`` under ``K`` and its normalisation by ``gamma_1^2``.

    With ``mode="gradient"`` the direction measured is ``K^2 b`` instead of ``b``.
    """
    K = np.asarray(K, dtype=float)
    v = np.asarray(b, dtype=float).reshape(-1)
    if mode == "gradient":
        v = K @ (K @ v)
    elif mode != "error":
        raise ValueError("mode must be 'error' or 'gradient'")
    vv = float(np.dot(v, v))
    if vv == 0.0:
        raise ValueError("b must be nonzero")
    Kv = K @ v
    rq = float(np.dot(Kv, Kv)) / vv
    g1 = float(eig.gammas[0])
    return BiasMeasurement(rq, math.sqrt(rq), rq / g1**2, g1, float(eig.gammas[-1]), mode)


def estimation_error(K, b) -> float:
    b = np.asarray(b, dtype=float).reshape(-1)
    return float(b @ (np.asarray(K, dtype=float) @ b))


def delta_star(a: float, n: int, gamma1: float) -> float:
    """Smallest estimation error on the level set where training loss equals ``a``."""
    if a < 0 or gamma1 <= 0:
        raise ValueError("need a >= 0 and gamma1 > 0")
    return 2.0 * n * a / gamma1


def training_loss(K, alpha, y) -> float:
    r = np.asarray(K, dtype=float) @ np.asarray(alpha, dtype=float) - np.asarray(y, dtype=float)
    return float(np.dot(r, r)) / (2 * len(r))


def quad_levelset_bound(A, a: float) -> tuple[float, np.ndarray]:
    """Lower bound ``a / rho_1(A^T A)`` on ``||v||^2`` over ``{v : ||A v||^2 = a}``.

    Returns the bound and the unit top eigenvector of ``A^T A``, along which
    it is attained.
    """
    A = np.asarray(A, dtype=float)
    if a < 0:
        raise ValueError("a must be nonnegative")
    if not np.any(A):
        raise ValueError("A must be nonzero")
    eig = eig_sym(A.T @ A)
    return a / float(eig.gammas[0]), eig.top


def levelset_min_sample(A, a: float, samples: int, seed: int) -> float:
    """Smallest ``||v||^2`` over random points of the level set ``||A v||^2 = a``.

    Directions are uniform on the unit sphere and rescaled onto the level set.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[1]
    V = Pcg32.from_labels(seed, "levelset").normal(samples * d).reshape(samples, d)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    av = np.einsum("ij,ij->i", V @ A.T, V @ A.T)
    av = av[av > 0]
    return float(np.min(a / av))


def prediction_error(spec: KernelSpec, X_train, alpha, X_test, y_test) -> float:
    """Mean squared error of ``f(x) = alpha^T K(x, X_train)`` on a test set."""
    y_test = np.asarray(y_test, dtype=float).reshape(-1)
    if len(y_test) == 0:
        raise ValueError("empty test set")
    pred = cross_gram(spec, X_test, X_train) @ np.asarray(alpha, dtype=float)
    return float(np.mean((pred - y_test) ** 2))


@dataclass(frozen=True)
class GeneralizationRecord:
    train_loss: float
    est_error: float
    delta_star: float
    M_bound: float
    pred_mse: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def generalization_record(K, alpha, alpha_hat, y, eig: EigenDecomposition | None = None,
                          eps_prime: float = 0.01, pred_mse: float | None = None) -> GeneralizationRecord:
    K = np.asarray(K, dtype=float)
    eig = eig or eig_sym(K)
    a = training_loss(K, alpha, y)
    b = np.asarray(alpha, dtype=float) - np.asarray(alpha_hat, dtype=float)
    g1, gn = float(eig.gammas[0]), float(eig.gammas[-1])
    return GeneralizationRecord(
        train_loss=a,
        est_error=estimation_error(K, b),
        delta_star=delta_star(a, K.shape[0], g1),
        M_bound=g1 / gn * (1 - eps_prime),
        pred_mse=pred_mse,
    )


# --- Wilcoxon signed rank ---------------------------------------------------

EXACT_MAX = 20


class UndefinedTestError(ValueError):
    pass


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    method: str
    alternative: str
    n_used: int
    zero_method: str = "drop"
    tie_method: str = "average"
    continuity: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    s = v[order]
    ranks = np.empty(len(v))
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_upper_tail(ranks: np.ndarray, w: float) -> float:
    """P(W+ >= w) under the null, by counting sign patterns.

    Ranks are integers or half-integers, so doubling them gives an integer
    subset-sum count over all ``2**m`` patterns.
    """
    r2 = np.rint(2 * ranks).astype(int)
    counts = np.zeros(int(r2.sum()) + 1)
    counts[0] = 1.0
    for r in r2:  # every rank is >= 1
        counts[r:] = counts[r:] + counts[:-r]
    w2 = int(round(2 * w))
    return float(counts[w2:].sum() / 2.0 ** len(r2))


def wilcoxon_signed_rank(x, y, alternative: str = "greater", method: str = "auto") -> WilcoxonResult:
    """One-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. The
    statistic is the rank sum of positive differences. With ``method="auto"``
    the p-value is exact for at most 20 nonzero differences and otherwise
    uses the normal approximation with tie-corrected variance and a 0.5
    continuity correction.

    Raises ``UndefinedTestError`` when every difference is zero.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape or len(x) == 0:
        raise ValueError("x and y must be nonempty with equal lengths")
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    d = x - y
    d = d[d != 0]
    m = len(d)
    if m == 0:
        raise UndefinedTestError("all differences are zero")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = m * (m + 1) / 2
    if method == "auto":
        method = "exact" if m <= EXACT_MAX else "normal"
    if method == "exact":
        if alternative == "greater":
            p = _exact_upper_tail(ranks, w_plus)
        else:
            p = _exact_upper_tail(ranks, total - w_plus)
        return WilcoxonResult(w_plus, min(p, 1.0), "exact", alternative, m)
    if method != "normal":
        raise ValueError("method must be 'auto', 'exact' or 'normal'")
    _, counts = np.unique(np.abs(d), return_counts=True)
    var = m * (m + 1) * (2 * m + 1) / 24 - np.sum(counts**3 - counts) / 48
    mean = total / 2
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / math.sqrt(var)
    else:
        z = (mean - w_plus - 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2))
    return WilcoxonResult(w_plus, p, "normal", alternative, m, continuity=True)
