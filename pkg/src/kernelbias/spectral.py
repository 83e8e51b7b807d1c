"""Symmetric eigensolver, Gershgorin/interlacing utilities and the
projection pair used to split the SGD error into its two components."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import diag_order, max_offdiag

SYMMETRY_TOL = 1e-10
OFFDIAG_TOL = 1e-14
MAX_SWEEPS = 100


class ConvergenceError(RuntimeError):
    pass


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending with matching unit eigenvectors as columns of ``G``."""

    gammas: np.ndarray
    G: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.G * self.gammas) @ self.G.T

    @property
    def top(self) -> np.ndarray:
        return self.G[:, 0]

    @property
    def bottom(self) -> np.ndarray:
        return self.G[:, -1]


@dataclass(frozen=True)
class GershgorinDisc:
    center: float
    radius: float

    def contains(self, z: float, slack: float = 0.0) -> bool:
        return abs(z - self.center) <= self.radius + slack


@dataclass(frozen=True)
class ProjectionPair:
    """``Pm1`` projects onto the span of every Gram column except ``lead``; ``P1 = I - Pm1``."""

    P1: np.ndarray
    Pm1: np.ndarray
    lead: int = 0


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairings covering all pairs of ``range(m)`` once (m even)."""
    others = list(range(1, m))
    rounds = []
    for _ in range(m - 1):
        players = [0] + others
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        others = others[-1:] + others[:-1]
    return rounds


def eig_sym(K, tol: float = OFFDIAG_TOL, max_sweeps: int = MAX_SWEEPS) -> EigenDecomposition:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order, ``n // 2`` disjoint pairs at a
    time. Sweeps stop once every off-diagonal entry is at most
    ``tol * ||K||_F``. Eigenvectors are signed so that the largest-magnitude
    entry of each column is nonnegative (first such entry on ties).

    Raises
    ------
    ValueError
        If ``K`` is not square or is asymmetric beyond ``1e-10`` relative.
    ConvergenceError
        If the sweep cap is reached.
    """
    A = np.array(K, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    fro = float(np.linalg.norm(A))
    sweeps = 0
    if n > 1 and fro > 0:
        m = n + (n % 2)
        rounds = []
        for p, q in _round_robin(m):
            keep = q < n
            rounds.append((p[keep], q[keep]))
        off = ~np.eye(n, dtype=bool)
        target = tol * fro
        while np.max(np.abs(A[off])) > target:
            if sweeps >= max_sweeps:
                raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
            for p, q in rounds:
                apq = A[p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                p, q, apq = p[active], q[active], apq[active]
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                A[p, q] = 0.0
                A[q, p] = 0.0
                A = 0.5 * (A + A.T)
                V = V @ J
            sweeps += 1
    gammas = np.diag(A).copy()
    order = np.argsort(-gammas, kind="stable")
    gammas = gammas[order]
    G = V[:, order]
    idx = np.argmax(np.abs(G), axis=0)
    signs = np.where(G[idx, np.arange(n)] < 0, -1.0, 1.0)
    return EigenDecomposition(gammas, G * signs, sweeps)


def spectral_norm(K) -> float:
    e = eig_sym(K).gammas
    return float(np.max(np.abs(e))) if e.size else 0.0


def gershgorin_discs(A) -> list[GershgorinDisc]:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    off = np.abs(A)
    np.fill_diagonal(off, 0.0)
    radii = off.sum(axis=1)
    return [GershgorinDisc(float(A[i, i]), float(radii[i])) for i in range(A.shape[0])]


def disc_distance(discs: list[GershgorinDisc], z: float) -> float:
    """Distance from ``z`` to the union of the discs (0 inside)."""
    return min(max(abs(z - d.center) - d.radius, 0.0) for d in discs)


def eigenvalues_within_discs(A, slack_rel: float = 1e-9) -> bool:
    A = np.asarray(A, dtype=float)
    discs = gershgorin_discs(A)
    e = eig_sym(A).gammas
    slack = slack_rel * (float(np.max(np.abs(e))) if e.size else 0.0)
    return all(disc_distance(discs, z) <= slack for z in e)


def eigen_interval_from_dominance(diag, tau: float, n: int | None = None) -> list[tuple[float, float]]:
    """Intervals ``[lambda_i - n tau, lambda_i + n tau]`` around a descending diagonal."""
    d = np.asarray(diag, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if np.any(np.diff(d) > 0):
        raise ValueError("diagonal must be sorted in descending order")
    n = len(d) if n is None else n
    return [(float(v - n * tau), float(v + n * tau)) for v in d]


def check_eigen_intervals(K, slack_rel: float = 1e-9) -> dict:
    """Compare the dominance intervals with the eigenvalues of ``K``.

    Returns the extreme-eigenvalue checks and, for each ``j`` whose interval
    separates from the one above it, whether ``gamma_{j-1} > gamma_j`` holds
    on the predicted sides.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    lam = np.sort(np.diag(K))[::-1]
    tau = max_offdiag(K)
    g = eig_sym(K).gammas
    slack = slack_rel * float(np.max(np.abs(g)))
    out = {
        "top": bool(g[0] <= lam[0] + n * tau + slack),
        "bottom": bool(g[-1] >= lam[-1] - n * tau - slack),
        "separations": [],
    }
    for j in range(1, n):
        if lam[j] + n * tau < lam[j - 1] - n * tau:
            ok = bool(g[j - 1] >= lam[j - 1] - n * tau - slack and g[j] <= lam[j] + n * tau + slack)
            out["separations"].append({"j": j + 1, "passed": ok})
    out["passed"] = out["top"] and out["bottom"] and all(s["passed"] for s in out["separations"])
    return out


def _orthonormal_basis(cols: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalisation pass."""
    n, k = cols.shape
    Q = np.zeros((n, k))
    for j in range(k):
        v = cols[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= np.dot(Q[:, i], v) * Q[:, i]
        nv = np.linalg.norm(v)
        if nv == 0:
            raise RankDeficientError("columns are linearly dependent")
        Q[:, j] = v / nv
    return Q


def projection_pair(K, lead: int = 0) -> ProjectionPair:
    """Projections onto the span of the non-lead Gram columns and its complement.

    Raises
    ------
    RankDeficientError
        If the non-lead columns are numerically rank deficient (smallest
        singular value at most ``1e-10 * ||K||_2``).
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if not 0 <= lead < n:
        raise IndexError("lead column out of range")
    rest = np.delete(K, lead, axis=1)
    if n > 1:
        smin = math.sqrt(max(float(eig_sym(rest.T @ rest).gammas[-1]), 0.0))
        if smin <= 1e-10 * spectral_norm(K):
            raise RankDeficientError(f"non-lead columns are rank deficient (sigma_min={smin:.3e})")
        Q = _orthonormal_basis(rest)
        Pm1 = Q @ Q.T
    else:
        Pm1 = np.zeros((1, 1))
    Pm1 = 0.5 * (Pm1 + Pm1.T)
    return ProjectionPair(np.eye(n) - Pm1, Pm1, lead)


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    passed: bool | None
    applicable: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SpectralReport:
    checks: list[Check]
    n: int
    tau: float
    lambdas: list[float]
    gammas: list[float]
    order: list[int]
    h_eigenvalues: list[float] = field(default_factory=list)
    h_zero_dim: int | None = None
    h_precondition_strict: float | None = None
    h_precondition_weak: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.applicable)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.applicable and not c.passed]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["checks"] = [c.to_dict() for c in self.checks]
        d["passed"] = self.passed
        return d


def interlacing_holds(A, slack_rel: float = 1e-9) -> tuple[bool, float]:
    """Cauchy interlacing between ``A`` and its leading principal submatrix.

    Returns the verdict and the worst violation (nonpositive when it holds).
    """
    A = np.asarray(A, dtype=float)
    a = eig_sym(A).gammas
    b = eig_sym(A[:-1, :-1]).gammas
    worst = -math.inf
    for i in range(len(b)):
        worst = max(worst, b[i] - a[i], a[i + 1] - b[i])
    slack = slack_rel * float(np.max(np.abs(a)))
    return bool(worst <= slack), float(worst)


def verify_spectral_suite(K, slack_rel: float = 1e-9) -> SpectralReport:
    """Evaluate the Gram-matrix spectral inequalities on a concrete ``K``.

    The matrix is relabelled internally so its diagonal is descending (the
    caller's array is untouched). Every inequality is recorded as
    ``lhs <= rhs`` with a slack of ``slack_rel * ||K||_2`` (squared for
    quantities on the ``K^2`` scale). Inequalities whose premises fail are
    recorded as not applicable rather than raising.
    """
    K0 = np.asarray(K, dtype=float)
    order = diag_order(K0)
    K = K0[np.ix_(order, order)]
    n = K.shape[0]
    lam = np.diag(K).copy()
    tau = max_offdiag(K)
    gam = eig_sym(K).gammas
    nrm = float(np.max(np.abs(gam)))
    s1, s2 = slack_rel * nrm, slack_rel * nrm * nrm
    rt = math.sqrt(n)
    checks: list[Check] = []

    def add(name, lhs, rhs, slack, applicable=True, note=""):
        lhs, rhs = float(lhs), float(rhs)
        ok = bool(lhs <= rhs + slack) if applicable else None
        checks.append(Check(name, lhs, rhs, ok, applicable, note))

    gram = K.T @ K
    col_sq = np.diag(gram)
    add("gram.col_norm_lower", np.max(lam**2 - col_sq), 0.0, s2)
    add("gram.col_norm_upper", np.max(col_sq - lam**2), (n - 1) * tau**2, s2)
    w = 2 * lam[0] + (n - 2) * tau
    if n > 1:
        add("gram.col_inner", max_offdiag(gram), w * tau, s2)

    add("eigen.top", gam[0], lam[0] + n * tau, s1)
    add("eigen.bottom", lam[-1] - n * tau, gam[-1], s1)
    seps = [j for j in range(1, n) if lam[j] + n * tau < lam[j - 1] - n * tau]
    if seps:
        worst = max(max(lam[j - 1] - n * tau - gam[j - 1], gam[j] - lam[j] - n * tau) for j in seps)
        add("eigen.separation", worst, 0.0, s1, note=f"{len(seps)} separated gaps")
    else:
        add("eigen.separation", 0.0, 0.0, s1, applicable=False, note="no separated gaps")

    ok, worst = interlacing_holds(K0, slack_rel)
    add("interlacing", worst, 0.0, s1)
    discs = gershgorin_discs(K0)
    add("gershgorin", max(disc_distance(discs, z) for z in gam), 0.0, s1)

    report = SpectralReport(checks, n, tau, lam.tolist(), gam.tolist(), [int(i) for i in order])
    if n < 2:
        return report
    try:
        pp = projection_pair(K, 0)
    except RankDeficientError as exc:
        add("projection.projection", 0.0, 0.0, 0.0, applicable=False, note=str(exc))
        return report
    P1, Pm1 = pp.P1, pp.Pm1
    add("projection.p1_kills_rest", np.max(np.linalg.norm(P1 @ K[:, 1:], axis=0)), 0.0, s1)
    add("projection.pm1_keeps_rest", np.max(np.linalg.norm(Pm1 @ K[:, 1:] - K[:, 1:], axis=0)), 0.0, s1)
    c1 = lam[-1] - n * tau
    c2 = lam[0] + n * tau
    pm1k1 = float(np.linalg.norm(Pm1 @ K[:, 0]))
    p1k1 = float(np.linalg.norm(P1 @ K[:, 0]))
    add("projection.p1_k1_upper", p1k1, lam[0] + rt * tau, s1)
    if c1 > 0:
        c3 = c2 / c1**2
        add("projection.pm1_k1", pm1k1, c3 * w * rt * tau, s1)
        inner = lam[0] ** 2 - c3**2 * w**2 * n * tau**2
        add("projection.p1_k1_lower", math.sqrt(max(inner, 0.0)), p1k1, s1,
            note="" if inner >= 0 else "lower bound is vacuous")
        common = c3**2 * w**2 * n * tau**2
        report.h_precondition_strict = float(common + 2 * w * n * tau - lam[-1] ** 2)
        report.h_precondition_weak = float(common + w * n * tau - (lam[-1] ** 2 - w * n * tau))
    else:
        c3 = None
        add("projection.pm1_k1", pm1k1, math.inf, s1, applicable=False, note="lambda_n - n tau <= 0")

    H = Pm1 @ K @ K.T @ Pm1
    h = eig_sym(0.5 * (H + H.T))
    report.h_eigenvalues = h.gammas.tolist()
    zero_tol = s2 * n
    report.h_zero_dim = int(np.sum(np.abs(h.gammas) <= zero_tol))
    if c3 is not None and report.h_precondition_strict <= 0:
        add("h_spectrum.zero_eigenvalue", float(np.min(np.abs(h.gammas))), 0.0, zero_tol)
        add("h_spectrum.p1_in_kernel", float(np.linalg.norm(H @ P1)), 0.0, zero_tol)
        rest = np.sort(h.gammas)[::-1][: n - 1]
        lo = lam[-1] ** 2 - w * n * tau
        hi = lam[1] ** 2 + (2 * lam[0] + (n - 1) * tau) * n * tau
        add("h_spectrum.interval_lower", lo, float(rest.min()), s2)
        add("h_spectrum.interval_upper", float(rest.max()), hi, s2)
    else:
        why = "lambda_n - n tau <= 0" if c3 is None else "strict precondition violated"
        add("h_spectrum.spectrum", 0.0, 0.0, 0.0, applicable=False, note=why)
    return report
