"""Closed-form interpolant, SGD/GD updates, step-size planning and schedule runs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import diag_order, max_offdiag
from .rng import Pcg32, derive_seed
from .spectral import ProjectionPair, eig_sym

DIVERGENCE_FACTOR = 1e8


class IllConditionedError(ValueError):
    pass


class InfeasiblePlanError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting."""
    n = A.shape[0]
    M = np.hstack([A.astype(float), b.reshape(-1, 1).astype(float)])
    for k in range(n):
        piv = k + int(np.argmax(np.abs(M[k:, k])))
        if M[piv, k] == 0.0:
            raise IllConditionedError("matrix is singular")
        if piv != k:
            M[[k, piv]] = M[[piv, k]]
        f = M[k + 1 :, k] / M[k, k]
        M[k + 1 :, k:] -= np.outer(f, M[k, k:])
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (M[k, n] - np.dot(M[k, k + 1 : n], x[k + 1 :])) / M[k, k]
    return x


def closed_form_solution(K, y) -> np.ndarray:
    """Coefficients of the minimum-norm interpolant, ``K^{-1} y``.

    Raises ``IllConditionedError`` when the smallest eigenvalue of ``K`` is not
    above ``1e-10`` times the largest, or the residual check fails.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    g = eig_sym(K).gammas
    if not g[-1] > 1e-10 * g[0]:
        raise IllConditionedError(f"K is not safely positive definite (gamma_n={g[-1]:.3e}, gamma_1={g[0]:.3e})")
    alpha = _solve(K, y)
    if np.linalg.norm(K @ alpha - y) > 1e-8 * np.linalg.norm(y):
        raise IllConditionedError("residual check failed")
    return alpha


def sgd_step(alpha, K, y, i: int, eta: float) -> np.ndarray:
    """One SGD update on sample ``i`` (0-based)."""
    n = len(y)
    if not 0 <= i < n:
        raise IndexError(f"sample index {i} outside [0, {n})")
    Ki = K[i]
    return alpha - eta * (np.dot(Ki, alpha) - y[i]) * Ki


def gd_step(alpha, K, y, eta: float) -> np.ndarray:
    n = len(y)
    return alpha - (eta / n) * (K.T @ (K @ alpha - y))


# --- step-size planning ---------------------------------------------------


@dataclass(frozen=True)
class Feasibility:
    eta1_interval: tuple[float, float]
    eta1_nonempty: bool
    eta2_max: float
    eta_gd_max: float
    constants: dict
    tau: float
    lambdas: tuple
    gammas: tuple
    premise_ok: bool  # minor-component contraction premise of the stage-1 analysis
    notes: tuple = ()

    def recommend(self, k1: int, k2: int, position: float = 0.5) -> tuple[float, float]:
        """Stage step sizes for a two-stage run of ``k1`` then ``k2 - k1`` steps.

        ``eta1`` sits at ``position`` inside the stage-1 interval. ``eta2`` is
        chosen so the expected contraction of the top component over stage 2
        cancels its expected growth over stage 1, which keeps that component
        near its starting size at ``k2`` (the early-stopping point of the
        analysis), capped at half of ``eta2_max``.
        """
        if not self.eta1_nonempty:
            raise InfeasiblePlanError("stage-1 interval is empty")
        lo, hi = self.eta1_interval
        eta1 = lo + position * (hi - lo)
        n = len(self.lambdas)
        lam1 = self.lambdas[0]
        q1 = (n - 1) / n + abs(1 - eta1 * lam1**2) / n
        if k2 <= k1 or q1 <= 1:
            return eta1, 0.5 * self.eta2_max
        eta2 = n / lam1**2 * (1.0 - q1 ** (-k1 / (k2 - k1)))
        return eta1, min(eta2, 0.5 * self.eta2_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta1_interval"] = list(self.eta1_interval)
        return d


def step_constants(lam: np.ndarray, tau: float) -> dict:
    """Minimal admissible constants ``c1`` ... ``c7`` for a sorted diagonal."""
    n = len(lam)
    rt = math.sqrt(n)
    l1, l2, ln = lam[0], lam[1] if n > 1 else lam[0], lam[-1]
    w = 2 * l1 + (n - 2) * tau
    c1 = ln - n * tau
    c2 = l1 + n * tau
    if c1 <= 0:
        raise InfeasiblePlanError(f"lambda_n - n tau = {c1:.3e} <= 0; dominance too weak")
    c3 = c2 / c1**2
    c4 = (l1 + rt * tau) * w * c3
    c5 = c3**2 * w**2 * rt * tau + c4
    D = ln**2 - w * n * tau
    if D > 0 and 1 - c4 * rt * tau / D > 0:
        c6 = (rt * tau - c4**2 * tau / (rt * D) + l2**2 * c4 / D) / (1 - c4 * rt * tau / D)
    else:
        c6 = math.inf
    c7 = rt * tau + c4
    return {"c1": c1, "c2": c2, "c3": c3, "c4": c4, "c5": c5, "c6": c6, "c7": c7, "D": D}


def plan_step_sizes(K) -> Feasibility:
    """Step-size feasibility for two-stage SGD and for GD on Gram matrix ``K``.

    Raises ``InfeasiblePlanError`` when ``lambda_n - n tau <= 0``.
    """
    K = np.asarray(K, dtype=float)
    d = np.diag(K)
    if np.any(d <= 0):
        raise ValueError("diagonal must be positive")
    n = K.shape[0]
    rt = math.sqrt(n)
    lam = d[diag_order(K)]
    tau = max_offdiag(K)
    gam = eig_sym(K).gammas
    c = step_constants(lam, tau)
    l1, l2 = lam[0], lam[1] if n > 1 else lam[0]
    lo_den = l1**2 - c["c5"] * rt * tau
    hi_den = l2**2 + c["c6"] * rt * tau
    lo = 2 / lo_den if lo_den > 0 else math.inf
    hi = 2 / hi_den if math.isfinite(hi_den) else 0.0
    notes = []
    if hi_den >= lo_den:
        notes.append("no spectral separation: lambda_2^2 + c6 sqrt(n) tau >= lambda_1^2 - c5 sqrt(n) tau")
    premise = bool(lam[-1] ** 2 > (2 * l1 + (n - 2) * tau) * n * tau + c["c4"] * rt * tau)
    if not premise:
        notes.append("lambda_n^2 does not exceed the coupling terms")
    return Feasibility(
        eta1_interval=(lo, hi),
        eta1_nonempty=bool(lo < hi),
        eta2_max=1.0 / (l1**2 + c["c7"] * rt * tau),
        eta_gd_max=n / (l1 + n * tau) ** 2,
        constants={k: float(v) for k, v in c.items()},
        tau=tau,
        lambdas=tuple(float(v) for v in lam),
        gammas=tuple(float(v) for v in gam),
        premise_ok=premise,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class StepPlan:
    """A piecewise-constant step schedule for SGD or GD.

    ``stages`` is a tuple of ``(eta, steps)``. Use :meth:`two_stage` (where
    ``k2`` is the final step index, as in ``k1 + 1, ..., k2``) or
    :meth:`single`.
    """

    method: str
    stages: tuple
    feasibility: Feasibility | None = None
    compliant: bool = False

    def __post_init__(self):
        if self.method not in ("sgd", "gd"):
            raise ValueError("method must be 'sgd' or 'gd'")
        stages = tuple((float(e), int(k)) for e, k in self.stages)
        for eta, k in stages:
            if not eta > 0 or k < 0:
                raise ValueError("step sizes must be positive and step counts nonnegative")
        object.__setattr__(self, "stages", stages)
        f = self.feasibility
        if self.compliant:
            if f is None:
                raise ValueError("a compliant plan needs feasibility")
            lo, hi = f.eta1_interval
            if self.method == "sgd":
                if len(stages) != 2 or not (lo < stages[0][0] < hi) or not stages[1][0] < f.eta2_max:
                    raise InfeasiblePlanError("steps fall outside the feasible region")
            elif any(eta >= f.eta_gd_max for eta, _ in stages):
                raise InfeasiblePlanError("GD step exceeds the stability bound")

    @classmethod
    def two_stage(cls, method, eta1, k1, eta2, k2, feasibility=None, compliant=False):
        if k2 < k1:
            raise ValueError("k2 must be at least k1")
        return cls(method, ((eta1, k1), (eta2, k2 - k1)), feasibility, compliant)

    @classmethod
    def single(cls, method, eta, k, feasibility=None, compliant=False):
        return cls(method, ((eta, k),), feasibility, compliant)

    @property
    def total_steps(self) -> int:
        return sum(k for _, k in self.stages)

    def etas(self) -> np.ndarray:
        return np.concatenate([np.full(k, eta) for eta, k in self.stages]) if self.stages else np.zeros(0)

    def to_dict(self) -> dict:
        d = {"method": self.method, "stages": [list(s) for s in self.stages], "compliant": self.compliant}
        if self.feasibility is not None:
            d["feasibility"] = self.feasibility.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepPlan":
        return cls(d["method"], tuple(tuple(s) for s in d["stages"]))


@dataclass
class Trajectory:
    """Per-step record of a run; row ``t`` is the state after ``t`` updates."""

    t: np.ndarray
    alphas: np.ndarray
    bs: np.ndarray
    rq: np.ndarray
    train_loss: np.ndarray
    est_error: np.ndarray
    p1_norm: np.ndarray | None
    pm1_norm: np.ndarray | None
    seed: int
    plan: StepPlan
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def b_norm(self) -> np.ndarray:
        return np.linalg.norm(self.bs, axis=1)

    def to_csv(self, path, columns: dict | None = None, order=None) -> Path:
        """One row per recorded step with a ``# {json}`` header line.

        ``columns`` adds or overrides named per-row arrays and ``order`` fixes
        which columns are written and in what order. Absent or NaN values are
        written as empty fields.
        """
        cols = {
            "t": self.t,
            "rq": self.rq,
            "train_loss": self.train_loss,
            "est_error": self.est_error,
            "p1_norm": self.p1_norm,
            "pm1_norm": self.pm1_norm,
        }
        cols.update(columns or {})
        if order is not None:
            cols = {k: cols.get(k) for k in order}
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps({"seed": int(self.seed), "plan": self.plan.to_dict()}) + "\n")
            w = csv.writer(fh)
            names = list(cols)
            w.writerow(names)
            for r in range(len(self.t)):
                row = []
                for k in names:
                    v = cols[k]
                    if v is None or (isinstance(v[r], float) and math.isnan(v[r])):
                        row.append("")
                    elif k == "t":
                        row.append(str(int(v[r])))
                    else:
                        row.append(repr(float(v[r])))
                w.writerow(row)
        return path


def read_trajectory_csv(path) -> tuple[dict, dict]:
    """Return ``(header, columns)`` from a file written by ``Trajectory.to_csv``."""
    with open(path, newline="") as fh:
        header = json.loads(fh.readline()[2:])
        rows = list(csv.reader(fh))
    names = rows[0]
    cols = {k: np.array([float(r[i]) if r[i] != "" else np.nan for r in rows[1:]]) for i, k in enumerate(names)}
    return header, cols


def sgd_indices(n: int, steps: int, seed: int) -> np.ndarray:
    return Pcg32(derive_seed(seed, "sgd-indices")).integers(n, steps)


def run_schedule(K, y, alpha0, plan: StepPlan, seed: int = 0,
                 projections: ProjectionPair | None = None,
                 alpha_hat=None, record_every: int = 1) -> Trajectory:
    """Run ``plan`` from ``alpha0`` and record the error path.

    SGD samples indices uniformly with replacement from the seeded stream.
    Rows are kept at ``t = 0, record_every, 2 * record_every, ...`` and always
    at the final step.

    Raises ``DivergenceError`` once ``||b_t||`` exceeds ``1e8 * ||b_0||``.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = len(y)
    alpha = np.array(alpha0, dtype=float).reshape(-1)
    if alpha.shape != (n,) or not np.all(np.isfinite(alpha)):
        raise ValueError("alpha0 must be a finite vector of length n")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    ahat = closed_form_solution(K, y) if alpha_hat is None else np.asarray(alpha_hat, dtype=float)
    total = plan.total_steps
    etas = plan.etas()
    idx = sgd_indices(n, total, seed) if plan.method == "sgd" else None
    keep = np.unique(np.r_[np.arange(0, total + 1, record_every), total])
    alphas = np.empty((len(keep), n))
    alphas[0] = alpha
    limit = DIVERGENCE_FACTOR * np.linalg.norm(alpha - ahat)
    r = 1
    KT = K.T
    for t in range(total):
        eta = etas[t]
        if idx is not None:
            i = idx[t]
            Ki = K[i]
            alpha = alpha - eta * (np.dot(Ki, alpha) - y[i]) * Ki
        else:
            alpha = alpha - (eta / n) * (KT @ (K @ alpha - y))
        b = alpha - ahat
        if not np.dot(b, b) <= limit * limit:
            raise DivergenceError(f"||b_t|| exceeded {DIVERGENCE_FACTOR:g} * ||b_0|| at step {t + 1}")
        if r < len(keep) and keep[r] == t + 1:
            alphas[r] = alpha
            r += 1
    B = alphas - ahat
    KB = B @ K.T
    bb = np.einsum("ij,ij->i", B, B)
    kbkb = np.einsum("ij,ij->i", KB, KB)
    with np.errstate(invalid="ignore", divide="ignore"):
        rq = np.where(bb > 0, kbkb / np.where(bb > 0, bb, 1.0), np.nan)
    resid = alphas @ K.T - y
    train = np.einsum("ij,ij->i", resid, resid) / (2 * n)
    est = np.einsum("ij,ij->i", B, KB)
    p1 = pm1 = None
    if projections is not None:
        p1 = np.linalg.norm(B @ projections.P1.T, axis=1)
        pm1 = np.linalg.norm(B @ projections.Pm1.T, axis=1)
    return Trajectory(keep, alphas, B, rq, train, est, p1, pm1, seed, plan)


def step_diagnostics(K, eta: float, projections: ProjectionPair) -> dict:
    """Per-step contraction factors ``q1``, the ``q_{-1}`` upper bound and coupling ``xi``."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    lam = np.diag(K)[diag_order(K)]
    tau = max_offdiag(K)
    l1, l2 = lam[0], lam[1] if n > 1 else lam[0]
    K1 = K[:, projections.lead]
    p1k1 = float(np.dot(projections.P1 @ K1, projections.P1 @ K1))
    q1 = (n - 1) / n + abs(1 - eta * p1k1) / n
    c = step_constants(lam, tau)
    xi = c["c4"] * eta * tau / math.sqrt(n)
    ratio = (l2**2 + (2 * l1 + (n - 1) * tau) * n * tau) / n
    arg = 1 + ratio * (eta**2 * (l2**2 + (n - 1) * tau**2) - 2 * eta)
    return {"q1": q1, "q_minus1_bound": math.sqrt(max(arg, 0.0)), "xi": xi}
