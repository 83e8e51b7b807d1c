"""Kernel functions, Gram matrices, synthetic data and diagonal dominance."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Pcg32, derive_seed


class Family(str, enum.Enum):
    BILINEAR = "bilinear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    SIGMOID = "sigmoid"
    CUBIC_SPLINE = "cubic_spline"


# required parameters per family
_PARAMS = {
    Family.BILINEAR: (),
    Family.POLYNOMIAL: ("c", "m"),
    Family.RBF: ("gamma",),
    Family.GAUSSIAN: ("sigma",),
    Family.LAPLACE: ("sigma",),
    Family.SIGMOID: ("alpha", "c"),
    Family.CUBIC_SPLINE: (),
}


@dataclass(frozen=True)
class KernelSpec:
    """Tagged kernel descriptor.

    Use the constructors (``KernelSpec.polynomial(c=.01, m=2)`` and so on)
    rather than filling ``params`` by hand; they validate the parameters.
    """

    family: Family
    params: tuple = ()

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        p = dict(self.params)
        missing = set(_PARAMS[fam]) - set(p)
        extra = set(p) - set(_PARAMS[fam])
        if missing or extra:
            raise ValueError(f"{fam.value} kernel takes parameters {_PARAMS[fam]}, got {sorted(p)}")
        for k, v in p.items():
            if not math.isfinite(float(v)):
                raise ValueError(f"parameter {k} must be finite")
        if fam is Family.POLYNOMIAL:
            if int(p["m"]) != p["m"] or p["m"] < 1:
                raise ValueError("polynomial degree m must be a positive integer")
            p["m"] = int(p["m"])
        for k in ("gamma", "sigma", "alpha"):
            if k in p and p[k] <= 0:
                raise ValueError(f"{k} must be strictly positive")
        if fam is Family.SIGMOID and p["c"] < 0:
            raise ValueError("sigmoid offset c must be nonnegative")
        object.__setattr__(self, "params", tuple(sorted((k, float(v) if k != "m" else v) for k, v in p.items())))

    def __getitem__(self, key):
        return dict(self.params)[key]

    @classmethod
    def bilinear(cls):
        return cls(Family.BILINEAR)

    @classmethod
    def polynomial(cls, c: float, m: int):
        return cls(Family.POLYNOMIAL, (("c", c), ("m", m)))

    @classmethod
    def rbf(cls, gamma: float):
        return cls(Family.RBF, (("gamma", gamma),))

    @classmethod
    def gaussian(cls, sigma: float):
        return cls(Family.GAUSSIAN, (("sigma", sigma),))

    @classmethod
    def laplace(cls, sigma: float):
        return cls(Family.LAPLACE, (("sigma", sigma),))

    @classmethod
    def sigmoid(cls, alpha: float, c: float = 0.0):
        return cls(Family.SIGMOID, (("alpha", alpha), ("c", c)))

    @classmethod
    def cubic_spline(cls):
        return cls(Family.CUBIC_SPLINE)

    def to_dict(self) -> dict:
        return {"family": self.family.value, **dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        fam = Family(d.pop("family"))
        return cls(fam, tuple(d.items()))


@dataclass(frozen=True)
class DataSet:
    X: np.ndarray
    y: np.ndarray | None = None
    seed: int = 0
    generator_id: str = "user"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("X must be a nonempty 2-d array")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        X.flags.writeable = False
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.array(self.y, dtype=float).reshape(-1)
            if len(y) != X.shape[0]:
                raise ValueError("y length does not match the number of rows of X")
            y.flags.writeable = False
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class DominanceReport:
    tau: float
    lambda_min_diag: float
    ratio: float
    is_dominant: bool
    threshold: float
    diag_sorted: bool
    order: tuple  # indices sorting the diagonal descending (stable)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _as_vector(x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError("kernel arguments must be vectors")
    if not np.all(np.isfinite(v)):
        raise ValueError("kernel arguments must be finite")
    return v


def _sqdist(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(np.dot(d, d))


def eval_kernel(spec: KernelSpec, x1, x2) -> float:
    """Evaluate ``K(x1, x2)`` for the family described by ``spec``."""
    a, b = _as_vector(x1), _as_vector(x2)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    fam = spec.family
    if fam is Family.BILINEAR:
        return float(np.dot(a, b))
    if fam is Family.POLYNOMIAL:
        return (float(np.dot(a, b)) + spec["c"]) ** spec["m"]
    if fam is Family.SIGMOID:
        return math.tanh(spec["alpha"] * float(np.dot(a, b)) + spec["c"])
    if fam is Family.RBF:
        return math.exp(-spec["gamma"] * _sqdist(a, b))
    if fam is Family.GAUSSIAN:
        return math.exp(-_sqdist(a, b) / (2.0 * spec["sigma"] ** 2))
    if fam is Family.LAPLACE:
        return math.exp(-math.sqrt(_sqdist(a, b)) / spec["sigma"])
    if fam is Family.CUBIC_SPLINE:
        if a.shape != (1,):
            raise ValueError("cubic spline kernel takes scalar inputs")
        s, t = float(a[0]), float(b[0])
        if not (0.0 <= s <= 1.0 and 0.0 <= t <= 1.0):
            raise ValueError("cubic spline kernel inputs must lie in [0, 1]")
        lo, hi = min(s, t), max(s, t)
        # integral of (s-u)_+ (t-u)_+ over [0, 1]
        return lo * lo * hi / 2.0 - lo**3 / 6.0
    raise ValueError(f"unknown family {fam}")


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Matrix of ``K(a_i, b_j)`` for rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    out = np.empty((A.shape[0], B.shape[0]))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = eval_kernel(spec, a, b)
    return out


def gram_matrix(spec: KernelSpec, data) -> np.ndarray:
    """Gram matrix on the rows of ``data`` (a DataSet or an array).

    Only the upper triangle is evaluated; the lower one is its mirror, so the
    result is exactly symmetric.
    """
    X = data.X if isinstance(data, DataSet) else np.atleast_2d(np.asarray(data, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("a Gram matrix needs at least two points")
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            K[i, j] = K[j, i] = eval_kernel(spec, X[i], X[j])
    return K


def max_offdiag(K: np.ndarray) -> float:
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n < 2:
        return 0.0
    return float(np.max(np.abs(K[~np.eye(n, dtype=bool)])))


def diag_order(K: np.ndarray) -> np.ndarray:
    """Permutation listing indices by descending diagonal entry (stable)."""
    return np.argsort(-np.diag(np.asarray(K, dtype=float)), kind="stable")


def dominance_report(K, threshold: float) -> DominanceReport:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("K must be square")
    d = np.diag(K)
    if np.any(d <= 0):
        raise ValueError("diagonal entries must be strictly positive")
    tau = max_offdiag(K)
    lam_min = float(d.min())
    ratio = tau / lam_min
    order = diag_order(K)
    return DominanceReport(
        tau=tau,
        lambda_min_diag=lam_min,
        ratio=ratio,
        is_dominant=bool(ratio <= threshold),
        threshold=float(threshold),
        diag_sorted=bool(np.all(np.diff(d) <= 0)),
        order=tuple(int(i) for i in order),
    )


def _check_range(sq_norm_range) -> tuple[float, float]:
    lo, hi = (float(v) for v in sq_norm_range)
    if not (0 < lo <= hi) or not math.isfinite(hi):
        raise ValueError(f"invalid squared-norm range {sq_norm_range!r}")
    return lo, hi


def _scaled_rows(gen: Pcg32, n: int, d: int, lo: float, hi: float) -> np.ndarray:
    Z = gen.normal(n * d).reshape(n, d)
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    if np.any(norms == 0):
        raise ArithmeticError("degenerate Gaussian draw")
    s = gen.uniform(lo, hi, n)
    return Z / norms[:, None] * np.sqrt(s)[:, None]


def sample_sphere_data(n: int, d: int, seed: int, sq_norm_range=(1.0, 1.0)) -> DataSet:
    """Rows uniform in direction, squared norm uniform on ``sq_norm_range``."""
    lo, hi = _check_range(sq_norm_range)
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    gen = Pcg32.from_labels(seed, "sphere")
    X = _scaled_rows(gen, n, d, lo, hi)
    return DataSet(X, None, seed, "sphere", {"sq_norm_range": [lo, hi]})


def inner_product_threshold(n: int, d: int, delta: float) -> float:
    """Inner-product threshold sqrt(4 log(2 n^2 / delta) / d)."""
    return math.sqrt(4.0 * math.log(2.0 * n * n / delta) / d)


def tau_bound_check(n: int, d: int, delta: float, trials: int, seed: int) -> float:
    """Fraction of trials whose max off-diagonal inner product reaches the threshold.

    Each trial draws ``n`` unit vectors in dimension ``d``; the high-probability
    inner-product bound says this fraction should not exceed ``delta``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    need = 4.0 * math.log(2.0 * n * n / delta)
    if d < need * (1 - 1e-12):
        raise ValueError(f"d={d} is below 4 log(2 n^2 / delta) = {need:.3f}")
    thr = inner_product_threshold(n, d, delta)
    mask = ~np.eye(n, dtype=bool)
    hits = 0
    for t in range(trials):
        X = sample_sphere_data(n, d, derive_seed(seed, "trial", t)).X
        G = X @ X.T
        if np.max(np.abs(G[mask])) >= thr:
            hits += 1
    return hits / trials


def polynomial_constants(c: float, m: int) -> tuple[float, float, float]:
    """``(|g(0)|, |g'(0)|, L)`` for ``g(u) = (u + c)**m`` on [-1, 1]."""
    g0 = abs(c) ** m
    g1 = m * abs(c) ** (m - 1) if m > 1 else 1.0
    L = m * (m - 1) * (1.0 + abs(c)) ** (m - 2) if m > 1 else 0.0
    return g0, g1, L


def predicted_offdiag_bound(spec: KernelSpec, tau_tilde: float) -> float:
    """Bound on ``|K_ij|`` (i != j) for unit-norm data with ``|<x_i, x_j>| <= tau_tilde``.

    Inner-product families use ``|g(0)| + g'(0) tau + (L/2) tau^2``; the
    sigmoid uses ``tanh(alpha tau + c)``; distance families use the
    ``||x_i - x_j||^2 >= 2 (1 - tau)`` form.
    """
    t = float(tau_tilde)
    if not 0 < t < 1:
        raise ValueError("tau_tilde must lie in (0, 1)")
    fam = spec.family
    if fam is Family.BILINEAR:
        return t
    if fam is Family.POLYNOMIAL:
        g0, g1, L = polynomial_constants(spec["c"], spec["m"])
        return g0 + g1 * t + 0.5 * L * t * t
    if fam is Family.SIGMOID:
        return math.tanh(spec["alpha"] * t + spec["c"])
    if fam is Family.RBF:
        return math.exp(-2.0 * spec["gamma"] * (1.0 - t))
    if fam is Family.GAUSSIAN:
        return math.exp(-(1.0 - t) / spec["sigma"] ** 2)
    if fam is Family.LAPLACE:
        return math.exp(-math.sqrt(2.0 * (1.0 - t)) / spec["sigma"])
    raise ValueError(f"no off-diagonal bound for the {fam.value} kernel")


def rbf_gamma_for(c0: float, tau_tilde: float) -> float:
    """Bandwidth ``gamma = -c0 log(tau_tilde)`` at which the RBF bound is ``tau^(2 c0 (1 - tau))``."""
    return -c0 * math.log(tau_tilde)


def simulate_sine_regression(n: int, p: int, noise_sd: float, seed: int,
                             sq_norm_range=(0.49, 1.0)) -> DataSet:
    """Synthetic regression data ``y_i = sum_j sin(x_ij) + eps_i``.

    Rows of ``X`` start as i.i.d. standard normals, then are rescaled so that
    each squared norm is uniform on ``sq_norm_range``; ``y`` is computed from
    the rescaled rows.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not noise_sd >= 0:
        raise ValueError("noise_sd must be nonnegative")
    lo, hi = _check_range(sq_norm_range)
    gen = Pcg32.from_labels(seed, "sine-regression")
    X = _scaled_rows(gen, n, p, lo, hi)
    eps = gen.normal(n) * noise_sd
    y = np.sin(X).sum(axis=1) + eps
    meta = {"n": n, "p": p, "noise_sd": noise_sd, "sq_norm_range": [lo, hi]}
    return DataSet(X, y, seed, "sine-regression", meta)


def save_dataset(ds: DataSet, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (rows of X, then y) and a ``<path>.json`` sidecar."""
    path = Path(path)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    y = ds.y if ds.y is not None else np.full(ds.n, np.nan)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.p)] + ["y"])
        for row, yi in zip(ds.X, y):
            w.writerow([repr(float(v)) for v in row] + ["" if np.isnan(yi) else repr(float(yi))])
    side = {
        "seed": int(ds.seed),
        "generator_id": ds.generator_id,
        "n": ds.n,
        "p": ds.p,
        "noise_sd": ds.meta.get("noise_sd"),
        "sq_norm_range": ds.meta.get("sq_norm_range"),
    }
    json_path.write_text(json.dumps(side, indent=2))
    return csv_path, json_path


def load_dataset(path) -> DataSet:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    with open(path.with_suffix(".csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    ys = [r[-1] for r in rows]
    y = None if all(v == "" for v in ys) else np.array([float(v) for v in ys])
    meta = {k: side.get(k) for k in ("n", "p", "noise_sd", "sq_norm_range")}
    return DataSet(X, y, side["seed"], side["generator_id"], meta)
