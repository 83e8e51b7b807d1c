"""Seed-batch experiments on synthetic kernel regression and the theorem suite."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import KernelSpec, cross_gram, gram_matrix, simulate_sine_regression
from .metrics import delta_star, wilcoxon_signed_rank, UndefinedTestError
from .optim import StepPlan, closed_form_solution, plan_step_sizes, run_schedule
from .rng import Pcg32, derive_seed
from .spectral import eig_sym, projection_pair

CSV_COLUMNS = ("t", "rq", "rrq", "train_loss", "est_error", "pred_mse", "p1_norm", "pm1_norm")
METRICS = ("rq", "rrq", "pred_mse", "train_loss", "est_error")


def default_schemes() -> dict[str, StepPlan]:
    return {
        "sgd_moderate": StepPlan.two_stage("sgd", 0.1, 50, 0.01, 1050),
        "gd_moderate": StepPlan.two_stage("gd", 0.5, 50, 0.05, 1050),
        "sgd_small": StepPlan.single("sgd", 0.01, 1050),
        "gd_small": StepPlan.single("gd", 0.05, 1050),
    }


@dataclass
class ExperimentConfig:
    n: int = 10
    p: int = 100
    noise_sd: float = 0.1
    sq_norm_range: tuple = (0.49, 1.0)
    n_test: int = 5
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec.polynomial(0.01, 2))
    schemes: dict = field(default_factory=default_schemes)
    seeds: tuple = tuple(range(20))
    record_every: int = 1
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.sq_norm_range = tuple(float(v) for v in self.sq_norm_range)
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.n < 2 or self.p < 1 or self.n_test < 1:
            raise ValueError("need n >= 2, p >= 1 and n_test >= 1")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec.from_dict(self.kernel)
        self.schemes = {
            name: plan if isinstance(plan, StepPlan) else StepPlan.from_dict(plan)
            for name, plan in dict(self.schemes).items()
        }

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "noise_sd": self.noise_sd,
            "sq_norm_range": list(self.sq_norm_range),
            "n_test": self.n_test,
            "kernel": self.kernel.to_dict(),
            "schemes": {k: v.to_dict() for k, v in self.schemes.items()},
            "seeds": list(self.seeds),
            "record_every": self.record_every,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def make_instance(config: ExperimentConfig, seed: int):
    """Train and test sets for one seed, drawn from disjoint substreams."""
    rng = (config.noise_sd, config.sq_norm_range)
    train = simulate_sine_regression(config.n, config.p, rng[0], derive_seed(seed, "train"), rng[1])
    test = simulate_sine_regression(config.n_test, config.p, rng[0], derive_seed(seed, "test"), rng[1])
    return train, test


def run_seed(config: ExperimentConfig, seed: int) -> dict:
    """Every scheme on one seed's instance; writes CSVs when ``output_dir`` is set."""
    train, test = make_instance(config, seed)
    K = gram_matrix(config.kernel, train)
    eig = eig_sym(K)
    g1 = float(eig.gammas[0])
    ahat = closed_form_solution(K, train.y)
    pp = projection_pair(K, lead=int(np.argmax(np.diag(K))))
    Ktest = cross_gram(config.kernel, test.X, train.X)
    out = {"seed": seed, "gamma1": g1, "gamma_n": float(eig.gammas[-1]), "schemes": {}}
    for name, plan in config.schemes.items():
        tr = run_schedule(K, train.y, np.zeros(config.n), plan, seed=derive_seed(seed, name),
                          projections=pp, alpha_hat=ahat, record_every=config.record_every)
        pred = tr.alphas @ Ktest.T - test.y
        pred_mse = np.mean(pred**2, axis=1)
        rrq = tr.rq / g1**2
        if config.output_dir is not None:
            d = Path(config.output_dir)
            d.mkdir(parents=True, exist_ok=True)
            tr.to_csv(d / f"{name}_seed{seed}.csv", {"rrq": rrq, "pred_mse": pred_mse}, CSV_COLUMNS)
        b = tr.bs[-1]
        out["schemes"][name] = {
            "t": tr.t,
            "steps": plan.total_steps,
            "rq": float(tr.rq[-1]),
            "rrq": float(rrq[-1]),
            "pred_mse": float(pred_mse[-1]),
            "train_loss": float(tr.train_loss[-1]),
            "est_error": float(tr.est_error[-1]),
            "kb_norm": float(np.linalg.norm(K @ b)),
            "b_norm": float(np.linalg.norm(b)),
            "p1": tr.p1_norm,
            "pm1": tr.pm1_norm,
        }
    return out


def _stats(v) -> dict:
    v = np.asarray(v, dtype=float)
    return {"median": float(np.median(v)), "mean": float(np.mean(v)),
            "sd": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0}


@dataclass
class BatchSummary:
    """Per-scheme aggregates over a seed batch.

    ``finals[scheme][metric]`` holds per-seed final values in seed order.
    """

    seeds: list
    finals: dict
    aggregates: dict
    e_ratio: dict
    curves: dict
    pairwise: dict
    gammas: dict

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "finals": self.finals,
            "aggregates": self.aggregates,
            "E_ratio": self.e_ratio,
            "curves": self.curves,
            "pairwise_wilcoxon": self.pairwise,
            "gammas": self.gammas,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchSummary":
        return cls(d["seeds"], d["finals"], d.get("aggregates", {}), d.get("E_ratio", {}),
                   d.get("curves", {}), d.get("pairwise_wilcoxon", {}), d.get("gammas", {}))


def summarize(results: list[dict], seeds) -> BatchSummary:
    by_seed = {r["seed"]: r for r in results}
    results = [by_seed[s] for s in seeds]
    names = list(results[0]["schemes"])
    finals, aggregates, e_ratio, curves = {}, {}, {}, {}
    for name in names:
        rs = [r["schemes"][name] for r in results]
        finals[name] = {m: [r[m] for r in rs] for m in METRICS}
        aggregates[name] = {f"final_{m}": _stats(finals[name][m]) for m in ("rq", "pred_mse", "train_loss")}
        e_ratio[name] = float(np.mean([r["kb_norm"] for r in rs]) / np.mean([r["b_norm"] for r in rs]))
        curves[name] = {
            "t": [int(v) for v in rs[0]["t"]],
            "A": np.mean([r["p1"] for r in rs], axis=0).tolist(),
            "B": np.mean([r["pm1"] for r in rs], axis=0).tolist(),
        }
    pairwise = {}
    for m in ("rq", "pred_mse"):
        for a in names:
            for b in names:
                if a == b:
                    continue
                try:
                    p = wilcoxon_signed_rank(finals[a][m], finals[b][m], "greater").p_value
                except UndefinedTestError:
                    p = None
                pairwise[f"{m}:{a}>{b}"] = p
    gammas = {"gamma1": [r["gamma1"] for r in results], "gamma_n": [r["gamma_n"] for r in results]}
    return BatchSummary(list(seeds), finals, aggregates, e_ratio, curves, pairwise, gammas)


def run_experiment(config: ExperimentConfig) -> BatchSummary:
    """Run every scheme on every seed, write CSVs and ``batch.json``, return the summary."""
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(run_seed, [config] * len(config.seeds), config.seeds))
    else:
        results = [run_seed(config, s) for s in config.seeds]
    summary = summarize(results, config.seeds)
    if config.output_dir is not None:
        path = Path(config.output_dir) / "batch.json"
        path.write_text(json.dumps({"config": config.to_dict(), "summary": summary.to_dict()}, indent=1))
    return summary


def compare_schemes(summary: BatchSummary, metric: str, scheme_a: str, scheme_b: str,
                    alternative: str = "greater"):
    """Wilcoxon signed-rank test on per-seed final values of ``metric``."""
    for s in (scheme_a, scheme_b):
        if s not in summary.finals:
            raise KeyError(f"unknown scheme {s!r}")
    if metric not in summary.finals[scheme_a]:
        raise KeyError(f"unknown metric {metric!r}")
    if len(summary.seeds) < 5:
        warnings.warn("fewer than 5 seeds; the test has little power", stacklevel=2)
    return wilcoxon_signed_rank(summary.finals[scheme_a][metric], summary.finals[scheme_b][metric], alternative)


# --- theorem suite -----------------------------------------------------------

THEOREM_DEFAULTS = {
    "diag": [1.0] + [0.9] * 8 + [0.5],
    "offdiag": 1e-4,
    "instance_seed": 0,
    "eps": 0.1,
    "eps_prime": 0.01,
    "k1": 50,
    "k2": 1050,
    "seeds": 200,
    "gd_eta_frac": 0.9,
    "eta1_position": 0.5,
}


def dominant_instance(diag, offdiag: float, seed: int) -> np.ndarray:
    """``diag(diag)`` plus symmetric off-diagonals uniform on ``[-offdiag, offdiag]``."""
    diag = np.asarray(diag, dtype=float)
    n = len(diag)
    U = Pcg32.from_labels(seed, "offdiag").uniform(-offdiag, offdiag, n * n).reshape(n, n)
    U = np.triu(U, 1)
    return np.diag(diag) + U + U.T


def gd_steps_needed(eta: float, gammas, w0, eps_prime: float) -> int:
    """Steps after which GD's ``||K b|| / ||b||`` is at most ``sqrt(1 + eps') gamma_n``.

    Uses ``w_k = (1 - eta gamma_i^2 / n)^k w_0`` in the eigenbasis.
    """
    g = np.asarray(gammas, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    n = len(g)
    q = np.abs(1 - eta * g**2 / n)
    qn, qrest = q[-1], q[:-1].max()
    rest = float(np.sum(w0[:-1] ** 2))
    if rest == 0.0:
        return 0
    if not qrest < qn:
        raise ValueError("bottom component does not decay slowest; closed form gives no k")
    arg = g[-1] ** 2 * eps_prime * w0[-1] ** 2 / (g[0] ** 2 * rest)
    if arg >= 1:
        return 0
    return int(math.ceil(0.5 * math.log(arg) / math.log(qrest / qn)))


def _check(name, lhs, rel, rhs, **extra) -> dict:
    ok = lhs <= rhs if rel == "<=" else lhs >= rhs if rel == ">=" else lhs < rhs
    return {"name": name, "lhs": float(lhs), "relation": rel, "rhs": float(rhs), "passed": bool(ok), **extra}


def theorem_suite(overrides: dict | None = None) -> dict:
    """GD and two-stage SGD on a synthetic dominant instance, checked against the
    directional-bias and generalization inequalities.

    Returns a JSON-ready verdict with every intermediate quantity.
    """
    cfg = dict(THEOREM_DEFAULTS)
    unknown = set(overrides or {}) - set(cfg)
    if unknown:
        raise ValueError(f"unknown overrides: {sorted(unknown)}")
    cfg.update(overrides or {})
    eps, epsp = cfg["eps"], cfg["eps_prime"]
    K = dominant_instance(cfg["diag"], cfg["offdiag"], cfg["instance_seed"])
    n = K.shape[0]
    y = K @ np.ones(n)
    ahat = closed_form_solution(K, y)
    alpha0 = np.zeros(n)
    eig = eig_sym(K)
    g1, gn = float(eig.gammas[0]), float(eig.gammas[-1])
    feas = plan_step_sizes(K)
    pp = projection_pair(K, lead=int(np.argmax(np.diag(K))))
    checks = []

    # GD
    eta_gd = cfg["gd_eta_frac"] * feas.eta_gd_max
    w0 = eig.G.T @ (alpha0 - ahat)
    k_gd = gd_steps_needed(eta_gd, eig.gammas, w0, epsp)
    gd = run_schedule(K, y, alpha0, StepPlan.single("gd", eta_gd, k_gd, feas, True),
                      alpha_hat=ahat, record_every=max(k_gd, 1))
    b = gd.bs[-1]
    gd_ratio = float(np.linalg.norm(K @ b) / np.linalg.norm(b))
    checks.append(_check("gd.ratio_lower", gd_ratio, ">=", gn))
    checks.append(_check("gd.ratio_upper", gd_ratio, "<=", math.sqrt(1 + epsp) * gn))
    a_gd = float(gd.train_loss[-1])
    d_gd = float(gd.est_error[-1])
    ds_gd = delta_star(a_gd, n, g1)
    checks.append(_check("generalization.gd_delta", d_gd, ">=", g1 / gn * (1 - epsp) * ds_gd))

    # two-stage SGD
    k1, k2 = cfg["k1"], cfg["k2"]
    eta1, eta2 = feas.recommend(k1, k2, cfg["eta1_position"])
    plan = StepPlan.two_stage("sgd", eta1, k1, eta2, k2, feas, True)
    seeds = range(cfg["seeds"]) if isinstance(cfg["seeds"], int) else cfg["seeds"]
    kb, bn, dl, b_k1, b_0, a_k1 = [], [], [], [], [], []
    for s in seeds:
        tr = run_schedule(K, y, alpha0, plan, seed=derive_seed(s, "theorem-sgd"),
                          projections=pp, alpha_hat=ahat, record_every=1)
        bk = tr.bs[-1]
        kb.append(np.linalg.norm(K @ bk))
        bn.append(np.linalg.norm(bk))
        dl.append(tr.est_error[-1])
        b_0.append(tr.pm1_norm[0])
        b_k1.append(tr.pm1_norm[k1])
        a_k1.append(tr.p1_norm[k1] / tr.p1_norm[0])
    kb, bn, dl = np.array(kb), np.array(bn), np.array(dl)
    e_ratio = float(kb.mean() / bn.mean())
    checks.append(_check("sgd.E_ratio", e_ratio, ">=", (1 - 2 * eps) * g1))
    checks.append(_check("sgd.stage1_B_contraction", float(np.mean(b_k1)), "<", float(np.mean(b_0))))
    a_sgd = float(kb.mean() ** 2 / (2 * n))  # E[||K alpha - y||]^2 = 2 n a
    a_sgd_sq = float(np.mean(kb**2) / (2 * n))  # E[||K alpha - y||^2] = 2 n a
    ds_sgd = delta_star(a_sgd, n, g1)
    mean_root = float(np.mean(np.sqrt(dl)))
    checks.append(_check("generalization.sgd_delta", mean_root, "<=", (1 + 4 * eps) * math.sqrt(ds_sgd)))
    ds_sgd_sq = delta_star(a_sgd_sq, n, g1)

    return {
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "config": cfg,
        "quantities": {
            "gamma1": g1,
            "gamma_n": gn,
            "tau": feas.tau,
            "feasibility": feas.to_dict(),
            "gd": {"eta": eta_gd, "k": k_gd, "ratio": gd_ratio, "a": a_gd, "delta": d_gd,
                   "delta_star": ds_gd, "M": g1 / gn * (1 - epsp)},
            "sgd": {
                "eta1": eta1, "eta2": eta2, "k1": k1, "k2": k2, "E_ratio": e_ratio,
                "B0_mean": float(np.mean(b_0)), "Bk1_mean": float(np.mean(b_k1)),
                "A_growth_k1_mean": float(np.mean(a_k1)),
                "a_mean_norm_sq": a_sgd, "a_mean_sq_norm": a_sgd_sq,
                "delta_star": ds_sgd, "delta_star_mean_sq_norm": ds_sgd_sq,
                "mean_root_delta": mean_root, "mean_delta": float(dl.mean()),
                "root_delta_over_root_delta_star": mean_root / math.sqrt(ds_sgd),
                "root_delta_over_root_delta_star_mean_sq_norm": mean_root / math.sqrt(ds_sgd_sq),
            },
            "gd_over_sgd_delta_ratio": (d_gd / ds_gd) / (mean_root**2 / ds_sgd),
        },
    }
