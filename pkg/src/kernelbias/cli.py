"""Command-line entry point: ``kernelbias {simulate,theorems,verify-spectral,compare}``.

Exit codes are 0 on success, 2 when a verdict fails and 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import BatchSummary, ExperimentConfig, compare_schemes, run_experiment, theorem_suite
from .kernels import KernelSpec
from .optim import StepPlan
from .rng import Pcg32
from .spectral import verify_spectral_suite

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,5,9"`` or a mix such as ``"0-4,10"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def parse_scheme(text: str) -> tuple[str, StepPlan]:
    """``NAME=METHOD:ETAxSTEPS[,ETAxSTEPS...]``, e.g. ``sgd_moderate=sgd:0.1x50,0.01x1000``."""
    try:
        name, rest = text.split("=", 1)
        method, stages = rest.split(":", 1)
        st = [tuple(s.split("x")) for s in stages.split(",")]
        return name, StepPlan(method, tuple((float(e), int(k)) for e, k in st))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad scheme {text!r}: {exc}") from None


def parse_kernel(text: str) -> KernelSpec:
    """``family`` or ``family:key=value,...``, e.g. ``polynomial:c=0.01,m=2``."""
    fam, _, rest = text.partition(":")
    params = {}
    for kv in filter(None, rest.split(",")):
        k, v = kv.split("=")
        params[k] = float(v)
    return KernelSpec.from_dict({"family": fam, **params})


def _emit(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, default=float)
    if path:
        Path(path).write_text(text)
    print(text)


def cmd_simulate(args) -> int:
    base = ExperimentConfig().to_dict()
    if args.config:
        base.update(json.loads(Path(args.config).read_text()))
    flags = {
        "n": args.n, "p": args.p, "noise_sd": args.noise_sd, "n_test": args.n_test,
        "record_every": args.record_every, "output_dir": args.output_dir, "workers": args.workers,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    if args.sq_norm_range:
        base["sq_norm_range"] = args.sq_norm_range
    if args.kernel:
        base["kernel"] = parse_kernel(args.kernel).to_dict()
    if args.seeds:
        base["seeds"] = parse_seeds(args.seeds)
    if args.scheme:
        base["schemes"] = dict(args.scheme)
    config = ExperimentConfig.from_dict(base)
    summary = run_experiment(config)
    out = {"aggregates": summary.aggregates, "E_ratio": summary.e_ratio,
           "pairwise_wilcoxon": summary.pairwise}
    _emit(out, None)
    return EXIT_OK


def cmd_theorems(args) -> int:
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    for k in ("seeds", "k1", "k2", "instance_seed", "eps", "eps_prime"):
        v = getattr(args, k)
        if v is not None:
            overrides[k] = v
    verdict = theorem_suite(overrides)
    _emit(verdict, args.output)
    return EXIT_OK if verdict["passed"] else EXIT_FAIL


def random_dominant(n: int, ratio: float, seed: int) -> np.ndarray:
    """Random symmetric matrix with diagonal in [0.5, 1] and ``max|K_ij| / min K_ii <= ratio``."""
    g = Pcg32.from_labels(seed, "dominant")
    d = g.uniform(0.5, 1.0, n)
    U = np.triu(g.uniform(-1.0, 1.0, n * n).reshape(n, n), 1)
    return np.diag(d) + (U + U.T) * ratio * d.min()


def cmd_verify_spectral(args) -> int:
    if args.matrix:
        p = Path(args.matrix)
        K = np.load(p) if p.suffix == ".npy" else np.loadtxt(p, delimiter=",", ndmin=2)
    else:
        K = random_dominant(args.n, args.ratio, args.seed)
    report = verify_spectral_suite(K)
    _emit(report.to_dict(), args.output)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_compare(args) -> int:
    d = json.loads(Path(args.batch).read_text())
    summary = BatchSummary.from_dict(d.get("summary", d))
    res = compare_schemes(summary, args.metric, args.a, args.b, args.alternative)
    _emit(res.to_dict(), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kernelbias", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="seed batch on synthetic sine-regression data")
    s.add_argument("--config", help="JSON config; flags override it")
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--noise-sd", type=float)
    s.add_argument("--sq-norm-range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--n-test", type=int)
    s.add_argument("--kernel", help="e.g. polynomial:c=0.01,m=2")
    s.add_argument("--scheme", type=parse_scheme, action="append",
                   help="NAME=METHOD:ETAxSTEPS[,...]; repeatable, replaces the defaults")
    s.add_argument("--seeds", help="e.g. 0-19 or 1,2,3")
    s.add_argument("--record-every", type=int)
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("theorems", help="theorem-level checks on a dominant instance")
    t.add_argument("--config", help="JSON overrides")
    t.add_argument("--seeds", type=int, help="number of SGD seeds")
    t.add_argument("--k1", type=int)
    t.add_argument("--k2", type=int)
    t.add_argument("--instance-seed", type=int)
    t.add_argument("--eps", type=float)
    t.add_argument("--eps-prime", type=float)
    t.add_argument("--output", help="also write the verdict here")
    t.set_defaults(func=cmd_theorems)

    v = sub.add_parser("verify-spectral", help="inequality suite on one Gram matrix")
    v.add_argument("--matrix", help=".npy or comma-separated text file")
    v.add_argument("--n", type=int, default=10)
    v.add_argument("--ratio", type=float, default=1e-2)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output")
    v.set_defaults(func=cmd_verify_spectral)

    c = sub.add_parser("compare", help="Wilcoxon signed-rank test on a batch JSON")
    c.add_argument("batch")
    c.add_argument("--metric", default="rq")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--alternative", choices=("greater", "less"), default="greater")
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
