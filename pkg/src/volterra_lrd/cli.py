"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 tolerance failure against
the manifest, 3 numeric failure (a diagnostic JSON is written).  Artifacts go
to ``--out`` (default ``$VOLTERRA_LRD_OUT`` or ``./volterra_runs``), together
with ``run_manifest.json`` echoing the resolved configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import load_manifest, verify_all
from .combinatorics import (
    appell_family,
    d_coeff,
    enumerate_partitions,
    enumerate_terms,
)
from .errors import NumericError, ResourceError, VolterraError
from .kernels import (
    Perturbed,
    PowerSum,
    ProductPower,
    RatioForm,
    kernel_from_dict,
    kernel_to_dict,
    loads_kernel,
    validate_ghkb,
)
from .limits import (
    _jsonable,
    _var_se,
    acf_to_csv,
    classify_memory,
    clt_compare,
    empirical_acf,
    hermite_grid,
    hypercontractivity_ratio,
    nclt_compare,
    partial_sum_variance,
    report_json,
    simulate_hermite,
    varscale_to_csv,
)
from .mc import derive_stream, noise_moments
from .mixture import exp_mixture, simulate_mixture_paths
from .simulate import (
    NoiseSpec,
    PowerBound,
    TruncatedKernel,
    check_l2_conditions,
    config_to_json,
    counterexample_table,
    decompose_path,
    exact_mean,
    path_to_csv,
    simulate_path,
    simulate_paths,
)
from .traces import TraceKernel, eval_h_t, l2_norm_h_t, trace_kernel

OUT_ENV = "VOLTERRA_LRD_OUT"

EXIT_OK, EXIT_USAGE, EXIT_TOLERANCE, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = """\
commands:
  kernel validate     check the Class (B) conditions of a kernel
  kernel trace        evaluate the r-th pairing trace g_r at a point
  kernel htnorm       squared L2 norm of the time-integrated kernel h_t
  partitions          set partitions of {1..k} in canonical order
  appell              Appell polynomial table for an innovation law
  terms               off-diagonal terms (partition, Appell orders) with regimes
  simulate            simulate truncated Volterra paths (CSV n,X[,eps])
  mean                exact mean of a truncated process
  decompose-check     pathwise check of the off-diagonal decomposition
  l2check             square-summability diagnostics for a table or power bound
  classify            memory regime from (k, alpha) or power bounds
  acf                 autocovariance series and log-log slope (acf.csv)
  varscale            variance of partial sums against N (varscale.csv)
  hermite             discretized generalized Hermite process samples
  nclt                normalized partial sums against the non-central limit
  clt                 normality and long-run variance in the short-memory case
  hyper               moment-ratio (hypercontractivity) diagnostic
  verify              run the acceptance suite against the tolerance manifest
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_usage()}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# --------------------------------------------------------------------------
# argument groups
# --------------------------------------------------------------------------


def _add_kernel(p, default_alpha=-1.2):
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", default="powersum",
                   choices=["powersum", "productpower", "ratio", "json"],
                   help="kernel family (json reads --kernel-file)")
    g.add_argument("--kernel-file", help="kernel JSON document")
    g.add_argument("--k", type=int, default=2, help="order / arity")
    g.add_argument("--alpha", type=float, default=default_alpha, help="power-sum exponent")
    g.add_argument("--gammas", type=_floats, help="product exponents, comma separated")
    g.add_argument("--a", type=_floats, help="ratio-form numerator exponents")
    g.add_argument("--b", type=float, help="ratio-form denominator exponent")
    g.add_argument("--perturb", type=_floats, metavar="C,DELTA",
                   help="multiply by 1 + C*||i||^-DELTA")


def _add_noise(p):
    p.add_argument("--noise", default="gaussian",
                   choices=["gaussian", "rademacher", "uniform", "exponential"])


def _add_run(p, N=8192, paths=100, M=64):
    p.add_argument("--N", type=int, default=N)
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--M", type=int, default=M, help="truncation horizon of the table")
    p.add_argument("--seed", type=int, default=20140)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="volterra-lrd",
        description="Simulate and verify long-memory Volterra processes.",
        epilog=COMMANDS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./volterra_runs)")
    parser.add_argument("--config", help="JSON file whose keys override the flags")
    parser.add_argument("--workers", type=int, default=1, help="parallel path workers")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    kp = sub.add_parser("kernel", help="kernel utilities")
    ksub = kp.add_subparsers(dest="action", metavar="action", parser_class=_Parser)
    kv = ksub.add_parser("validate", help="Class (B) validation report")
    _add_kernel(kv)
    kt = ksub.add_parser("trace", help="evaluate the r-th trace")
    _add_kernel(kt)
    kt.add_argument("--r", type=int, default=1)
    kt.add_argument("--at", type=_floats, required=True, help="point, comma separated")
    kt.add_argument("--numeric", action="store_true", help="force quadrature")
    kh = ksub.add_parser("htnorm", help="||h_t||^2 of the (trace) kernel")
    _add_kernel(kh)
    kh.add_argument("--r", type=int, default=0)
    kh.add_argument("--t", type=float, default=1.0)
    kh.add_argument("--at", type=_floats, help="also evaluate h_t at this point")

    pp = sub.add_parser("partitions", help="set partitions of {1..k}")
    pp.add_argument("--k", type=int, required=True)

    ap = sub.add_parser("appell", help="Appell polynomial coefficients")
    ap.add_argument("--moments", default="gaussian",
                    choices=["gaussian", "rademacher", "uniform", "exponential"])
    ap.add_argument("--K", type=int, default=4)

    tp = sub.add_parser("terms", help="off-diagonal decomposition terms")
    tp.add_argument("--k", type=int, required=True)
    _add_noise(tp)

    sp = sub.add_parser("simulate", help="simulate truncated paths")
    _add_kernel(sp)
    _add_noise(sp)
    _add_run(sp, N=1024, paths=1, M=16)
    sp.add_argument("--eps", action="store_true", help="include the innovation column")

    mp = sub.add_parser("mean", help="exact mean of a truncated process")
    _add_kernel(mp)
    _add_noise(mp)
    mp.add_argument("--M", type=int, default=16)

    dp = sub.add_parser("decompose-check", help="pathwise decomposition identity")
    _add_kernel(dp)
    _add_noise(dp)
    _add_run(dp, N=32, paths=1, M=8)

    lp = sub.add_parser("l2check", help="square-summability diagnostics")
    _add_kernel(lp)
    lp.add_argument("--M", type=int, default=1024)
    lp.add_argument("--bound", type=_floats, help="decide a power bound instead of a table")
    lp.add_argument("--counterexample", action="store_true",
                    help="use (i1+i2)^-1 (log i2)^-1")

    cp = sub.add_parser("classify", help="memory regime")
    cp.add_argument("--k", type=int)
    cp.add_argument("--alpha", type=float)
    cp.add_argument("--gammas", type=_floats)
    cp.add_argument("--off-diagonal", action="store_true")

    for name, helptext in (("acf", "autocovariance series"), ("varscale", "partial-sum variance")):
        q = sub.add_parser(name, help=helptext)
        _add_kernel(q)
        _add_noise(q)
        _add_run(q, N=8192, paths=100, M=64)
        q.add_argument("--method", default="direct", choices=["direct", "mixture"])
        q.add_argument("--check", action="store_true", help="exit 2 if the manifest check fails")
        q.add_argument("--manifest", help="tolerance manifest (default: shipped)")
        if name == "acf":
            q.add_argument("--L", type=int, default=40)
            q.add_argument("--window", type=_ints, default=[4, 40])
        else:
            q.add_argument("--N-list", type=_ints,
                           default=[256, 512, 1024, 2048, 4096, 8192, 16384])

    hp = sub.add_parser("hermite", help="discretized Hermite process samples")
    _add_kernel(hp)
    hp.add_argument("--r", type=int, default=0)
    hp.add_argument("--t", type=_floats, default=[0.25, 0.5, 1.0])
    hp.add_argument("--G", type=int, default=4096)
    hp.add_argument("--reps", type=int, default=1000)
    hp.add_argument("--seed", type=int, default=20140)

    np_ = sub.add_parser("nclt", help="non-central limit comparison")
    _add_kernel(np_)
    _add_noise(np_)
    _add_run(np_, N=16384, paths=500, M=64)
    np_.add_argument("--method", default="mixture", choices=["mixture", "direct"])
    np_.add_argument("--G", type=int, default=4096)
    np_.add_argument("--limit-reps", type=int, default=2000)
    np_.add_argument("--M-sweep", type=_ints, help="truncations for a bias-vs-M table")
    np_.add_argument("--check", action="store_true")
    np_.add_argument("--manifest")

    lc = sub.add_parser("clt", help="central limit comparison")
    _add_kernel(lc)
    _add_noise(lc)
    _add_run(lc, N=4096, paths=500, M=64)
    lc.add_argument("--check", action="store_true")
    lc.add_argument("--manifest")

    yp = sub.add_parser("hyper", help="moment ratio of a random off-diagonal form")
    yp.add_argument("--k", type=int, default=2)
    yp.add_argument("--M", type=int, default=8)
    yp.add_argument("--p", type=float, default=3.0)
    yp.add_argument("--samples", type=int, default=100_000)
    yp.add_argument("--scale", type=float, default=1.0)
    yp.add_argument("--seed", type=int, default=20140)
    _add_noise(yp)

    vp = sub.add_parser("verify", help="acceptance suite")
    vp.add_argument("--manifest", help="tolerance manifest (default: shipped)")
    vp.add_argument("--only", type=lambda s: s.split(","), help="criterion ids")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _kernel(args):
    if getattr(args, "kernel_object", None) is not None:
        return args.kernel_object
    if args.kernel == "json":
        if not args.kernel_file:
            raise UsageError("--kernel json needs --kernel-file")
        kern = loads_kernel(Path(args.kernel_file).read_text())
    elif args.kernel == "powersum":
        kern = PowerSum(args.k, args.alpha)
    elif args.kernel == "productpower":
        if not args.gammas:
            raise UsageError("--kernel productpower needs --gammas")
        kern = ProductPower(tuple(args.gammas))
    else:
        if not args.a or args.b is None:
            raise UsageError("--kernel ratio needs --a and --b")
        kern = RatioForm(tuple(args.a), args.b)
    if getattr(args, "perturb", None):
        c, delta = args.perturb
        kern = Perturbed(kern, c, delta)
    return kern


def _table(args):
    return TruncatedKernel.from_kernel(_kernel(args), args.M)


def _apply_config(args, path):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest == "kernel" and isinstance(value, dict):
            kern = kernel_from_dict(value)
            args.kernel_doc = value
            args.kernel = "object"
            args.kernel_object = kern
            continue
        if not hasattr(args, dest):
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        setattr(args, dest, value)
    return args


class _Run:
    """Collects artifacts and writes the run manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        base = args.out or os.environ.get(OUT_ENV) or "volterra_runs"
        self.out = Path(base)
        self.artifacts: list[str] = []
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        self.artifacts.append(str(path))
        return path

    def finish(self, code: int, extra: dict | None = None):
        import scipy

        cfg = {k: v for k, v in vars(self.args).items() if k != "kernel_object"}
        doc = {
            "command": self.args.command,
            "argv": self.argv,
            "config": _jsonable(cfg),
            "versions": {
                "volterra_lrd": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_seconds": time.perf_counter() - self.t0,
            "exit_code": code,
            "artifacts": self.artifacts,
        }
        if extra:
            doc.update(extra)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "run_manifest.json").write_text(json.dumps(_jsonable(doc), indent=2))


def _emit(obj):
    if isinstance(obj, str):
        print(obj)
    else:
        print(json.dumps(_jsonable(obj), indent=2))


def _criterion(args, cid):
    return load_manifest(getattr(args, "manifest", None))["criteria"][cid]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_kernel(args, run):
    kern = _kernel(args)
    if args.action == "validate":
        rep = validate_ghkb(kern)
        _emit(rep.as_dict())
        run.write("validation.json", json.dumps(_jsonable(rep.as_dict()), indent=2))
        return EXIT_OK
    if args.action == "trace":
        tk = trace_kernel(kern, args.r)
        x = np.asarray(args.at, dtype=float)
        val = tk.numeric(x) if args.numeric or not tk.analytic else float(tk.evaluate(x[None])[0])
        _emit({"r": args.r, "point": args.at, "value": val, "alpha_r": tk.alpha,
               "analytic": tk.analytic and not args.numeric})
        return EXIT_OK
    if args.action == "htnorm":
        g = kern if args.r == 0 else trace_kernel(kern, args.r)
        res = l2_norm_h_t(g, args.t)
        doc = {"t": args.t, "r": args.r, "norm_sq": res.value, "error": res.error,
               "method": res.method}
        if args.at:
            doc["h_t"] = eval_h_t(g, args.t, np.asarray(args.at, dtype=float))
        _emit(doc)
        run.write("htnorm.json", json.dumps(_jsonable(doc), indent=2))
        return EXIT_OK
    raise UsageError("kernel needs an action: validate, trace or htnorm")


def cmd_partitions(args, run):
    parts = enumerate_partitions(args.k)
    for p in parts:
        print(p)
    print(f"# count {len(parts)}")
    return EXIT_OK


def cmd_appell(args, run):
    fam = appell_family(noise_moments(args.moments, args.K), args.K)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p"] + [f"x^{j}" for j in range(args.K + 1)])
    for p in range(args.K + 1):
        c = list(fam.poly(p)) + [0] * (args.K - p)
        w.writerow([p] + [str(v) for v in c])
    text = buf.getvalue()
    print(text, end="")
    run.write("appell.csv", text)
    return EXIT_OK


def cmd_terms(args, run):
    noise = NoiseSpec(args.noise).for_order(args.k)
    terms = enumerate_terms(args.k, noise.moments)
    rows = [t.as_row() for t in terms]
    mult = {}
    for t in terms:
        if t.long_memory:
            mult[t.r] = mult.get(t.r, 0) + 1
    doc = {"k": args.k, "noise": args.noise, "terms": rows,
           "long_memory_multiplicity_by_r": {str(r): mult[r] for r in sorted(mult)},
           "d_kr": {str(r): str(d_coeff(args.k, r)) for r in range(args.k // 2 + 1)}}
    _emit(doc)
    run.write("terms.json", json.dumps(_jsonable(doc), indent=2))
    return EXIT_OK


def cmd_simulate(args, run):
    kern = _kernel(args)
    tk = TruncatedKernel.from_kernel(kern, args.M)
    noise = NoiseSpec(args.noise)
    for p in range(args.paths):
        path = simulate_path(tk, noise, args.N, args.seed, p)
        name = "path.csv" if args.paths == 1 else f"path_{p:04d}.csv"
        text = path_to_csv(path, include_eps=args.eps)
        run.write(name, text)
        if args.paths == 1:
            print(text, end="")
    run.write("config.json", config_to_json(kernel_to_dict(kern), args.noise, args.N, args.M,
                                            args.paths, args.seed))
    return EXIT_OK


def cmd_mean(args, run):
    tk = TruncatedKernel.from_kernel(_kernel(args), args.M)
    _emit({"mean": exact_mean(tk, NoiseSpec(args.noise)), "M": args.M, "noise": args.noise})
    return EXIT_OK


def cmd_decompose(args, run):
    tk = TruncatedKernel.from_kernel(_kernel(args), args.M).symmetrized()
    noise = NoiseSpec(args.noise).for_order(tk.k)
    terms = enumerate_terms(tk.k, noise.moments)
    worst = 0.0
    for p in range(args.paths):
        path = simulate_path(tk, noise, args.N, args.seed, p)
        parts = decompose_path(tk, path.eps, terms, noise)
        resid = np.sum(list(parts.values()), axis=0) - (path.X - exact_mean(tk, noise))
        worst = max(worst, float(np.max(np.abs(resid) / (1 + np.abs(path.X)))))
    doc = {"terms": len(terms), "max_rel_error": worst, "paths": args.paths}
    _emit(doc)
    return EXIT_OK


def cmd_l2check(args, run):
    if args.bound:
        rep = check_l2_conditions(PowerBound(tuple(args.bound)))
    else:
        tk = counterexample_table(args.M) if args.counterexample else _table(args)
        rep = check_l2_conditions(tk)
    _emit(rep.as_dict())
    run.write("l2check.json", json.dumps(_jsonable(rep.as_dict()), indent=2))
    return EXIT_OK


def cmd_classify(args, run):
    if args.gammas:
        res = classify_memory(PowerBound(tuple(args.gammas)), off_diagonal=args.off_diagonal)
    elif args.k is not None and args.alpha is not None:
        res = classify_memory((args.k, args.alpha))
    else:
        raise UsageError("classify needs --k and --alpha, or --gammas")
    _emit(res.as_dict())
    return EXIT_OK


def _paths(args, kern):
    noise = NoiseSpec(args.noise)
    if args.method == "mixture":
        return simulate_mixture_paths(exp_mixture(kern), noise, args.N, args.paths, args.seed), 0.0
    tk = TruncatedKernel.from_kernel(kern, args.M)
    X = simulate_paths(tk, noise, args.N, args.paths, args.seed, args.workers)
    return X, exact_mean(tk, noise)


def cmd_acf(args, run):
    X, mean = _paths(args, _kernel(args))
    acf = empirical_acf(X, args.L, mean=mean, window=tuple(args.window))
    run.write("acf.csv", acf_to_csv(acf))
    est = {"slope": acf.fit.slope if acf.fit else None,
           "ci": acf.fit.ci if acf.fit else None, "flags": acf.flags}
    verdict = {}
    if args.check:
        cfg = _criterion(args, "3")
        verdict["slope"] = acf.fit is not None and abs(acf.fit.slope - cfg["target"]) <= cfg["abs_tol"]
    run.write("acf.json", report_json("acf", _params(args), est, verdicts=verdict))
    _emit(est)
    return EXIT_TOLERANCE if verdict and not all(verdict.values()) else EXIT_OK


def cmd_varscale(args, run):
    X, mean = _paths(args, _kernel(args))
    vs = partial_sum_variance(X, args.N_list, mean=mean)
    run.write("varscale.csv", varscale_to_csv(vs))
    est = {"slope": vs.fit.slope if vs.fit else None, "ci": vs.fit.ci if vs.fit else None,
           "flags": vs.flags}
    verdict = {}
    if args.check and vs.fit is not None:
        cfg = _criterion(args, "4")
        kern = _kernel(args)
        target = 2 * kern.hurst if classify_memory(kern).regime == "LongMemory" else cfg["target_srd"]
        verdict["slope"] = abs(vs.fit.slope - target) <= cfg["abs_tol"]
    run.write("varscale.json", report_json("varscale", _params(args), est, verdicts=verdict))
    _emit(est)
    return EXIT_TOLERANCE if verdict and not all(verdict.values()) else EXIT_OK


def cmd_hermite(args, run):
    kern = _kernel(args)
    g = kern if args.r == 0 else TraceKernel(kern, args.r)
    grid = hermite_grid(args.G, t_max=max(args.t))
    Z = simulate_hermite(g, args.t, grid, args.reps, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep"] + [f"t={t:g}" for t in args.t])
    for i, row in enumerate(Z):
        w.writerow([i] + [repr(float(v)) for v in row])
    run.write("hermite.csv", buf.getvalue())
    est = {"var": Z.var(axis=0, ddof=1).tolist(), "t": args.t, "H": g.hurst,
           "norm_sq_quadrature": [math.factorial(g.k) * l2_norm_h_t(g, t).value for t in args.t]}
    run.write("hermite.json", report_json("hermite", _params(args), est))
    _emit(est)
    return EXIT_OK


def _params(args):
    return {k: v for k, v in vars(args).items() if k not in ("kernel_object",)}


def _sweep_csv(kern, args, target):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "var", "se", "var_limit", "rel_bias"])
    H = kern.hurst
    noise = NoiseSpec(args.noise)
    for M in args.M_sweep:
        tk = TruncatedKernel.from_kernel(kern, M)
        X = simulate_paths(tk, noise, args.N, args.paths, args.seed, args.workers)
        S = (X - exact_mean(tk, noise)).sum(axis=1) / args.N**H
        v, se = _var_se(S)
        w.writerow([M, repr(v), repr(se), repr(target), repr(v / target - 1)])
    return buf.getvalue()


def cmd_nclt(args, run):
    kern = _kernel(args)
    grid = hermite_grid(args.G) if args.limit_reps > 0 else None
    rep = nclt_compare(kern, NoiseSpec(args.noise), args.N, args.paths, args.seed, grid=grid,
                       limit_reps=args.limit_reps, method=args.method, M=args.M,
                       workers=args.workers)
    verdict = {}
    if args.check:
        cfg = _criterion(args, "5")
        one = rep["per_t"]["1.0"]
        verdict["variance"] = abs(one["var"] / one["var_limit_quadrature"] - 1) <= cfg["var_rel_tol"]
        verdict["self_similarity"] = (
            abs(rep["self_similarity_ratio"] / rep["self_similarity_target"] - 1)
            <= cfg["self_similarity_rel_tol"]
        )
        if "ks_p" in one:
            verdict["ks"] = one["ks_p"] >= cfg["ks_alpha"]
    rep["pass_fail"] = verdict
    if args.M_sweep:
        target = rep["per_t"]["1.0"]["var_limit_quadrature"]
        run.write("bias_vs_M.csv", _sweep_csv(kern, args, target))
    run.write("nclt.json", json.dumps(_jsonable(rep), indent=2, sort_keys=True))
    _emit(rep)
    return EXIT_TOLERANCE if verdict and not all(verdict.values()) else EXIT_OK


def cmd_clt(args, run):
    kern = _kernel(args)
    tk = TruncatedKernel.from_kernel(kern, args.M)
    bound = PowerBound(tuple(args.gammas)) if args.gammas else None
    rep = clt_compare(tk, NoiseSpec(args.noise), args.N, args.paths, args.seed, bound=bound,
                      workers=args.workers)
    verdict = {}
    if args.check:
        cfg = _criterion(args, "7")
        verdict["normality"] = not rep["normality_rejected_1pct"]
        verdict["sigma2_split"] = rep["sigma2_z"] <= cfg["joint_se"]
    rep["pass_fail"] = verdict
    run.write("clt.json", json.dumps(_jsonable(rep), indent=2, sort_keys=True))
    _emit(rep)
    return EXIT_TOLERANCE if verdict and not all(verdict.values()) else EXIT_OK


def cmd_hyper(args, run):
    h = derive_stream(args.seed, (0,)).generator.standard_normal((args.M,) * args.k)
    res = hypercontractivity_ratio(args.scale * h, NoiseSpec(args.noise), args.p, args.samples,
                                   args.seed)
    doc = {"ratio": res.ratio, "ci": res.ci, "ci_rel_width": res.ci_rel_width, "p": res.p,
           "samples": res.samples}
    run.write("hyper.json", report_json("hyper", _params(args), doc))
    _emit(doc)
    return EXIT_OK


def cmd_verify(args, run):
    manifest = load_manifest(args.manifest)
    results = verify_all(manifest, only=args.only, workers=args.workers)
    doc = [r.as_dict() for r in results]
    run.write("verify.json", json.dumps(_jsonable(doc), indent=2))
    failed = [r.cid for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_TOLERANCE if failed else EXIT_OK


HANDLERS = {
    "kernel": cmd_kernel,
    "partitions": cmd_partitions,
    "appell": cmd_appell,
    "terms": cmd_terms,
    "simulate": cmd_simulate,
    "mean": cmd_mean,
    "decompose-check": cmd_decompose,
    "l2check": cmd_l2check,
    "classify": cmd_classify,
    "acf": cmd_acf,
    "varscale": cmd_varscale,
    "hermite": cmd_hermite,
    "nclt": cmd_nclt,
    "clt": cmd_clt,
    "hyper": cmd_hyper,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        if args.config:
            _apply_config(args, args.config)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (VolterraError, OSError, ValueError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    runner = _Run(args, argv)
    try:
        code = HANDLERS[args.command](args, runner)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        code = EXIT_USAGE
    except NumericError as exc:
        diag = {"error": "numeric", "message": str(exc), "estimate": exc.estimate,
                "error_estimate": exc.error, "command": args.command}
        runner.write("diagnostic.json", json.dumps(_jsonable(diag), indent=2))
        print(json.dumps(_jsonable(diag)), file=sys.stderr)
        code = EXIT_NUMERIC
    except (ResourceError, VolterraError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    runner.finish(code)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
