"""Command line entry point ``cylfbm``.

Exit codes: 0 success, 1 an embedded check failed, 2 usage or domain error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import io as cio
from .cauchy import (SpectralModel, bound_check_high, bound_check_low, existence_criterion,
                     simulate_mild)
from .cylindrical import CylFbm, Embedding, apply, is_genuine, spatial_grid
from .fbm import Regime, SamplerError, TimeGrid, as_hurst, sample_paths
from .fracops import frac_derivative, frac_integral, kstar
from .harness import Z_THRESHOLD, check_line, mc_compare
from .stochint import OperatorIntegrand, covariance_q_psi, driving_noise, hs_test, simulate
from .validation import DEFAULT_TOLERANCES, run_all
from .wiener import wiener_integral

__all__ = ["run", "main", "build_parser", "resolve_seed", "SEED_ENV"]

SEED_ENV = "CYLFBM_SEED"


class UsageError(Exception):
    pass


def resolve_seed(flag: int | None) -> int:
    """Seed from the flag, else the environment, else 0."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        seed = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be nonnegative")
    return seed


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _need(cfg: dict, key: str) -> str:
    if key not in cfg:
        raise ValueError(f"config is missing the key {key!r}")
    return cfg[key]


def _embedding_from_config(cfg: dict) -> Embedding:
    kind = cfg.get("kind", "diagonal")
    N = int(_need(cfg, "N"))
    weights = cio.parse_rule(_need(cfg, "weights"), N)
    if kind == "diagonal":
        return Embedding.diagonal(weights)
    m = int(cfg.get("m", 65))
    if kind == "weighted_basis":
        return Embedding.weighted_basis(weights, N, m)
    if kind == "sheet":
        sets = []
        for item in _need(cfg, "sets").split(","):
            a, _, b = item.partition(":")
            sets.append((float(a), float(b)))
        if len(sets) != N:
            raise ValueError(f"sheet needs {N} sets, got {len(sets)}")
        return Embedding.sheet(weights, sets, m)
    raise ValueError(f"unknown embedding kind {kind!r}")


def _functional(cfg: dict, emb: Embedding) -> np.ndarray:
    if "functional" in cfg:
        u = cio.parse_floats(cfg["functional"])
        if u.size != emb.m:
            raise ValueError(f"functional needs {emb.m} entries")
        return u
    if emb.kind.value == "diagonal":
        return np.eye(emb.m)[0]
    # default: the first basis function sampled on the spatial grid
    x, _ = spatial_grid(emb.m)
    return np.sqrt(2.0) * np.sin(np.pi * x)


def _positive(name: str, value) -> None:
    if value <= 0:
        raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------- handlers

def cmd_fbm_sample(args, rc: cio.RunConfig) -> int:
    _positive("--paths", args.paths)
    paths = sample_paths(TimeGrid(rc.T, rc.n), rc.hurst, args.paths, rc.seed)
    with _output(rc.output) as out:
        cio.write_paths(out, paths)
    return 0


def cmd_frac(args, rc: cio.RunConfig) -> int:
    f = cio.read_sampled(args.input)
    if args.op == "kstar":
        g = kstar(f, rc.hurst)
    elif args.alpha is None:
        raise UsageError("--alpha is required")
    elif args.op == "integral":
        g = frac_integral(f, args.alpha)
    else:
        g = frac_derivative(f, args.alpha)
    with _output(rc.output) as out:
        cio.write_sampled(out, g)
    return 0


def cmd_wiener(args, rc: cio.RunConfig) -> int:
    f = cio.read_simple(args.integrand)
    _positive("--paths", args.paths)
    paths = sample_paths(TimeGrid(f.T, args.grid_n), rc.hurst, args.paths, rc.seed)
    res = wiener_integral(f, paths)
    sq = np.sum(res.samples**2, axis=1)
    if rc.output is not None:
        with _output(rc.output) as out:
            cio.write_table(out, [f"sample_{k}" for k in range(f.m)], res.samples)
    z = res.z_score
    print(json.dumps({"mean": float(np.mean(res.samples)), "var": float(np.mean(sq)),
                      "exact_var": res.exact_second_moment, "z_score": z}))
    return 0 if abs(z) <= rc.tolerances.get("z", Z_THRESHOLD) else 1


def cmd_cyl_apply(args, rc: cio.RunConfig) -> int:
    cfg = cio.parse_config(rc.model)
    emb = _embedding_from_config(cfg)
    u = _functional(cfg, emb)
    n_paths = args.paths if args.paths is not None else int(cfg.get("paths", 1000))
    _positive("paths", n_paths)
    B = CylFbm(emb, rc.hurst, TimeGrid(rc.T, rc.n), n_paths, rc.seed)
    values = np.column_stack([apply(B, t, u) for t in B.grid.nodes])
    if rc.output is not None:
        with _output(rc.output) as out:
            cio.write_table(out, ["t"] + [f"path_{p}" for p in range(n_paths)],
                            np.column_stack([B.grid.nodes, values.T]))
    ref = emb.q_form(u, u) * rc.T ** (2 * rc.hurst)
    r = mc_compare(values[:, -1] ** 2, ref, rc.tolerances.get("z", Z_THRESHOLD), name="cyl.variance_at_T")
    print(r.line())
    return 0 if r.passed else 1


def cmd_cyl_genuine(args, rc: cio.RunConfig) -> int:
    cfg = cio.parse_config(rc.model)
    emb = _embedding_from_config(cfg)
    rule = args.tail_rule if args.tail_rule is not None else cfg.get("tail_rule")
    rep = is_genuine(emb, tail_rule=None if rule is None else float(rule))
    t = rep.tail
    print(f"verdict={rep.verdict} N={t.N} exponent={t.exponent:.6g} partial_sum={t.total:.6g} "
          f"tail_estimate={t.tail_estimate:.6g} fitted={str(t.fitted).lower()}")
    return 0


def _psi_from_config(cfg: dict, grid: TimeGrid):
    N = int(_need(cfg, "N"))
    kind = cfg.get("kind", "diagonal_semigroup")
    if kind == "diagonal_semigroup":
        psi = OperatorIntegrand.diagonal_semigroup(grid, cio.parse_rule(_need(cfg, "lambdas"), N))
    elif kind == "constant":
        psi = OperatorIntegrand.constant(grid, np.diag(cio.parse_rule(_need(cfg, "diagonal"), N)))
    else:
        raise ValueError(f"unknown integrand kind {kind!r}")
    weights = cio.parse_rule(cfg.get("weights", "1" + ",1" * (N - 1)), N)
    return psi, Embedding.diagonal(weights)


def cmd_integrate(args, rc: cio.RunConfig) -> int:
    cfg = cio.parse_config(rc.model)
    quad = TimeGrid(rc.T, int(cfg.get("quad_n", 2048)))
    psi_q, emb = _psi_from_config(cfg, quad)
    psi_s, _ = _psi_from_config(cfg, TimeGrid(rc.T, rc.n))
    upto = rc.T if args.upto is None else args.upto
    if not 0 < upto <= rc.T:
        raise ValueError("--upto must lie in (0, T]")
    _positive("--paths", args.paths)
    rule = cfg.get("tail_rule")
    hs = hs_test(psi_q, rc.hurst, embedding=emb, tail_rule=None if rule is None else float(rule))
    t = hs.tail
    print(f"hs_test verdict={hs.verdict} N={t.N} exponent={t.exponent:.6g} partial_sum={t.total:.6g} "
          f"tail_estimate={t.tail_estimate:.6g}")
    B = driving_noise(emb, rc.hurst, TimeGrid(rc.T, rc.n), args.paths, rc.seed)
    S = simulate(psi_s, B, upto)
    Q = covariance_q_psi(psi_q.restricted(upto) if upto < rc.T else psi_q, rc.hurst, emb)
    C = S.T @ S / S.shape[0]
    if rc.output is not None:
        with _output(rc.output) as out:
            cio.write_table(out, [f"v_{k}" for k in range(S.shape[1])], S)
    if args.cov_out is not None:
        i, j = np.triu_indices(Q.shape[0])
        with _output(args.cov_out) as out:
            cio.write_table(out, ["row", "col", "empirical", "exact"], np.column_stack([i, j, C[i, j], Q[i, j]]))
    z_max = rc.tolerances.get("z", Z_THRESHOLD)
    reports = [mc_compare(S[:, i] * S[:, j], Q[i, j], z_max, name=f"q_psi[{i},{j}]")
               for i in range(Q.shape[0]) for j in range(i, Q.shape[0])]
    worst = max(reports, key=lambda r: abs(r.z_score))
    passed = all(r.passed for r in reports)
    print(check_line("integrate.covariance", worst.estimate, worst.reference, worst.z_score, passed))
    return 0 if passed else 1


def _model(args) -> SpectralModel:
    if args.dim < 1:
        raise ValueError("--dim must be a positive integer")
    _positive("--modes", args.modes)
    return SpectralModel.dirichlet_laplacian(args.dim, args.modes, q=args.q)


def cmd_heat_check(args, rc: cio.RunConfig) -> int:
    rep = existence_criterion(_model(args), rc.hurst, tail_rule=args.tail_rule)
    t = rep.tail
    print(f"verdict={rep.verdict} N={t.N} exponent={t.exponent:.6g} partial_sum={t.total:.6g} "
          f"tail_estimate={t.tail_estimate:.6g} threshold=n/4={args.dim / 4:g}")
    return 0


def cmd_heat_simulate(args, rc: cio.RunConfig) -> int:
    _positive("--paths", args.paths)
    sol = simulate_mild(_model(args), rc.hurst, TimeGrid(rc.T, rc.n), args.paths, rc.seed, factor=args.factor)
    N, P = sol.modes.shape[:2]
    header = ["t"] + [f"mode_{k}_path_{p}" for k in range(N) for p in range(P)]
    rows = np.column_stack([sol.grid.nodes, sol.modes.reshape(N * P, -1).T])
    with _output(rc.output) as out:
        cio.write_table(out, header, rows)
    return 0


def cmd_heat_bounds(args, rc: cio.RunConfig) -> int:
    H = as_hurst(rc.hurst)
    lam = args.lam
    rep = bound_check_high(lam, H, rc.T) if H.regime() is Regime.HIGH else bound_check_low(lam, H, rc.T)
    for item in rep.items:
        name = f"{item.name}.H{H.value:g}.lam{lam:g}"
        print(check_line(name, item.value, item.bound, item.ratio, item.holds) + f" slack={item.slack:.6g}")
    if rep.scaled_total is not None:
        print(f"scaled_total={rep.scaled_total:.6g}")
    return 0 if rep.holds else 1


def cmd_validate(args, rc: cio.RunConfig) -> int:
    criteria = None
    if args.criteria:
        criteria = [int(c) for c in args.criteria.split(",")]
        bad = [c for c in criteria if not 1 <= c <= 12]
        if bad:
            raise UsageError(f"criteria are numbered 1..12, got {bad}")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    checks = run_all(quick=not args.full, seed=rc.seed, tolerances=rc.tolerances, jobs=args.jobs,
                     criteria=criteria)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"SUMMARY checks={len(checks)} failed={failed} mode={'full' if args.full else 'quick'} seed={rc.seed}")
    return 1 if failed else 0


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _tolerance(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected name=value")
    return name.strip(), float(value)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cylfbm", description="Fractional Brownian motion, cylindrical fBm and the stochastic heat equation.")
    verbs = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, hurst=True, seed=False, grid=False, out=True):
        if hurst:
            sp.add_argument("--hurst", type=float)
        if seed:
            sp.add_argument("--seed", type=int, help=f"defaults to ${SEED_ENV}, then 0")
        if grid:
            sp.add_argument("--T", type=float, help="horizon (default 1)")
            sp.add_argument("--grid-n", "--n", dest="n", type=int, help="grid cells (default 64)")
        if out:
            sp.add_argument("--out", help="output CSV (stdout when omitted or '-')")
        sp.add_argument("--tol", type=_tolerance, action="append", default=[], metavar="NAME=VALUE")

    fbm = verbs.add_parser("fbm").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = fbm.add_parser("sample", help="sample fBm paths")
    common(sp, seed=True, grid=True)
    sp.add_argument("--paths", type=int, default=10)
    sp.set_defaults(handler=cmd_fbm_sample)

    frac = verbs.add_parser("frac").add_subparsers(dest="op", required=True, parser_class=_Parser)
    for op in ("integral", "derivative", "kstar"):
        sp = frac.add_parser(op)
        common(sp, hurst=op == "kstar")
        sp.add_argument("--in", dest="input", required=True, help="CSV t,v_0,...")
        if op != "kstar":
            sp.add_argument("--alpha", type=float, required=True)
        sp.set_defaults(handler=cmd_frac, alpha=None)

    sp = verbs.add_parser("wiener", help="Wiener integral of a step function")
    common(sp, seed=True)
    sp.add_argument("--integrand", required=True, help="CSV start,end,x_0,...")
    sp.add_argument("--paths", type=int, default=10000)
    sp.add_argument("--grid-n", type=int, default=64, help="sampling grid; breakpoints must be nodes")
    sp.set_defaults(handler=cmd_wiener)

    cyl = verbs.add_parser("cyl").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = cyl.add_parser("apply", help="samples of B(t)u* and a variance check")
    common(sp, seed=True, grid=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--paths", type=int)
    sp.set_defaults(handler=cmd_cyl_apply)
    sp = cyl.add_parser("genuine", help="Hilbert-Schmidt verdict of the embedding")
    common(sp, hurst=False, out=False)
    sp.add_argument("--config", required=True)
    sp.add_argument("--tail-rule", type=float)
    sp.set_defaults(handler=cmd_cyl_genuine)

    sp = verbs.add_parser("integrate", help="cylindrical integral of an operator integrand")
    common(sp, seed=True, grid=True)
    sp.add_argument("--psi-spec", required=True)
    sp.add_argument("--upto", type=float)
    sp.add_argument("--paths", type=int, default=10000)
    sp.add_argument("--cov-out")
    sp.set_defaults(handler=cmd_integrate)

    heat = verbs.add_parser("heat").add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action, handler in (("check", cmd_heat_check), ("simulate", cmd_heat_simulate)):
        sp = heat.add_parser(action)
        common(sp, seed=action == "simulate", grid=action == "simulate", out=action == "simulate")
        sp.add_argument("--dim", type=int, required=True)
        sp.add_argument("--modes", type=int, required=True)
        sp.add_argument("--q", type=float, default=1.0, help="noise weight of every mode")
        sp.set_defaults(handler=handler)
    heat.choices["check"].add_argument("--tail-rule", type=float)
    heat.choices["simulate"].add_argument("--paths", type=int, default=10)
    heat.choices["simulate"].add_argument("--factor", type=int, default=8)
    sp = heat.add_parser("bounds")
    common(sp, out=False)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--T", type=float)
    sp.set_defaults(handler=cmd_heat_bounds)

    val = verbs.add_parser("validate").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = val.add_parser("all", help="run the acceptance suite")
    common(sp, hurst=False, seed=True, out=False)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--quick", action="store_true", default=True)
    mode.add_argument("--full", action="store_true")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--criteria", help="comma-separated criterion numbers")
    sp.set_defaults(handler=cmd_validate)
    return p


def _run_config(args) -> cio.RunConfig:
    """Resolve settings: flags, then the model config file, then the environment and defaults."""
    verb = " ".join(v for v in (args.verb, getattr(args, "action", None), getattr(args, "op", None)) if v)
    tolerances = dict(args.tol)
    if args.handler is cmd_validate:
        unknown = set(tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise UsageError(f"unknown tolerance names: {sorted(unknown)}")
    model = getattr(args, "config", None) or getattr(args, "psi_spec", None)
    cfg = cio.parse_config(model) if model else {}

    def pick(name, cast, default):
        value = getattr(args, name, None)
        if value is None and name in cfg:
            value = cast(cfg[name])
        return default if value is None else value

    hurst = None
    needs_hurst = args.handler not in (cmd_validate, cmd_cyl_genuine) and not (
        args.handler is cmd_frac and args.op != "kstar")
    if needs_hurst:
        hurst = pick("hurst", float, None)
        if hurst is None:
            raise UsageError("--hurst is required")
        hurst = as_hurst(hurst).value
    seed = pick("seed", int, None)
    rc = cio.RunConfig(
        verb=verb,
        hurst=hurst,
        T=pick("T", float, 1.0),
        n=pick("n", int, 64),
        model=model,
        seed=resolve_seed(seed),
        output=getattr(args, "out", None),
        tolerances=tolerances,
    )
    _positive("--T", rc.T)
    _positive("--grid-n", rc.n)
    if rc.seed < 0:
        raise ValueError("the seed must be nonnegative")
    return rc


def run(argv=None) -> int:
    """Parse ``argv`` and execute; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        rc = _run_config(args)
        return args.handler(args, rc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"cylfbm: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, SamplerError, OSError, configparser.Error) as exc:
        print(f"cylfbm: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
