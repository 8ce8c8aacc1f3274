"""Batch acceptance suite: numbered criteria producing CHECK report lines.

Monte Carlo checks report a z-score against the threshold. Deterministic checks
report z = error / tolerance (or tolerance / value for lower bounds), so a check
passes iff |z| <= 1 for those.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .cauchy import (SpectralModel, bound_check_high, bound_check_low, existence_criterion,
                     mode_variance_exact, simulate_mild, weak_solution_residual)
from .cylindrical import CylFbm, Embedding, apply, covariance_operator
from .fbm import TimeGrid, covariance, kernel_covariance, sample_paths
from .fracops import (frac_derivative, frac_integral, g_f_form, kstar, kstar_direct_form,
                      m_inner_simple, m_norm, restrict)
from .functions import SampledFunction, SimpleFunction, l2_norm
from .harness import Statistic, Z_THRESHOLD, check_line, convergence_rate, mc_compare
from .stochint import (OperatorIntegrand, covariance_q_psi, driving_noise, hs_test, simulate)
from .wiener import integrate_simple

__all__ = [
    "Check",
    "Sizes",
    "QUICK",
    "FULL",
    "DEFAULT_TOLERANCES",
    "CRITERIA",
    "run_criterion",
    "run_all",
]

DEFAULT_TOLERANCES = {
    "z": Z_THRESHOLD,
    "kernel_rel": 1e-2,
    "kstar_rel": 1e-2,
    "inversion_rel": 1e-3,
    "inversion_rate": 0.8,
    "reflection_rel": 1e-2,
    "rotation_abs": 1e-12,
    "brute_rel": 5e-3,
    "residual": 5e-3,
}

H_LOW, H_HIGH = 0.25, 0.75


@dataclass(frozen=True)
class Check:
    name: str
    estimate: float
    reference: float
    z: float
    passed: bool

    def line(self) -> str:
        return check_line(self.name, self.estimate, self.reference, self.z, self.passed)


@dataclass(frozen=True)
class Sizes:
    """Sample sizes of one suite flavour."""

    paths: int
    mode_paths: int
    extra_hurst: tuple[float, ...]


FULL = Sizes(paths=100_000, mode_paths=10_000, extra_hurst=(0.4, 0.6))
QUICK = Sizes(paths=20_000, mode_paths=10_000, extra_hurst=())


def _mc(name: str, samples, reference: float, tol: dict, statistic=Statistic.MEAN) -> Check:
    r = mc_compare(samples, reference, tol["z"], statistic, name)
    return Check(name, r.estimate, r.reference, r.z_score, r.passed)


def _worst(checks: list[Check], name: str) -> Check:
    """Collapse a family of checks into the one with the largest |z|; passes iff all pass."""
    w = max(checks, key=lambda c: abs(c.z))
    return Check(name, w.estimate, w.reference, w.z, all(c.passed for c in checks))


def _upper(name: str, error: float, tol: float) -> Check:
    z = error / tol
    return Check(name, error, tol, z, bool(z <= 1.0))


def _lower(name: str, value: float, tol: float) -> Check:
    z = tol / value if value > 0 else np.inf
    return Check(name, value, tol, z, bool(value > tol))


def _rel(a: SampledFunction, b: SampledFunction) -> float:
    return l2_norm(a - b) / l2_norm(b)


def _random_simple(rng, grid: TimeGrid, pieces: int) -> SimpleFunction:
    inner = np.sort(rng.choice(np.arange(1, grid.n), pieces - 1, replace=False))
    idx = np.concatenate([[0], inner, [grid.n]])
    return SimpleFunction(grid.nodes[idx], rng.normal(size=pieces))


def criterion_01(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Empirical fBm covariance on random node pairs against R(s,t)."""
    grid = TimeGrid(1.0, 64)
    out = []
    for H in (H_LOW, H_HIGH):
        rng = np.random.default_rng([seed, 1, int(H * 100)])
        pairs = rng.integers(1, grid.n + 1, size=(20, 2))
        p = sample_paths(grid, H, sizes.paths, seed, stream=(1,)).paths
        checks = [_mc("pair", p[:, i] * p[:, j], covariance(grid.nodes[i], grid.nodes[j], H), tol)
                  for i, j in pairs]
        out.append(_worst(checks, f"c01.covariance.H{H}"))
    return out


KERNEL_PAIRS = ((0.3, 0.7), (0.5, 1.0), (1.0, 1.0), (0.2, 0.9), (0.8, 0.4), (0.05, 0.6))


def criterion_02(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """int kappa(s,u) kappa(t,u) du reproduces R(s,t)."""
    out = []
    for H in (H_LOW, H_HIGH):
        err = max(abs(kernel_covariance(s, t, H, 2048) / covariance(s, t, H) - 1.0)
                  for s, t in KERNEL_PAIRS)
        out.append(_upper(f"c02.kernel.H{H}", err, tol["kernel_rel"]))
    return out


def criterion_03(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Variance of int f db for random simple f against <f,f>_M."""
    grid = TimeGrid(1.0, 64)
    out = []
    for H in (H_LOW, H_HIGH):
        rng = np.random.default_rng([seed, 3, int(H * 100)])
        paths = sample_paths(grid, H, sizes.paths, seed, stream=(3,))
        checks = []
        for _ in range(5):
            f = _random_simple(rng, grid, int(rng.integers(2, 6)))
            checks.append(_mc("f", integrate_simple(f, paths)[:, 0], m_inner_simple(f, f, H), tol,
                              Statistic.VARIANCE))
        out.append(_worst(checks, f"c03.wiener_isometry.H{H}"))
    return out


STEP_INPUTS = (
    SimpleFunction([0.0, 1.0], [1.0]),
    SimpleFunction([0.0, 0.25, 0.625, 1.0], [1.0, -2.0, 0.5]),
    SimpleFunction([0.0, 0.5, 0.75, 1.0], [0.0, 1.0, 0.0]),
)


def _smooth_inputs(grid: TimeGrid) -> list[SampledFunction]:
    return [SampledFunction.from_callable(grid, lambda t: np.exp(-t)),
            SampledFunction.from_callable(grid, lambda t: np.sin(3 * t) + 0.5)]


def criterion_04(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """K* isometry on steps, derivative-form and G_f-form agreement."""
    grid = TimeGrid(1.0, 2048)
    steps = [s.to_sampled(grid) for s in STEP_INPUTS]
    inputs = steps + _smooth_inputs(grid)
    out = []
    for H in (H_LOW, H_HIGH):
        iso = max(abs(l2_norm(kstar(f, H)) ** 2 / m_inner_simple(s, s, H) - 1.0)
                  for s, f in zip(STEP_INPUTS, steps))
        out.append(_upper(f"c04.kstar_isometry.H{H}", iso, tol["kstar_rel"]))
        direct = max(_rel(kstar_direct_form(f, H), kstar(f, H)) for f in inputs)
        out.append(_upper(f"c04.kstar_direct_form.H{H}", direct, tol["kstar_rel"]))
    gf = max(_rel(g_f_form(f, H_LOW), kstar(f, H_LOW)) for f in inputs)
    out.append(_upper(f"c04.g_f_form.H{H_LOW}", gf, tol["kstar_rel"]))
    return out


def criterion_05(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """D^a(I^a f) = f for smooth f, with a positive convergence rate."""
    ns = (512, 1024, 2048, 4096)
    fns = {"exp": lambda t: np.exp(-t), "sin": lambda t: np.sin(3 * t) + 0.5}
    out = []
    for alpha in (0.3, 0.7):
        for label, fn in fns.items():
            errs = []
            for n in ns:
                f = SampledFunction.from_callable(TimeGrid(1.0, n), fn)
                errs.append(_rel(frac_derivative(frac_integral(f, alpha), alpha), f))
            out.append(_upper(f"c05.inversion.{label}.a{alpha}", errs[-1], tol["inversion_rel"]))
            out.append(_lower(f"c05.inversion_rate.{label}.a{alpha}", convergence_rate(errs),
                              tol["inversion_rate"]))
    return out


def criterion_06(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """||1_[0,t] f(t - .)||_M = ||1_[0,t] f||_M."""
    grid = TimeGrid(1.0, 2048)
    out = []
    for H in (H_LOW, H_HIGH):
        err = 0.0
        for f in _smooth_inputs(grid):
            for t in (0.25, 0.5, 1.0):
                a = m_norm(restrict(f, t), H)
                err = max(err, abs(m_norm(restrict(f, t, reflect=True), H) / a - 1.0))
        out.append(_upper(f"c06.reflection.H{H}", err, tol["reflection_rel"]))
    return out


def _embeddings() -> dict[str, Embedding]:
    return {
        "diagonal": Embedding.diagonal([1.0, 0.5, 0.25, 2.0]),
        "sheet": Embedding.sheet([1.0, 2.0, 0.5], [(0.0, 0.5), (0.5, 1.0), (0.25, 0.75)], 9),
    }


def criterion_07(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """E[(B(s)u*)(B(t)v*)] = <Qu*, v*> R(s,t); rotation invariance of Q."""
    grid = TimeGrid(1.0, 16)
    out = []
    for H in (H_LOW, H_HIGH):
        for label, emb in _embeddings().items():
            rng = np.random.default_rng([seed, 7, int(H * 100), emb.m])
            B = CylFbm(emb, H, grid, sizes.paths, seed)
            checks = []
            for s, t in ((0.5, 1.0), (0.25, 0.75), (1.0, 1.0)):
                u, v = rng.normal(size=emb.m), rng.normal(size=emb.m)
                ref = emb.q_form(u, v) * covariance(s, t, H)
                checks.append(_mc("st", apply(B, s, u) * apply(B, t, v), ref, tol))
            out.append(_worst(checks, f"c07.cylindrical.{label}.H{H}"))
    rng = np.random.default_rng([seed, 7])
    err = 0.0
    for emb in _embeddings().values():
        O = np.linalg.qr(rng.normal(size=(emb.N, emb.N)))[0]
        err = max(err, float(np.max(np.abs(covariance_operator(emb.rotated(O)) - covariance_operator(emb)))))
    out.append(_upper("c07.rotation_invariance", err, tol["rotation_abs"]))
    return out


def criterion_08(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Sample covariance of int Psi dB against Q_Psi for a diagonal semigroup."""
    lam = np.array([1.0, 4.0, 9.0])
    emb = Embedding.diagonal([1.0, 0.7, 0.5])
    fine = OperatorIntegrand.diagonal_semigroup(TimeGrid(1.0, 2048), lam)
    coarse = TimeGrid(1.0, 16)
    out = []
    for H in (0.3, H_HIGH):
        Q = covariance_q_psi(fine, H, emb)
        B = driving_noise(emb, H, coarse, sizes.paths, seed)
        S = simulate(OperatorIntegrand.diagonal_semigroup(coarse, lam), B, 1.0)
        checks = [_mc("ij", S[:, i] * S[:, j], Q[i, j], tol)
                  for i in range(lam.size) for j in range(i, lam.size)]
        out.append(_worst(checks, f"c08.q_psi.H{H}"))
    return out


def brute_mode_variance(lam: float, H: float, t: float, n: int = 4096) -> float:
    """H(2H-1) sum over n^2 cells of e^{-lam(t-s)} e^{-lam(t-r)} |s-r|^{2H-2}.

    Off-diagonal cells use the midpoint value; diagonal cells integrate the
    kernel exactly with the integrand frozen at the midpoint.
    """
    h = t / n
    b = 2 * H - 2
    f = np.exp(-lam * (t - (np.arange(n) + 0.5) * h))
    k = np.arange(n)
    w = np.empty(n)
    w[0] = 2 * h ** (b + 2) / ((b + 1) * (b + 2))
    w[1:] = h * h * (k[1:] * h) ** b
    kernel = np.concatenate([w[:0:-1], w])
    return H * (2 * H - 1) * float(f @ fftconvolve(f, kernel, mode="valid"))


def criterion_09(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Mode variance: lambda = 0 exact, brute-force double sum, Monte Carlo."""
    out = []
    for H in (0.3, H_HIGH):
        v, ref = mode_variance_exact(0.0, 2.0, 0.5, H), 4.0 * 0.5 ** (2 * H)
        err = abs(v - ref)
        out.append(Check(f"c09.lambda0_exact.H{H}", v, ref, 0.0 if err == 0 else np.inf,
                         bool(err <= 4 * np.spacing(ref))))
    v = mode_variance_exact(1.0, 1.0, 1.0, H_HIGH)
    out.append(_upper("c09.brute_force.H0.75", abs(v / brute_mode_variance(1.0, H_HIGH, 1.0) - 1.0),
                      tol["brute_rel"]))
    sol = simulate_mild(SpectralModel(np.array([1.0]), 1.0), H_HIGH, TimeGrid(1.0, 16), sizes.mode_paths, seed)
    out.append(_mc("c09.mc_variance.H0.75", sol.modes[0, :, -1], v, tol, Statistic.VARIANCE))
    return out


THRESHOLD_CASES = ((1, 0.3, "exists"), (1, 0.2, "diverges"), (2, 0.6, "exists"), (2, 0.4, "diverges"))


def criterion_10(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Laplacian threshold n/4 < H from both the series criterion and hs_test."""
    out = []
    grid = TimeGrid(1.0, 2048)
    hs_label = {"integrable": "exists", "not integrable": "diverges"}
    for dim, H, expected in THRESHOLD_CASES:
        model = SpectralModel.dirichlet_laplacian(dim, 512)
        crit = existence_criterion(model, H)
        hs = hs_test(model.integrand(grid), H, embedding=model.embedding())
        ok = crit.verdict == expected and hs_label.get(hs.verdict) == expected
        out.append(Check(f"c10.threshold.n{dim}.H{H}", crit.tail.exponent, 1.0, 0.0 if ok else np.inf, ok))
    return out


def criterion_11(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """The diagonal-semigroup estimates hold; z is value / bound."""
    out = []
    for lam in (1.0, 10.0, 100.0):
        reports = [bound_check_high(lam, H) for H in (H_HIGH,) + tuple(h for h in sizes.extra_hurst if h > 0.5)]
        reports += [bound_check_low(lam, H) for H in (H_LOW,) + tuple(h for h in sizes.extra_hurst if h < 0.5)]
        for rep in reports:
            for item in rep.items:
                out.append(Check(f"c11.{item.name}.H{rep.hurst}.lam{lam:g}", item.value, item.bound,
                                 item.ratio, item.holds))
    return out


def criterion_12(sizes: Sizes, seed: int, tol: dict) -> list[Check]:
    """Weak-form residual of simulated modes: small at factor 8, decreasing under refinement."""
    model = SpectralModel.dirichlet_laplacian(1, 4, q=1.0, y0=[1.0, -0.5, 0.25, 0.0])
    factors = (1, 2, 4, 8)
    out = []
    for H in (0.3, H_HIGH):
        sol = simulate_mild(model, H, TimeGrid(1.0, 32), 4, seed, factor=8)
        errs = np.array([max(weak_solution_residual(sol, p, f).normalized.max() for p in range(4))
                         for f in factors])
        out.append(_upper(f"c12.residual.H{H}", float(errs[-1]), tol["residual"]))
        rate = convergence_rate(errs, 1.0 / np.array(factors, dtype=float))
        ok = rate > 0 and bool(np.all(np.diff(errs) < 0))
        out.append(Check(f"c12.residual_rate.H{H}", rate, 0.0, 0.0 if ok else np.inf, ok))
    return out


CRITERIA = {
    1: criterion_01, 2: criterion_02, 3: criterion_03, 4: criterion_04,
    5: criterion_05, 6: criterion_06, 7: criterion_07, 8: criterion_08,
    9: criterion_09, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run_criterion(number: int, quick: bool = True, seed: int = 0, tolerances=None) -> list[Check]:
    tol = dict(DEFAULT_TOLERANCES)
    unknown = set(tolerances or {}) - set(tol)
    if unknown:
        raise ValueError(f"unknown tolerance names: {sorted(unknown)}")
    tol.update(tolerances or {})
    return CRITERIA[number](QUICK if quick else FULL, seed, tol)


def run_all(quick: bool = True, seed: int = 0, tolerances=None, jobs: int = 1,
            criteria=None) -> list[Check]:
    """Run the selected criteria (all by default); checks come back sorted by name."""
    numbers = sorted(CRITERIA) if criteria is None else sorted(criteria)
    args = [(k, quick, seed, tolerances) for k in numbers]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_packed, args))
    else:
        results = [_run_packed(a) for a in args]
    return sorted((c for r in results for c in r), key=lambda c: c.name)


def _run_packed(args) -> list[Check]:
    return run_criterion(*args)

