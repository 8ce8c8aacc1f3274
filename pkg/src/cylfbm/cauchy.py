"""The stochastic Cauchy problem dY = AY dt + dB(t) for diagonal self-adjoint generators.

With A e_k = -lambda_k e_k and B(t)v = sum_k q_k <e_k, v> b_k(t), every mode is a
scalar fractional Ornstein-Uhlenbeck process
Y_k(t) = e^{-lambda_k t} y0_k + q_k int_0^t e^{-lambda_k (t-s)} db_k(s),
and a weak solution exists when sum_k q_k^2 / lambda_k^{2H} < inf.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .cylindrical import CylFbm, Embedding
from .fbm import Hurst, Regime, TimeGrid, as_hurst
from .series import SeriesVerdict, TailReport, tail_verdict
from .stochint import REFINE, OperatorIntegrand, semigroup_norm_sq

__all__ = [
    "SpectralModel",
    "CriterionReport",
    "MildSolution",
    "BoundItem",
    "BoundReport",
    "existence_criterion",
    "simulate_mild",
    "mode_variance_exact",
    "bound_check_high",
    "bound_check_low",
    "low_bound_constant",
    "weak_solution_residual",
]


@dataclass(frozen=True)
class SpectralModel:
    """Truncated diagonal model: eigenvalues lambda_k, noise weights q_k, initial modes y0.

    ``allow_zero`` admits lambda_k = 0, where the semigroup is the identity;
    it exists for degenerate checks only.
    """

    lambdas: np.ndarray
    q: np.ndarray
    y0: np.ndarray | None = None
    dimension: int | None = None
    allow_zero: bool = False

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        q = np.broadcast_to(np.asarray(self.q, dtype=float), lam.shape).copy()
        y0 = np.zeros_like(lam) if self.y0 is None else np.broadcast_to(
            np.asarray(self.y0, dtype=float), lam.shape).copy()
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("need at least one eigenvalue")
        if np.any(lam < 0) or (not self.allow_zero and np.any(lam == 0)):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(y0))):
            raise ValueError("weights and initial values must be finite")
        for name, arr in (("lambdas", lam), ("q", q), ("y0", y0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def dirichlet_laplacian(cls, dimension: int, N: int, q=1.0, y0=None) -> "SpectralModel":
        """lambda_k = k^2 in one dimension (Dirichlet on (0, pi)), k^(2/n) as growth surrogate for n >= 2."""
        if dimension < 1 or N < 1:
            raise ValueError("dimension and N must be positive")
        k = np.arange(1, N + 1, dtype=float)
        lam = k**2 if dimension == 1 else k ** (2.0 / dimension)
        return cls(lam, q, y0, dimension)

    @property
    def N(self) -> int:
        return self.lambdas.size

    def embedding(self) -> Embedding:
        return Embedding.diagonal(self.q)

    def integrand(self, grid: TimeGrid) -> OperatorIntegrand:
        """The semigroup S(.) as a diagonal integrand on ``grid``."""
        return OperatorIntegrand.diagonal_semigroup(grid, self.lambdas)


_EXISTS_LABELS = {
    SeriesVerdict.CONVERGES: "exists",
    SeriesVerdict.DIVERGES: "diverges",
    SeriesVerdict.INCONCLUSIVE: "inconclusive",
}


@dataclass
class CriterionReport:
    verdict: str
    tail: TailReport

    @property
    def partial_sums(self) -> np.ndarray:
        return self.tail.partial_sums


def existence_criterion(model: SpectralModel, H, tail_rule: float | None = None) -> CriterionReport:
    """Partial sums of q_k^2 / lambda_k^{2H} and the tail verdict."""
    H = as_hurst(H).value
    lam = model.lambdas
    with np.errstate(divide="ignore"):
        terms = np.where(model.q == 0, 0.0, model.q**2 / lam ** (2 * H))
    if not np.all(np.isfinite(terms)):
        raise ValueError("a zero eigenvalue with nonzero weight makes the criterion meaningless")
    if tail_rule is not None:
        rep = tail_verdict(terms, exponent=tail_rule, band=(1.0, 1.0))
        if float(tail_rule) == 1.0:
            rep.verdict = SeriesVerdict.DIVERGES
    else:
        rep = tail_verdict(terms)
    return CriterionReport(_EXISTS_LABELS[rep.verdict], rep)


@dataclass
class MildSolution:
    """Simulated modes on the output grid and the driving noise they came from.

    ``modes`` has shape (N, n_paths, n+1). The noise lives on the output grid
    refined by ``factor``.
    """

    model: SpectralModel
    hurst: Hurst
    grid: TimeGrid
    factor: int
    noise: CylFbm
    modes: np.ndarray = field(repr=False)


def _ou_recursion(lam: float, q: float, y0: float, db: np.ndarray, h: float) -> np.ndarray:
    """Y_{i+1} = e^{-lam h} Y_i + q e^{-lam h/2} db_i; db is (n_paths, steps), result (n_paths, steps+1)."""
    decay = np.exp(-lam * h)
    weight = q * np.exp(-0.5 * lam * h)
    out = np.empty((db.shape[0], db.shape[1] + 1))
    out[:, 0] = y0
    for i in range(db.shape[1]):
        out[:, i + 1] = decay * out[:, i] + weight * db[:, i]
    return out


def simulate_mild(model: SpectralModel, H, grid: TimeGrid, n_paths: int, seed: int,
                  factor: int = REFINE) -> MildSolution:
    """Mode paths of the variation-of-constants solution.

    Each stochastic convolution is a step sum on the grid refined by ``factor``
    with the integrand e^{-lambda (t-s)} taken at cell midpoints.
    """
    H = as_hurst(H)
    if np.all(model.lambdas > 0) and existence_criterion(model, H).verdict == "diverges":
        warnings.warn("the existence series diverges; simulating the truncated model", RuntimeWarning)
    noise = CylFbm(model.embedding(), H, grid.refine(factor), n_paths, seed)
    modes = np.empty((model.N, n_paths, grid.n + 1))
    for k in range(model.N):
        lam, q, y0 = model.lambdas[k], model.q[k], model.y0[k]
        if q == 0:
            modes[k] = np.exp(-lam * grid.nodes)[None, :] * y0
            continue
        db = noise.component(k).increments()
        modes[k] = _ou_recursion(lam, q, y0, db, noise.grid.h)[:, ::factor]
    return MildSolution(model, H, grid, factor, noise, modes)


def mode_variance_exact(lam: float, q: float, t: float, H, n: int = 2048) -> float:
    """Var Y_k(t) for y0 = 0: q^2 ||1_[0,t] e^{-lam (t-.)}||_M^2.

    By reflection this is the M norm of e^{-lam .} on [0, t]. H > 1/2 uses
    product integration of the double integral, H < 1/2 the K* quadrature.
    """
    H = as_hurst(H)
    if q == 0 or t == 0:
        return 0.0
    return float(q**2 * semigroup_norm_sq(lam, H, t, n))


@dataclass
class BoundItem:
    """A computed value against its analytic bound.

    ``rtol`` is the relative accuracy of the computed value; some bounds are
    attained to machine precision for large lambda T.
    """

    name: str
    value: float
    bound: float
    rtol: float = 1e-10

    @property
    def slack(self) -> float:
        return self.bound - self.value

    @property
    def ratio(self) -> float:
        return self.value / self.bound if self.bound > 0 else 0.0

    @property
    def holds(self) -> bool:
        return bool(self.value <= self.bound * (1.0 + self.rtol))


@dataclass
class BoundReport:
    lam: float
    hurst: float
    T: float
    items: list[BoundItem]
    scaled_total: float | None = None

    @property
    def holds(self) -> bool:
        return all(it.holds for it in self.items)


def bound_check_high(lam: float, H, T: float = 1.0, n: int = 2048) -> BoundReport:
    """int int_[0,T]^2 e^{-lam(s+t)} |s-t|^{2H-2} ds dt against Gamma(2H-1) / lam^{2H}."""
    H = as_hurst(H)
    if H.regime() is not Regime.HIGH:
        raise ValueError("this bound concerns H > 1/2")
    h = H.value
    if lam <= 0:
        raise ValueError("lambda must be positive")
    value = 0.0 if T == 0 else semigroup_norm_sq(lam, H, T, n) / (h * (2 * h - 1))
    item = BoundItem("aux22a", float(value), float(special.gamma(2 * h - 1) / lam ** (2 * h)))
    return BoundReport(float(lam), h, float(T), [item], float(value * lam ** (2 * h)))


def _phi_quad(x: float, H: float) -> float:
    """int_0^x (1 - e^{-y}) y^{H-3/2} dy by algebraic-weight quadrature."""
    if x <= 0:
        return 0.0
    val, _ = integrate.quad(lambda y: -np.expm1(-y) / y if y > 0 else 1.0, 0.0, x,
                            weight="alg", wvar=(H - 0.5, 0.0), limit=200)
    return float(val)


def low_bound_constant(H) -> float:
    """Explicit c_2 from the three-part estimate of the difference term.

    With Phi(x) = int_0^x (1 - e^{-y}) y^{H-3/2} dy the part over x <= 1 is at
    most Phi(1)^2. Beyond 1, Phi(x) = Phi(1) + int_1^x and (a+b)^2 <= 2a^2 + 2b^2
    together with Phi(1) <= 1/(H+1/2), int_1^x <= x^{H-1/2}/(1/2-H) and
    int e^{-2(L-x)} dx <= 1/2 give 1/(H+1/2)^2 + 1/(1/2-H)^2.
    """
    H = as_hurst(H).value
    if H >= 0.5:
        raise ValueError("this constant concerns H < 1/2")
    return _phi_quad(1.0, H) ** 2 + 1.0 / (H + 0.5) ** 2 + 1.0 / (0.5 - H) ** 2


def bound_check_low(lam: float, H, T: float = 1.0, q: float = 1.0) -> BoundReport:
    """The three terms controlling ||K*(q e^{-lam .})||^2 for H < 1/2 and their bounds.

    aux231: q^2 int_0^T e^{-2 lam s} (T-s)^{2H-1} ds <= q^2 (2 lam)^{-2H} (1 + 1/(2H))
    aux232: q^2 int_0^T e^{-2 lam s} s^{2H-1} ds <= q^2 Gamma(2H) (2 lam)^{-2H}
    aux233.1: q^2 int_0^T (int_s^T |e^{-lam t} - e^{-lam s}| (t-s)^{H-3/2} dt)^2 ds <= q^2 c_2 / lam^{2H}
    Each left side is computed by quadrature with algebraic endpoint weights.
    ``scaled_total`` reports lam^{2H} times the sum, which stays bounded in lam.
    """
    H = as_hurst(H)
    if H.regime() is not Regime.LOW:
        raise ValueError("these bounds concern H < 1/2")
    h = H.value
    if lam <= 0:
        raise ValueError("lambda must be positive")
    q2 = float(q) ** 2
    if T == 0:
        v1 = v2 = v3 = 0.0
    else:
        f = lambda s: np.exp(-2 * lam * s)
        pts = dict(limit=400)
        v1 = integrate.quad(f, 0.0, T, weight="alg", wvar=(0.0, 2 * h - 1), **pts)[0]
        v2 = integrate.quad(f, 0.0, T, weight="alg", wvar=(2 * h - 1, 0.0), **pts)[0]
        L = lam * T
        # scaled form: lam^{-2H} int_0^L e^{-2(L-x)} Phi(x)^2 dx
        g = lambda x: np.exp(-2 * (L - x)) * _phi_quad(x, h) ** 2
        lo = max(0.0, L - 25.0)
        v3 = lam ** (-2 * h) * integrate.quad(g, lo, L, limit=200)[0]
    c2 = low_bound_constant(H)
    items = [
        BoundItem("aux231", q2 * v1, q2 * (2 * lam) ** (-2 * h) * (1 + 1 / (2 * h))),
        BoundItem("aux232", q2 * v2, q2 * special.gamma(2 * h) * (2 * lam) ** (-2 * h)),
        BoundItem("aux233.1", q2 * v3, q2 * c2 * lam ** (-2 * h)),
    ]
    total = q2 * (v1 + v2 + v3) * lam ** (2 * h)
    return BoundReport(float(lam), h, float(T), items, float(total))


@dataclass
class ResidualReport:
    """max_j |residual(t_j)| per mode, raw and divided by the size of the terms."""

    raw: np.ndarray
    normalized: np.ndarray
    factor: int


def weak_solution_residual(solution: MildSolution, path_index: int, factor: int | None = None) -> ResidualReport:
    """Residual of the weak formulation along one simulated path.

    residual(t_j) = Y_k(t_j) - y0_k + lambda_k int_0^{t_j} Y_k ds - q_k b_k(t_j), with
    Y_k recomputed on the output grid refined by ``factor`` (a divisor of the
    simulation factor, using the same noise) and the time integral by the
    trapezoid rule on that grid. The normalization divides by the largest of
    |Y_k|, |y0_k| and |q_k b_k| along the path.
    """
    model, grid = solution.model, solution.grid
    factor = solution.factor if factor is None else int(factor)
    if factor < 1 or solution.factor % factor:
        raise ValueError("factor must divide the simulation factor")
    stride = solution.factor // factor
    h = grid.h / factor
    raw = np.zeros(model.N)
    norm = np.zeros(model.N)
    for k in range(model.N):
        lam, q, y0 = model.lambdas[k], model.q[k], model.y0[k]
        b = solution.noise.component(k).paths[path_index, ::stride]
        Y = _ou_recursion(lam, q, y0, np.diff(b)[None, :], h)[0]
        integral = np.concatenate([[0.0], np.cumsum(0.5 * h * (Y[1:] + Y[:-1]))])
        res = (Y - y0 + lam * integral - q * b)[::factor]
        raw[k] = np.max(np.abs(res))
        scale = max(np.max(np.abs(Y)), abs(y0), np.max(np.abs(q * b)))
        norm[k] = raw[k] / scale if scale > 0 else raw[k]
    return ResidualReport(raw, norm, factor)
