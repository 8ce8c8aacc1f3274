"""Stochastic integrals of deterministic operator-valued integrands against cylindrical fBm.

For Psi: [0,T] -> L(U,V) the integral acts on a functional v* of V through
Z v* = sum_k int <Psi(t) i e_k, v*> db_k(t). Its covariance factors as
Q_Psi = Gamma Gamma* where Gamma* v* = K*(i* Psi*(.) v*) is an X-valued L2
function. V is represented by m_V coordinates with the Euclidean pairing, so
the coordinate functionals f_j form an orthonormal basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .cylindrical import CylFbm, Embedding, EmbeddingKind
from .fbm import Regime, TimeGrid, as_hurst
from .fracops import kstar, m_inner_high, m_norm
from .functions import SampledFunction, l2_inner
from .harness import convergence_rate
from .series import SeriesVerdict, TailReport, tail_verdict

__all__ = [
    "OperatorIntegrand",
    "GammaOperator",
    "NotIntegrableError",
    "HsReport",
    "DominationReport",
    "ContinuityReport",
    "gamma_adjoint",
    "gamma_operator",
    "covariance_q_psi",
    "hs_test",
    "simulate",
    "driving_noise",
    "domination_check",
    "mean_square_continuity",
    "semigroup_norm_sq",
    "REFINE",
]

# refined-grid factor for step-sum simulation of non-step integrands
REFINE = 8
# K* outputs beyond this size are treated as a diverging quadrature
OVERFLOW_GUARD = 1e100
# e^{-s} on [L_MAX, inf) contributes below double precision to the M norm
L_MAX = 40.0


class NotIntegrableError(ValueError):
    """The K* quadrature of i* Psi*(.) v* diverged."""


@dataclass(frozen=True)
class OperatorIntegrand:
    """Psi(t) as an (m_V, m_U) matrix in coordinates.

    Exactly one of ``rule`` and ``decay`` is set. ``rule`` maps an array of p
    times to a (p, m_V, m_U) array; ``decay`` holds lambda_k for the diagonal
    semigroup Psi(t) = diag(exp(-lambda_k t)). ``support`` restricts the
    integrand to [0, support], and ``scale`` multiplies it.
    """

    grid: TimeGrid
    m_v: int
    m_u: int
    rule: Callable | None = field(default=None, compare=False)
    decay: np.ndarray | None = None
    support: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if (self.rule is None) == (self.decay is None):
            raise ValueError("give exactly one of an evaluation rule and a decay sequence")
        if self.decay is not None:
            d = np.asarray(self.decay, dtype=float)
            if d.shape != (self.m_v,) or self.m_v != self.m_u:
                raise ValueError("a diagonal rule needs m_V = m_U = len(decay)")
            if np.any(d < 0):
                raise ValueError("decay rates must be nonnegative")
            object.__setattr__(self, "decay", d)
        if self.support is not None:
            self.grid.index_of(self.support)

    @classmethod
    def constant(cls, grid: TimeGrid, matrix) -> "OperatorIntegrand":
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(grid, M.shape[0], M.shape[1], rule=lambda t: np.broadcast_to(M, (len(t),) + M.shape))

    @classmethod
    def from_matrices(cls, grid: TimeGrid, matrices) -> "OperatorIntegrand":
        """Grid-indexed family (n+1, m_V, m_U), linear between nodes."""
        M = np.array(matrices, dtype=float)
        if M.ndim != 3 or M.shape[0] != grid.n + 1:
            raise ValueError(f"need {grid.n + 1} matrices")
        if not np.all(np.isfinite(M)):
            raise ValueError("integrand must be bounded on the grid")

        def rule(t):
            x = np.clip(np.asarray(t, dtype=float) / grid.h, 0, grid.n)
            k = np.minimum(np.floor(x).astype(int), grid.n - 1)
            y = (x - k)[:, None, None]
            return M[k] * (1 - y) + M[k + 1] * y

        return cls(grid, M.shape[1], M.shape[2], rule=rule)

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn, m_v: int, m_u: int) -> "OperatorIntegrand":
        return cls(grid, m_v, m_u, rule=fn)

    @classmethod
    def diagonal_semigroup(cls, grid: TimeGrid, lambdas) -> "OperatorIntegrand":
        lam = np.asarray(lambdas, dtype=float)
        return cls(grid, lam.size, lam.size, decay=lam)

    def restricted(self, t: float) -> "OperatorIntegrand":
        """1_[0,t] Psi."""
        t = float(t) if self.support is None else min(float(t), self.support)
        return replace(self, support=t)

    def __mul__(self, c: float) -> "OperatorIntegrand":
        return replace(self, scale=self.scale * float(c))

    __rmul__ = __mul__

    def matrices(self, t) -> np.ndarray:
        """Psi at times ``t`` as a (p, m_V, m_U) array."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.decay is not None:
            out = np.zeros((t.size, self.m_v, self.m_u))
            idx = np.arange(self.m_v)
            out[:, idx, idx] = np.exp(-np.outer(t, self.decay))
        else:
            out = np.array(self.rule(t), dtype=float).reshape(t.size, self.m_v, self.m_u)
        out = out * self.scale
        if self.support is not None:
            out[t > self.support + 1e-12 * self.grid.T] = 0.0
        return out

    def coupling(self, t, embedding: Embedding, v_star) -> np.ndarray:
        """<Psi(t) i e_k, v*> for each time and k, shape (p, N)."""
        v = np.asarray(v_star, dtype=float)
        if v.shape != (self.m_v,):
            raise ValueError(f"functional must have {self.m_v} coordinates")
        _check_embedding(self, embedding)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.decay is not None:
            w = v * np.exp(-np.outer(t, self.decay)) * self.scale
            if self.support is not None:
                w[t > self.support + 1e-12 * self.grid.T] = 0.0
            return w @ embedding.columns
        return np.einsum("j,pju,uk->pk", v, self.matrices(t), embedding.columns)

    def row_function(self, embedding: Embedding, v_star) -> SampledFunction:
        """t -> i* Psi*(t) v* on the integrand grid, as an N-column sampled function."""
        vals = self.coupling(self.grid.nodes, embedding, v_star)
        f = SampledFunction(self.grid, vals)
        if self.support is None or np.isclose(self.support, self.grid.T):
            return f
        return _window(f, 0.0, self.support)

    def max_norm(self) -> float:
        """max over grid nodes of the spectral norm of Psi."""
        return float(max(np.linalg.norm(M, 2) for M in self.matrices(self.grid.nodes)))


def _check_embedding(psi: OperatorIntegrand, embedding: Embedding) -> None:
    if embedding.m != psi.m_u:
        raise ValueError(f"embedding maps into {embedding.m} coordinates, integrand expects {psi.m_u}")


def _identity_embedding(psi: OperatorIntegrand) -> Embedding:
    return Embedding.diagonal(np.ones(psi.m_u))


def _window(f: SampledFunction, a: float, b: float) -> SampledFunction:
    """1_[a,b) f on the same grid; a and b must be nodes."""
    grid = f.grid
    ia, ib = grid.index_of(a), grid.index_of(b)
    vals = np.zeros_like(f.values)
    left = np.zeros_like(f.left_limits)
    vals[ia:ib] = f.values[ia:ib]
    left[ia + 1 : ib + 1] = f.left_limits[ia + 1 : ib + 1]
    sing = tuple(
        s for s in f.singularities
        if ia < s.node < ib or (s.node == ia and s.side == "right") or (s.node == ib and s.side == "left")
    )
    return SampledFunction(grid, vals, left, sing)


def _guarded_kstar(f: SampledFunction, H) -> SampledFunction:
    active = np.flatnonzero(np.any(f.values != 0, axis=0) | np.any(f.left_limits != 0, axis=0))
    out_vals = np.zeros_like(f.values)
    out_left = np.zeros_like(f.left_limits)
    sing = ()
    if active.size:
        g = kstar(f * np.eye(f.m)[:, active], H)
        if not (np.all(np.isfinite(g.values)) and np.abs(g.values).max() < OVERFLOW_GUARD):
            raise NotIntegrableError("K* quadrature diverged; the integrand is not in the integrable class")
        out_vals[:, active] = g.values
        out_left[:, active] = g.left_limits
        sing = g.singularities
    return SampledFunction(f.grid, out_vals, out_left, sing)


def gamma_adjoint(psi: OperatorIntegrand, v_star, H, embedding: Embedding | None = None) -> SampledFunction:
    """Gamma* v* = K*(i* Psi*(.) v*), computed column by column.

    Without an embedding, i is the identity on R^{m_U}.
    """
    embedding = embedding or _identity_embedding(psi)
    return _guarded_kstar(psi.row_function(embedding, v_star), as_hurst(H))


@dataclass
class GammaOperator:
    """Gamma* images of the coordinate functionals and their Gram matrix."""

    images: list[SampledFunction]
    gram: np.ndarray


def gamma_operator(psi: OperatorIntegrand, H, embedding: Embedding | None = None,
                   m_v: int | None = None) -> GammaOperator:
    m_v = psi.m_v if m_v is None else m_v
    basis = np.eye(psi.m_v)
    images = [gamma_adjoint(psi, basis[j], H, embedding) for j in range(m_v)]
    gram = np.zeros((m_v, m_v))
    for i in range(m_v):
        for j in range(i, m_v):
            gram[i, j] = gram[j, i] = l2_inner(images[i], images[j])
    return GammaOperator(images, gram)


def covariance_q_psi(psi: OperatorIntegrand, H, embedding: Embedding | None = None,
                     m_v: int | None = None) -> np.ndarray:
    """Q_Psi = Gamma Gamma* in coordinates: G_jk = <Gamma* f_j, Gamma* f_k>_{L2}."""
    return gamma_operator(psi, H, embedding, m_v).gram


def _decay_on(L: float, n: int) -> SampledFunction:
    return SampledFunction.from_callable(TimeGrid(L, n), lambda s: np.exp(-s))


@lru_cache(maxsize=512)
def _unit_decay_norm_sq(L: float, H: float, n: int) -> float:
    if H > 0.5:
        # product integration is exact for the interpolant, whose error is a
        # clean O(h^2); one Richardson step removes it
        fine, coarse = _decay_on(L, n), _decay_on(L, n // 2)
        return (4.0 * m_inner_high(fine, fine, H) - m_inner_high(coarse, coarse, H)) / 3.0
    return m_norm(_decay_on(L, n), H) ** 2


_CELLS_PER_UNIT = 512


def semigroup_norm_sq(lam: float, H, T: float, n: int = 2048) -> float:
    """||e^{-lam .}||_M^2 on [0, T].

    Uses self-similarity, ||g(lam .)||^2_{M[0,T]} = lam^{-2H} ||g||^2_{M[0,lam T]},
    so that one well-resolved computation on [0, min(lam T, L_MAX)] serves every
    large lam.
    """
    H = as_hurst(H).value
    if lam < 0:
        raise ValueError("decay rate must be nonnegative")
    if T == 0:
        return 0.0
    if lam == 0:
        return T ** (2 * H)
    L = min(lam * T, L_MAX)
    if H < 0.5:
        # keep the cell width on [0, L] at or below 1/512 so the K* boundary layer at 0 stays resolved
        n = max(int(n), _CELLS_PER_UNIT * math.ceil(L))
    return lam ** (-2 * H) * _unit_decay_norm_sq(round(L, 12), H, n)


_HS_LABELS = {
    SeriesVerdict.CONVERGES: "integrable",
    SeriesVerdict.DIVERGES: "not integrable",
    SeriesVerdict.INCONCLUSIVE: "inconclusive",
}


@dataclass
class HsReport:
    verdict: str
    tail: TailReport

    @property
    def partial_sums(self) -> np.ndarray:
        return self.tail.partial_sums


def _hs_terms(psi: OperatorIntegrand, H, N: int, embedding: Embedding | None) -> np.ndarray:
    diag_emb = embedding is None or embedding.kind is EmbeddingKind.DIAGONAL
    if psi.decay is not None and diag_emb and psi.support is None:
        q = np.ones(N) if embedding is None else np.diag(embedding.columns)[:N]
        T = psi.grid.T
        return np.array([(psi.scale * q[k]) ** 2 * semigroup_norm_sq(psi.decay[k], H, T, psi.grid.n)
                         for k in range(N)])
    basis = np.eye(psi.m_v)
    out = np.empty(N)
    for k in range(N):
        g = gamma_adjoint(psi, basis[k], H, embedding)
        out[k] = max(l2_inner(g, g), 0.0)
    return out


def hs_test(psi: OperatorIntegrand, H, N: int | None = None, tail_rule: float | None = None,
            embedding: Embedding | None = None) -> HsReport:
    """Hilbert-Schmidt test sum_k ||Gamma* f_k||^2 < inf over the coordinate basis of V.

    The diagonal semigroup with a diagonal embedding uses the closed scaling
    form of each term, so N can far exceed what the time grid resolves.
    """
    N = psi.m_v if N is None else min(N, psi.m_v)
    terms = _hs_terms(psi, H, N, embedding)
    if tail_rule is not None:
        rep = tail_verdict(terms, exponent=tail_rule, band=(1.0, 1.0))
        if float(tail_rule) == 1.0:
            rep.verdict = SeriesVerdict.DIVERGES
    else:
        rep = tail_verdict(terms)
    return HsReport(_HS_LABELS[rep.verdict], rep)


def driving_noise(embedding: Embedding, H, grid: TimeGrid, n_paths: int, seed: int,
                  factor: int = REFINE) -> CylFbm:
    """Cylindrical fBm on the grid refined by ``factor``, as used by :func:`simulate`."""
    return CylFbm(embedding, as_hurst(H), grid.refine(factor), n_paths, seed)


def simulate(psi: OperatorIntegrand, B: CylFbm, upto_t: float) -> np.ndarray:
    """Samples of the coordinates of int_0^t Psi dB, shape (n_paths, m_V).

    Coordinate j is sum_k int_0^t <Psi(s) i e_k, f_j> db_k(s), each integral a
    step sum on the noise grid with the integrand taken at cell midpoints.
    """
    _check_embedding(psi, B.embedding)
    grid = B.grid
    jt = grid.index_of(upto_t)
    out = np.zeros((B.n_paths, psi.m_v))
    if jt == 0:
        return out
    mids = grid.midpoints[:jt]
    if psi.decay is not None:
        lam = psi.decay
        A = np.exp(-np.outer(mids, lam))[:, :, None] * B.embedding.columns[None] * psi.scale
        if psi.support is not None:
            A[mids > psi.support] = 0.0
    else:
        A = np.einsum("pju,uk->pjk", psi.matrices(mids), B.embedding.columns)
    for k in np.flatnonzero(np.any(A != 0, axis=(0, 1))):
        db = np.diff(B.component(int(k)).paths[:, : jt + 1], axis=1)
        out += db @ A[:, :, k]
    return out


@dataclass
class DominationReport:
    ratios: np.ndarray
    max_ratio: float
    hs_phi: np.ndarray
    hs_psi: np.ndarray

    @property
    def holds(self) -> bool:
        c2 = self.max_ratio**2
        return bool(np.all(self.hs_phi <= c2 * self.hs_psi * (1 + 1e-9) + 1e-300))


def domination_check(phi: OperatorIntegrand, psi: OperatorIntegrand, H, functionals=None,
                     embedding: Embedding | None = None) -> DominationReport:
    """Compare ||i* Phi*(.) v*||_M with ||i* Psi*(.) v*||_M over a family of functionals.

    The family defaults to the coordinate functionals, which also drive the
    Hilbert-Schmidt partial sums; those of Phi must then stay below c^2 times
    those of Psi with c the largest ratio.
    """
    if phi.m_v != psi.m_v:
        raise ValueError("integrands map into different spaces")
    basis = np.eye(psi.m_v)
    fam = basis if functionals is None else np.vstack([basis, np.atleast_2d(functionals)])
    na, nb = [], []
    for v in fam:
        ga, gb = gamma_adjoint(phi, v, H, embedding), gamma_adjoint(psi, v, H, embedding)
        na.append(np.sqrt(max(l2_inner(ga, ga), 0.0)))
        nb.append(np.sqrt(max(l2_inner(gb, gb), 0.0)))
    na, nb = np.array(na), np.array(nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(nb > 0, na / nb, np.where(na > 0, np.inf, 0.0))
    m = psi.m_v
    return DominationReport(ratios, float(ratios.max()), np.cumsum(na[:m] ** 2), np.cumsum(nb[:m] ** 2))


@dataclass
class ContinuityReport:
    dts: np.ndarray
    errors: np.ndarray
    rate: float | None

    @property
    def monotone(self) -> bool:
        e = self.errors
        return bool(np.all(np.diff(e) <= 1e-12 * max(e.max(), 1e-300)))


def mean_square_continuity(psi: OperatorIntegrand, H, t: float, dt_sequence, v_star,
                           embedding: Embedding | None = None) -> ContinuityReport:
    """||1_[t, t+dt] i* Psi*(.) v*||_M^2 for each dt, which is E|Z(t+dt)v* - Z(t)v*|^2.

    The rate of decay in dt is fitted when at least three errors are positive.
    """
    H = as_hurst(H)
    embedding = embedding or _identity_embedding(psi)
    f = psi.row_function(embedding, v_star)
    dts = np.asarray(dt_sequence, dtype=float)
    errs = np.zeros(dts.size)
    for i, dt in enumerate(dts):
        if dt == 0:
            continue
        w = _window(f, t, t + dt)
        if H.regime() is Regime.HIGH:
            errs[i] = m_inner_high(w, w, H)
        else:
            g = _guarded_kstar(w, H)
            errs[i] = l2_inner(g, g)
    pos = errs > 0
    rate = convergence_rate(errs[pos], dts[pos]) if pos.sum() >= 3 else None
    return ContinuityReport(dts, errs, rate)
