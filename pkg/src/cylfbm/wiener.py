"""Wiener integrals of deterministic R^m-valued functions against a scalar fBm.

Two simulation routes are kept separate so that each can check the other:
the step-sum on discrete fBm paths, and the K* route on Brownian increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbm import FbmPathSet, as_hurst
from .fracops import kstar, m_inner_simple
from .functions import SampledFunction, SimpleFunction, l2_inner

__all__ = [
    "WienerIntegralResult",
    "integrate_simple",
    "integrate_via_kstar",
    "second_moment_exact",
    "wiener_integral",
]


@dataclass
class WienerIntegralResult:
    """Samples of int f db together with the exact second moment.

    Attributes
    ----------
    samples : ndarray, shape (n_paths, m)
    exact_second_moment : float
        ||f||_M^2, i.e. the expected squared Euclidean norm of one sample row.
    stderr : float
        Standard error of the Monte Carlo estimate of that second moment.
    """

    samples: np.ndarray
    exact_second_moment: float
    stderr: float

    def __post_init__(self):
        if self.exact_second_moment < 0:
            raise ValueError("second moment must be nonnegative")

    @property
    def estimate(self) -> float:
        return float(np.mean(np.sum(self.samples**2, axis=1)))

    @property
    def z_score(self) -> float:
        if self.stderr == 0:
            return 0.0 if np.isclose(self.estimate, self.exact_second_moment) else np.inf
        return (self.estimate - self.exact_second_moment) / self.stderr


def integrate_simple(f: SimpleFunction, paths: FbmPathSet) -> np.ndarray:
    """Riemann-Stieltjes sum sum_i x_i (b(t_{i+1}) - b(t_i)) per path.

    Returns an array of shape (n_paths, m). Raises ``ValueError`` when a
    breakpoint is not a node of the path grid.
    """
    grid = paths.grid
    if not np.isclose(f.T, grid.T):
        raise ValueError("integrand horizon differs from the path horizon")
    idx = np.array([grid.index_of(b) for b in f.breakpoints])
    jumps = paths.paths[:, idx[1:]] - paths.paths[:, idx[:-1]]
    return jumps @ f.pieces


def second_moment_exact(f: SimpleFunction, H) -> float:
    """E|int f db|^2 = <f, f>_M by the exact double sum over pieces."""
    return m_inner_simple(f, f, H)


def _cell_averages(g: SampledFunction) -> np.ndarray:
    avg = 0.5 * (g.cell_left + g.cell_right)
    n = g.grid.n
    for s in g.singularities:
        # the stored values next to a blow-up are placeholders; the residual term carries that mass
        cell = s.node if s.side == "right" else s.node - 1
        if 0 <= cell < n:
            avg[cell] = 0.0
    return avg


def integrate_via_kstar(f: SampledFunction, H, wiener_increments=None, seed: int | None = None,
                        n_paths: int = 10_000) -> np.ndarray:
    """Sample int (K* f) dW against standard Brownian motion.

    With g = K* f and a_k its average over cell k, the integral splits as
    sum_k a_k dW_k plus int (g - Pg) dW, where P projects onto step functions on
    the grid. The second term is Gaussian, independent of the increments, with
    covariance G - h sum_k a_k a_k^T (G the Gram matrix of g), and is drawn
    exactly. The samples therefore have covariance G = <f, f>_M.

    Parameters
    ----------
    f : SampledFunction
    H : float or Hurst
    wiener_increments : ndarray, shape (n_paths, n), optional
        Brownian increments over the cells of ``f.grid``. Drawn from ``seed``
        when omitted.
    seed : int, optional
    n_paths : int
        Used only when the increments are drawn here.

    Returns
    -------
    ndarray, shape (n_paths, m)
    """
    grid = f.grid
    rng = np.random.default_rng(seed)
    if wiener_increments is None:
        dW = rng.standard_normal((n_paths, grid.n)) * np.sqrt(grid.h)
    else:
        dW = np.asarray(wiener_increments, dtype=float)
        if dW.ndim != 2 or dW.shape[1] != grid.n:
            raise ValueError(f"increments must have shape (n_paths, {grid.n})")
    g = kstar(f, as_hurst(H))
    avg = _cell_averages(g)
    m = g.m
    gram = np.array([[l2_inner(g.column(i), g.column(j)) for j in range(m)] for i in range(m)])
    resid = gram - grid.h * avg.T @ avg
    w, v = np.linalg.eigh(0.5 * (resid + resid.T))
    root = v * np.sqrt(np.clip(w, 0.0, None))
    return dW @ avg + rng.standard_normal((dW.shape[0], m)) @ root.T


def wiener_integral(f: SimpleFunction, paths: FbmPathSet) -> WienerIntegralResult:
    """Step-sum samples with the exact second moment and its Monte Carlo standard error."""
    samples = integrate_simple(f, paths)
    sq = np.sum(samples**2, axis=1)
    stderr = float(np.std(sq, ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0
    return WienerIntegralResult(samples, second_moment_exact(f, paths.hurst), stderr)
