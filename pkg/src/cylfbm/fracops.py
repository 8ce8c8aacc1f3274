"""Fractional integrals and derivatives on [0,T], the operator K*, and the M norms.

All operators act on :class:`~cylfbm.functions.SampledFunction` inputs and treat
them as discontinuous piecewise-linear functions. Power weights (s-t)^beta are
integrated exactly against each linear cell (product integration) and the
resulting Toeplitz sums are evaluated by FFT. Every operator is linear and acts
column by column with the same weights, so for F = x f the output is x times
the scalar output.
"""

from __future__ import annotations

import enum
from dataclasses import replace
from functools import lru_cache

import numpy as np
from scipy import signal, special

from .fbm import Regime, TimeGrid, as_hurst, b_h_constant, kernel_kappa, _gauss_legendre01
from .functions import (
    SampledFunction,
    SimpleFunction,
    Singularity,
    l2_inner,
    l2_norm,
    power_cell_moments,
    power_fit,
)

__all__ = [
    "Side",
    "frac_integral",
    "frac_derivative",
    "weyl_marchaud",
    "kstar",
    "kstar_direct_form",
    "g_f_form",
    "m_inner_simple",
    "m_norm_simple",
    "m_inner",
    "m_norm",
    "m_inner_high",
    "abs_m_norm",
    "restrict",
    "h_alpha_norm",
]

# cells near t = 0 where the weight p^(H-1/2) is integrated exactly rather than interpolated
ORIGIN_CELLS = 256


class Side(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _correlate(c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """out[j] = sum_d w[d] c[j+d] for j < len(c), with c zero beyond its end."""
    full = signal.fftconvolve(c, w[::-1, None], axes=0)
    return full[len(w) - 1 : len(w) - 1 + c.shape[0]]


def _convolve(c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """out[j] = sum_d w[d] c[j-d] for j < len(c), with c zero before its start."""
    return signal.fftconvolve(c, w[:, None], axes=0)[: c.shape[0]]


def _extrapolate_end(out: np.ndarray, j: int, step: int) -> None:
    """Fill out[j] linearly from out[j+step] and out[j+2 step]."""
    if 0 <= j + 2 * step < out.shape[0]:
        out[j] = 2 * out[j + step] - out[j + 2 * step]
    else:
        out[j] = out[j + step]


def _integral_sums(L: np.ndarray, R: np.ndarray, beta: float) -> np.ndarray:
    """S_j = sum_{k>=j} int_k^{k+1} (x-j)^beta (L_k(1-y) + R_k y) dx for j < n."""
    n = L.shape[0]
    wl, wr = power_cell_moments(beta, np.arange(n))
    return _correlate(L, wl) + _correlate(R, wr)


def _integral_array(values, left, h, alpha):
    n = values.shape[0] - 1
    out = np.zeros_like(values)
    out[:n] = _integral_sums(values[:-1], left[1:], alpha - 1.0) * h**alpha / special.gamma(alpha)
    return out


def _split_endpoint(f: SampledFunction):
    """Remove a declared power behaviour c (T-s)^e at T from f.

    Returns the remainder's node data and ``(e, c)`` with c in time units, or
    ``None`` when f declares nothing at T.
    """
    sing = [s for s in f.singularities if s.node == f.grid.n and s.side == "left"]
    if not sing:
        return f.values, f.left_limits, None
    e = sing[0].exponent
    c, r0 = power_fit(f, f.grid.n, "left", e)
    dist = np.maximum(f.grid.T - f.grid.nodes, 0.0)
    c_t = c / f.grid.h**e
    with np.errstate(divide="ignore"):
        power = dist[:, None] ** e * c_t[None, :]
    vals = f.values - power
    left = f.left_limits - power
    # a cusp vanishes at T, so the remainder keeps f(T-); a blow-up leaves the fitted value
    vals[-1] = left[-1] = f.left_limits[-1] if e > 0 else r0
    return vals, left, (e, c_t)


def _endpoint_term(grid: TimeGrid, e: float, c_t: np.ndarray, order: float) -> np.ndarray:
    """Exact image of c (T-s)^e under I^order (order > 0) or D^(-order) (order < 0)."""
    factor = special.gamma(e + 1.0) / special.gamma(e + 1.0 + order)
    dist = grid.T - grid.nodes
    out = np.zeros((grid.n + 1, c_t.size))
    out[:-1] = factor * dist[:-1, None] ** (e + order) * c_t[None, :]
    return out


def _origin_singularity(e: float) -> Singularity:
    """K* f ~ c0 t^e + c1 t^(-e) + c2 t^(1+e) + regular near t = 0 for smooth f."""
    return Singularity(0, "right", e, (-e, 1.0 + e))


def _endpoint_singularity(n: int, exponent: float) -> list[Singularity]:
    return [] if exponent == 0.0 else [Singularity(n, "left", exponent)]


def frac_integral(f: SampledFunction, alpha: float) -> SampledFunction:
    """Right-sided Riemann-Liouville integral I^alpha_{T-} f at the grid nodes.

    (I f)(t) = 1/Gamma(alpha) int_t^T (s-t)^(alpha-1) f(s) ds, exact for
    piecewise-linear f. A power behaviour declared by f at T is integrated in
    closed form. The output carries the (T-t)^alpha cusp at T as a singularity.
    """
    alpha = _check_alpha(alpha)
    vals, left, end = _split_endpoint(f)
    out = _integral_array(vals, left, f.grid.h, alpha)
    sing = []
    if np.any(left[-1] != 0):
        sing += _endpoint_singularity(f.grid.n, alpha)
    if end is not None:
        e, c_t = end
        out += _endpoint_term(f.grid, e, c_t, alpha)
        sing += _endpoint_singularity(f.grid.n, e + alpha)
    return SampledFunction(f.grid, out, singularities=tuple(sing))


def _derivative_array(values, left, h, alpha):
    """D^alpha_{T-} at nodes 0..n-1 (row n left to the caller)."""
    n = values.shape[0] - 1
    L, R = values[:-1], left[1:]
    wl, wr = power_cell_moments(-alpha - 1.0, np.arange(n))
    wl[0] = wr[0] = 0.0
    tail = _correlate(L, wl) + _correlate(R, wr)
    out = np.empty_like(values)
    # f(t) terms collapse to f_j h^-alpha; the first cell is integrated after subtracting f(t)
    out[:n] = (L + alpha / (1 - alpha) * (L - R) - alpha * tail) * h ** (-alpha) / special.gamma(1 - alpha)
    return out


def _left_singularities(f: SampledFunction, exponent: float, endpoint_value) -> list[Singularity]:
    sing = [Singularity(int(j), "left", exponent) for j in f.jump_nodes]
    if np.any(endpoint_value != 0) and f.grid.n not in f.jump_nodes:
        sing.append(Singularity(f.grid.n, "left", exponent))
    return sing


def _with_left_placeholders(out: np.ndarray, nodes) -> np.ndarray:
    """Left limits equal to values except at ``nodes``, where they are extrapolated."""
    left = out.copy()
    for j in nodes:
        if j >= 3:
            left[j] = 2 * out[j - 1] - out[j - 2]
        elif j >= 1:
            left[j] = out[j - 1]
    return left


def frac_derivative(f: SampledFunction, alpha: float) -> SampledFunction:
    """Right-sided Marchaud derivative D^alpha_{T-} f at the grid nodes.

    (D f)(t) = 1/Gamma(1-alpha) [f(t)/(T-t)^alpha + alpha int_t^T (f(t)-f(s))/(s-t)^(alpha+1) ds].
    The hypersingular integral is split off on the first cell, where f(t)-f(s) is
    linear and the weight integrates in closed form. A power behaviour declared
    by f at T (for instance the cusp of an I^alpha output) is differentiated in
    closed form. The value at T is the linear extrapolation of the interior
    nodes. Jumps of f, and f(T-) != 0, produce (t_j - t)^(-alpha) blow-ups that
    are recorded as singularities.
    """
    alpha = _check_alpha(alpha)
    n = f.grid.n
    vals, left, end = _split_endpoint(f)
    out = _derivative_array(vals, left, f.grid.h, alpha)
    sing = [Singularity(int(j), "left", -alpha) for j in f.jump_nodes if j < n]
    if np.any(left[-1] != 0):
        sing += _endpoint_singularity(n, -alpha)
    if end is not None:
        e, c_t = end
        if e - alpha <= -1.0:
            raise ValueError("input is too singular at T for this derivative order")
        out += _endpoint_term(f.grid, e, c_t, -alpha)
        sing += _endpoint_singularity(n, e - alpha)
    _extrapolate_end(out, n, -1)
    left_out = _with_left_placeholders(out, [s.node for s in sing if s.exponent < 0])
    return SampledFunction(f.grid, out, left_out, tuple(sing))


def _plus_derivative(f: SampledFunction, alpha: float) -> SampledFunction:
    """Left-sided Marchaud derivative of the zero extension, by direct convolution."""
    n, h = f.grid.n, f.grid.h
    # cell k-1 seen from node k: value at the near end is left_limits[k], far end values[k-1]
    near, far = f.left_limits[1:], f.values[:-1]
    wn, wf = power_cell_moments(-alpha - 1.0, np.arange(n))
    wn[0] = wf[0] = 0.0
    tail = _convolve(far, wf) + _convolve(near, wn)  # tail[k-1] collects cells k-1-d
    out = np.empty_like(f.values)
    g = f.left_limits[1:]
    out[1:] = (g + alpha / (1 - alpha) * (g - far) - alpha * tail) * h ** (-alpha) / special.gamma(1 - alpha)
    _extrapolate_end(out, 0, 1)
    # jumps give right-sided blow-ups; the computed numbers are left limits
    sing = [Singularity(int(j), "right", -alpha) for j in f.jump_nodes]
    if np.any(f.values[0] != 0):
        sing.append(_origin_singularity(-alpha))
    left = out.copy()
    vals = out.copy()
    for s in sing:
        j = s.node
        if j <= n - 3:
            vals[j] = 2 * out[j + 1] - out[j + 2]
        elif j < n:
            vals[j] = out[j + 1]
    return SampledFunction(f.grid, vals, left, tuple(sing))


def weyl_marchaud(f: SampledFunction, alpha: float, side: Side | str) -> SampledFunction:
    """Weyl-Marchaud derivative D_-^alpha (looks forward) or D_+^alpha (looks back).

    D_{+/-} g(r) = alpha/Gamma(1-alpha) int_0^inf (g(r) - g(r -/+ s)) / s^(1+alpha) ds,
    with f extended by zero outside [0, T]. The part of the outer integral that
    leaves [0, T] is integrated analytically. Both sides are computed by their own
    discrete sums (correlation for minus, convolution for plus).
    """
    alpha = _check_alpha(alpha)
    side = Side(side)
    if side is Side.MINUS:
        return frac_derivative(f, alpha)
    return _plus_derivative(f, alpha)


@lru_cache(maxsize=64)
def _origin_weights(beta: float, c: float, K: int, q: int = 24):
    """Interpolation error of x^c on the first K cells, weighted by (x-j)^beta.

    A[j,k], B[j,k] = int_k^{k+1} (x-j)^beta ((1-y)|y) (lin(x^c) - x^c) dx for
    1 <= j <= k < K, split by the hat function of the left/right cell end.
    """
    A = np.zeros((K, K))
    B = np.zeros((K, K))
    gx, gw = _gauss_legendre01(q)
    jx, jw = special.roots_jacobi(q, 0.0, beta + 1.0)
    jx = 0.5 * (jx + 1.0)
    jw = jw / 2.0 ** (beta + 2.0)
    for j in range(1, K):
        x = j + jx
        A[j, j] = np.sum(jw * (1 - jx) * (j**c - x**c) / jx)
        B[j, j] = np.sum(jw * ((j + 1) ** c - x**c))
        k = np.arange(j + 1, K)[:, None]
        x = k + gx[None, :]
        w = gw[None, :] * (x - j) ** beta
        A[j, j + 1 :] = np.sum(w * (1 - gx) * (k**c - x**c), axis=1)
        B[j, j + 1 :] = np.sum(w * gx * ((k + 1) ** c - x**c), axis=1)
    return A, B


def _weighted_input(f: SampledFunction, c: float):
    """Node data of p^c f with the value at t = 0 set to 0."""
    t = f.grid.nodes
    w = np.zeros_like(t)
    w[1:] = t[1:] ** c
    return f.values * w[:, None], f.left_limits * w[:, None]


def _origin_correction(f: SampledFunction, beta: float, c: float) -> np.ndarray:
    """int (p^c f - lin(p^c f)) (s - t_j)^beta ds over the first cells, rows j < K."""
    K = min(ORIGIN_CELLS, f.grid.n)
    A, B = _origin_weights(float(beta), float(c), K)
    corr = -(A @ f.values[:K] + B @ f.left_limits[1 : K + 1])
    return corr * f.grid.h ** (beta + 1.0 + c)


def kstar(f: SampledFunction, H) -> SampledFunction:
    """K* f via fractional operators.

    H > 1/2: b_H Gamma(H-1/2) t^(1/2-H) I^(H-1/2)_{T-}(p^(H-1/2) f)(t).
    H < 1/2: b_H Gamma(H+1/2) t^(1/2-H) D^(1/2-H)_{T-}(p^(H-1/2) f)(t).
    Here p(s) = s. The factor p^(H-1/2) is integrated exactly on the cells next
    to t = 0 and interpolated elsewhere. The value at t = 0 (and at T for
    H < 1/2) is extrapolated; the blow-ups there are recorded as singularities.
    """
    H = as_hurst(H)
    a = H.value - 0.5
    grid = f.grid
    n, h, t = grid.n, grid.h, grid.nodes
    bh = b_h_constant(H)
    vals, left = _weighted_input(f, a)
    K = min(ORIGIN_CELLS, n)
    tw = np.ones_like(t)
    tw[1:] = t[1:] ** (-a)
    if H.regime() is Regime.HIGH:
        out = _integral_array(vals, left, h, a)
        out[:K] += _origin_correction(f, a - 1.0, a) / special.gamma(a)
        out *= bh * special.gamma(a) * tw[:, None]
        _extrapolate_end(out, 0, 1)
        return SampledFunction(grid, out, singularities=(_origin_singularity(-a),))

    alpha = -a
    out = _derivative_array(vals, left, h, alpha)
    out[:K] -= alpha * _origin_correction(f, -alpha - 1.0, a) / special.gamma(1 - alpha)
    out[:n] *= bh * special.gamma(H.value + 0.5) * tw[:n, None]
    _extrapolate_end(out, n, -1)
    _extrapolate_end(out, 0, 1)
    sing = _left_singularities(f, a, left[-1])
    sing.append(_origin_singularity(a))
    left_out = _with_left_placeholders(out, [s.node for s in sing if s.side == "left"])
    return SampledFunction(grid, out, left_out, tuple(sing))


def _cell_eval(f: SampledFunction, k: np.ndarray, y: np.ndarray) -> np.ndarray:
    """f on cell k at local coordinate y (broadcast), shape (..., m)."""
    return f.cell_left[k] * (1 - y)[..., None] + f.cell_right[k] * y[..., None]


def kstar_direct_form(f: SampledFunction, H, q: int = 8) -> SampledFunction:
    """K* f from the kernel derivative, node by node.

    H > 1/2: (K* f)(t) = int_t^T f(s) d kappa/ds(s, t) ds.
    H < 1/2: (K* f)(t) = f(t) kappa(T, t) + int_t^T (f(s) - f(t)) d kappa/ds(s, t) ds.
    d kappa/ds is used in closed form; each cell is integrated by Gauss rules,
    Gauss-Jacobi on the cell touching t. Used as an independent check of
    :func:`kstar`.
    """
    H = as_hurst(H)
    a = H.value - 0.5
    grid = f.grid
    n, h, T = grid.n, grid.h, grid.T
    bh = b_h_constant(H)
    gx, gw = _gauss_legendre01(q)
    beta_first = a - 1.0 if a > 0 else a
    jx, jw = special.roots_jacobi(q, 0.0, beta_first)
    jx = 0.5 * (jx + 1.0)
    jw = jw / 2.0 ** (beta_first + 1.0)
    out = np.zeros((n + 1, f.m))
    for j in range(1, n):
        k = np.arange(j + 1, n)[:, None]
        x = k + gx[None, :]
        w = gw[None, :] * (x - j) ** (a - 1.0) * x**a
        xj = j + jx
        if a > 0:
            first = np.sum((jw * xj**a)[:, None] * _cell_eval(f, np.full(q, j), jx), axis=0)
            rest = np.einsum("kq,kqm->m", w, _cell_eval(f, np.broadcast_to(k, x.shape), np.broadcast_to(gx, x.shape)))
            out[j] = bh * j ** (-a) * h**a * (first + rest)
        else:
            fj = f.values[j]
            slope = f.cell_right[j] - fj
            first = np.sum(jw * xj**a) * slope
            diff = _cell_eval(f, np.broadcast_to(k, x.shape), np.broadcast_to(gx, x.shape)) - fj
            rest = np.einsum("kq,kqm->m", w, diff)
            kap = kernel_kappa(T, grid.nodes[j], H)
            out[j] = fj * kap + bh * a * j ** (-a) * h**a * (first + rest)
    _extrapolate_end(out, 0, 1)
    if a > 0:
        # the integral over [T, T] vanishes
        return SampledFunction(grid, out, singularities=(_origin_singularity(-a),))
    _extrapolate_end(out, n, -1)
    sing = _left_singularities(f, a, f.left_limits[-1])
    sing.append(_origin_singularity(a))
    left = _with_left_placeholders(out, [s.node for s in sing if s.side == "left"])
    return SampledFunction(grid, out, left, tuple(sing))


def g_f_form(f: SampledFunction, H, q: int = 8) -> SampledFunction:
    """G_f(s) = b_H (f(s)/(T-s)^(1/2-H) + (1/2-H) s^(1/2-H) int_s^T (g(s) - g(t))/(t-s)^(3/2-H) dt).

    g(t) = t^(H-1/2) f(t). Low regime only. The inner integral is computed cell by
    cell with g evaluated exactly at the quadrature points; the cell touching s
    uses a Gauss-Jacobi rule for the (t-s)^(1/2-H) weight left after dividing
    g(s) - g(t) by t - s.
    """
    H = as_hurst(H)
    if H.regime() is not Regime.LOW:
        raise ValueError("G_f is defined for H < 1/2")
    alpha = 0.5 - H.value
    grid = f.grid
    n, h, t = grid.n, grid.h, grid.nodes
    bh = b_h_constant(H)
    gx, gw = _gauss_legendre01(q)
    jx, jw = special.roots_jacobi(q, 0.0, -alpha)
    jx = 0.5 * (jx + 1.0)
    jw = jw / 2.0 ** (1.0 - alpha)
    out = np.zeros((n + 1, f.m))
    for j in range(1, n):
        # work in units of h: g(x) = (x h)^(-alpha) f
        fj = f.values[j]
        gj = j ** (-alpha) * fj
        xj = j + jx
        gfirst = xj[:, None] ** (-alpha) * _cell_eval(f, np.full(q, j), jx)
        first = np.sum(jw[:, None] * (gj - gfirst) / jx[:, None], axis=0)
        k = np.arange(j + 1, n)[:, None]
        x = k + gx[None, :]
        vals = _cell_eval(f, np.broadcast_to(k, x.shape), np.broadcast_to(gx, x.shape))
        grest = x[..., None] ** (-alpha) * vals
        w = gw[None, :] * (x - j) ** (-1.0 - alpha)
        rest = np.einsum("kq,kqm->m", w, gj - grest)
        inner = (first + rest) * h ** (-2 * alpha)
        out[j] = bh * (fj / (grid.T - t[j]) ** alpha + alpha * t[j] ** alpha * inner)
    _extrapolate_end(out, 0, 1)
    _extrapolate_end(out, n, -1)
    sing = _left_singularities(f, -alpha, f.left_limits[-1])
    sing.append(_origin_singularity(-alpha))
    left = _with_left_placeholders(out, [s.node for s in sing if s.side == "left"])
    return SampledFunction(grid, out, left, tuple(sing))


def _rectangle_covariance(a1, a2, b1, b2, H: float) -> np.ndarray:
    """<1_[a1,a2), 1_[b1,b2)>_M written through R on the corners."""

    def R(s, t):
        return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(s - t) ** (2 * H))

    return R(a2, b2) - R(a2, b1) - R(a1, b2) + R(a1, b1)


def m_inner_simple(f: SimpleFunction, g: SimpleFunction, H) -> float:
    """<f, g>_M for step functions as the exact double sum over pieces."""
    H = as_hurst(H).value
    if f.m != g.m:
        raise ValueError("step functions have different dimensions")
    bf, bg = f.breakpoints, g.breakpoints
    gram = f.pieces @ g.pieces.T
    cov = _rectangle_covariance(bf[:-1, None], bf[1:, None], bg[None, :-1], bg[None, 1:], H)
    return float(np.sum(gram * cov))


def m_norm_simple(f: SimpleFunction, H) -> float:
    return float(np.sqrt(max(m_inner_simple(f, f, H), 0.0)))


def m_inner(f: SampledFunction, g: SampledFunction, H) -> float:
    """<f, g>_M = <K* f, K* g>_{L2}."""
    return l2_inner(kstar(f, H), kstar(g, H))


def m_norm(f: SampledFunction, H) -> float:
    return l2_norm(kstar(f, H))


@lru_cache(maxsize=64)
def _abs_weights(beta: float, n: int, q: int = 20):
    """W_pq(d) = int_0^1 int_0^1 phi_p(x) phi_q(y) |d + y - x|^beta dx dy, d = -(n-1)..n-1.

    phi_0 = 1 - x, phi_1 = x. With u = y - x the double integral becomes
    int_{-1}^{1} K_pq(u) |d + u|^beta du with K_pq piecewise cubic, so a Gauss-Jacobi
    rule is exact on the halves where |d + u| vanishes at an end and a Gauss-Legendre
    rule is used elsewhere.
    """
    d = np.arange(-(n - 1), n, dtype=float)
    ex, ew = _gauss_legendre01(2)
    phi = (lambda x: 1 - x, lambda x: x)

    def K(p, qq, u):
        # int over x in [max(0,-u), min(1,1-u)] of phi_p(x) phi_q(x+u): degree 2, 2-point Gauss is exact
        lo = np.maximum(0.0, -u)
        hi = np.minimum(1.0, 1.0 - u)
        x = lo[..., None] + (hi - lo)[..., None] * ex
        return (hi - lo) * np.sum(ew * phi[p](x) * phi[qq](x + u[..., None]), axis=-1)

    lx, lw = _gauss_legendre01(q)
    jx, jw = special.roots_jacobi(q, 0.0, beta)
    jx = 0.5 * (jx + 1.0)
    jw = jw / 2.0 ** (beta + 1.0)
    W = np.zeros((2, 2, d.size))
    for lo_u in (-1.0, 0.0):
        for i, dd in enumerate(d):
            a, b = dd + lo_u, dd + lo_u + 1.0  # range of d + u
            if a == 0.0:
                z = jx
                u = z - dd
                wts = jw
            elif b == 0.0:
                z = -jx
                u = z - dd
                wts = jw
            else:
                u = lo_u + lx
                wts = lw * np.abs(dd + u) ** beta
            for p in range(2):
                for qq in range(2):
                    W[p, qq, i] += np.sum(wts * K(p, qq, u))
    return d, W


def _abs_bilinear(a: np.ndarray, al: np.ndarray, b: np.ndarray, bl: np.ndarray, h: float, H: float) -> float:
    """H(2H-1) int int a(s) b(t) |s-t|^(2H-2) ds dt for column-stacked DPL data."""
    n = a.shape[0] - 1
    beta = 2 * H - 2
    _, W = _abs_weights(beta, n)
    ac = (a[:-1], al[1:])
    bc = (b[:-1], bl[1:])
    total = 0.0
    for p in range(2):
        for qq in range(2):
            # sum_i sum_k ac[p][i] W_pq(k - i) bc[qq][k]
            conv = signal.fftconvolve(bc[qq], W[p, qq][::-1, None], axes=0)[n - 1 : 2 * n - 1]
            total += float(np.sum(ac[p] * conv))
    return H * (2 * H - 1) * h ** (beta + 2) * total


def m_inner_high(f: SampledFunction, g: SampledFunction, H) -> float:
    """H(2H-1) int int [f(s), g(t)] |s-t|^(2H-2) ds dt by product integration."""
    H = as_hurst(H)
    if H.regime() is not Regime.HIGH:
        raise ValueError("the |M| pairing is defined for H > 1/2")
    if f.grid != g.grid or f.m != g.m:
        raise ValueError("functions must share grid and dimension")
    return _abs_bilinear(f.values, f.left_limits, g.values, g.left_limits, f.grid.h, H.value)


def abs_m_norm(f: SampledFunction, H) -> float:
    """|M| norm: square root of H(2H-1) int int |f(s)| |f(t)| |s-t|^(2H-2) ds dt."""
    H = as_hurst(H)
    if H.regime() is not Regime.HIGH:
        raise ValueError("the |M| norm is defined for H > 1/2")
    nf = f.pointwise_norm()
    val = _abs_bilinear(nf.values, nf.left_limits, nf.values, nf.left_limits, f.grid.h, H.value)
    return float(np.sqrt(max(val, 0.0)))


def restrict(f: SampledFunction, t: float, reflect: bool = False) -> SampledFunction:
    """1_[0,t] f, or 1_[0,t] f(t - .) when ``reflect``, on the original grid."""
    grid = f.grid
    jt = grid.index_of(t)
    vals = np.zeros_like(f.values)
    left = np.zeros_like(f.left_limits)
    if not reflect:
        vals[:jt] = f.values[:jt]
        left[: jt + 1] = f.left_limits[: jt + 1]
        if jt == grid.n:
            vals[jt] = f.values[jt]
        sing = tuple(s for s in f.singularities if s.node < jt or (s.node == jt and s.side == "left"))
        return SampledFunction(grid, vals, left, sing)
    # g(s) = f(t - s): right limits of g come from left limits of f and vice versa
    idx = jt - np.arange(jt + 1)
    vals[:jt] = f.left_limits[idx[:jt]]
    vals[0] = f.left_limits[jt] if jt > 0 else f.values[0]
    left[1 : jt + 1] = f.values[idx[1:]]
    if jt == grid.n:
        vals[jt] = f.values[0]
    flip = {"left": "right", "right": "left"}
    sing = tuple(
        replace(s, node=jt - s.node, side=flip[s.side])
        for s in f.singularities
        if s.node < jt or (s.node == jt and s.side == "left")
    )
    return SampledFunction(grid, vals, left, sing)


def h_alpha_norm(f: SampledFunction, alpha: float) -> float:
    """Norm of the fractional Sobolev-type space I^alpha_{T-}(L2): ||D^alpha_{T-} f||_{L2}."""
    return l2_norm(frac_derivative(f, alpha))
