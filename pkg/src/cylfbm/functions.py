"""Grid functions: sampled piecewise-linear functions with jumps, and step functions.

A :class:`SampledFunction` is the discontinuous piecewise-linear interpolant of its
node data. ``values[j]`` is the right limit at node j and ``left_limits[j]`` the left
limit, so a jump at a node is represented exactly. Cell k = [t_k, t_{k+1}] runs
linearly from ``values[k]`` to ``left_limits[k+1]``.

Outputs of the fractional operators may blow up like a power of the distance to
a node. Such behaviour is recorded as a :class:`Singularity` and the L2 quadrature
in :func:`l2_inner` integrates the power weight exactly instead of sampling it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fbm import TimeGrid

__all__ = [
    "Singularity",
    "SampledFunction",
    "SimpleFunction",
    "power_cell_moments",
    "power_fit",
    "l2_inner",
    "l2_norm",
]


@dataclass(frozen=True)
class Singularity:
    """f(s) ~ c |s - t_node|^exponent + regular, as s approaches the node from ``side``.

    Negative exponents are integrable blow-ups; positive non-integer exponents
    mark cusps that linear interpolation resolves poorly. ``companions`` lists
    further powers present in the expansion at the same node; they are fitted
    together with the leading one.
    """

    node: int
    side: str
    exponent: float
    companions: tuple[float, ...] = ()

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        comp = tuple(sorted({float(e) for e in self.companions} - {float(self.exponent)}))
        for e in (self.exponent,) + comp:
            if e <= -1.0:
                raise ValueError("only integrable singularities are supported")
            if e == 0.0:
                raise ValueError("exponent 0 is not a singularity")
        object.__setattr__(self, "companions", comp)

    @property
    def exponents(self) -> tuple[float, ...]:
        return (self.exponent,) + self.companions


def _merge_singularities(items, combine) -> tuple[Singularity, ...]:
    lead: dict[tuple[int, str], float] = {}
    every: dict[tuple[int, str], set] = {}
    for s in items:
        key = (s.node, s.side)
        lead[key] = combine(lead[key], s.exponent) if key in lead else s.exponent
        every.setdefault(key, set()).update(s.exponents)
    return tuple(
        Singularity(k[0], k[1], e, tuple(every[k] - {e}))
        for k, e in sorted(lead.items())
        if e != 0.0
    )


@dataclass(frozen=True)
class SampledFunction:
    """Values of a function [0,T] -> R^m at the nodes of a TimeGrid.

    Parameters
    ----------
    grid : TimeGrid
    values : array_like, shape (n+1,) or (n+1, m)
        Right limits at the nodes. One-dimensional input is treated as m = 1.
    left_limits : array_like, optional
        Left limits at the nodes (row 0 is ignored). Defaults to ``values``,
        i.e. a continuous piecewise-linear function.
    singularities : tuple of Singularity
        Nodes where the function has an integrable power blow-up. The stored
        value on the singular side is a finite placeholder.
    """

    grid: TimeGrid
    values: np.ndarray
    left_limits: np.ndarray | None = None
    singularities: tuple[Singularity, ...] = field(default=())

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n + 1 or v.shape[1] < 1:
            raise ValueError(f"values must have {self.grid.n + 1} rows and at least one column")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if self.left_limits is None:
            left = v.copy()
        else:
            left = np.array(self.left_limits, dtype=float).reshape(v.shape)
            left[0] = v[0]
            if not np.all(np.isfinite(left)):
                raise ValueError("left limits must be finite")
        v.setflags(write=False)
        left.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "left_limits", left)
        object.__setattr__(self, "singularities", _merge_singularities(self.singularities, min))

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> "SampledFunction":
        """Sample a continuous function; ``fn`` maps an array of times to (n+1,) or (n+1, m)."""
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def zeros(cls, grid: TimeGrid, m: int = 1) -> "SampledFunction":
        return cls(grid, np.zeros((grid.n + 1, m)))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def cell_left(self) -> np.ndarray:
        """Value at the left end of each cell, shape (n, m)."""
        return self.values[:-1]

    @property
    def cell_right(self) -> np.ndarray:
        """Value at the right end of each cell, shape (n, m)."""
        return self.left_limits[1:]

    @property
    def jump_nodes(self) -> np.ndarray:
        jumps = np.any(self.values[1:] != self.left_limits[1:], axis=1)
        return np.flatnonzero(jumps) + 1

    def column(self, k: int) -> "SampledFunction":
        return SampledFunction(self.grid, self.values[:, [k]], self.left_limits[:, [k]], self.singularities)

    def __call__(self, t) -> np.ndarray:
        """Evaluate the right-continuous interpolant at times ``t``; returns (len(t), m)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = t / self.grid.h
        k = np.clip(np.floor(x).astype(int), 0, self.grid.n - 1)
        y = (x - k)[:, None]
        out = self.cell_left[k] * (1 - y) + self.cell_right[k] * y
        at_end = np.isclose(t, self.grid.T)
        out[at_end] = self.values[-1]
        return out

    def pointwise_norm(self) -> "SampledFunction":
        """Euclidean norm in R^m at each node, as a scalar sampled function."""
        return SampledFunction(
            self.grid,
            np.linalg.norm(self.values, axis=1),
            np.linalg.norm(self.left_limits, axis=1),
            self.singularities,
        )

    def _combine(self, other: "SampledFunction", sign: float) -> "SampledFunction":
        if other.grid != self.grid:
            raise ValueError("functions live on different grids")
        return SampledFunction(
            self.grid,
            self.values + sign * other.values,
            self.left_limits + sign * other.left_limits,
            self.singularities + other.singularities,
        )

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        return self._combine(other, 1.0)

    def __sub__(self, other: "SampledFunction") -> "SampledFunction":
        return self._combine(other, -1.0)

    def __mul__(self, c) -> "SampledFunction":
        """Scalar multiple, or right action of an (m, k) matrix on the values."""
        c = np.asarray(c, dtype=float)
        if c.ndim == 0:
            return replace(self, values=self.values * c, left_limits=self.left_limits * c)
        return replace(self, values=self.values @ c, left_limits=self.left_limits @ c)

    __rmul__ = __mul__

    def __neg__(self) -> "SampledFunction":
        return self * -1.0


@dataclass(frozen=True)
class SimpleFunction:
    """Step function sum_i x_i 1_[t_i, t_{i+1})(t) on [0, T].

    Parameters
    ----------
    breakpoints : array_like, shape (p+1,)
        0 = t_0 < ... < t_p = T.
    pieces : array_like, shape (p,) or (p, m)
        Value x_i on [t_i, t_{i+1}).
    """

    breakpoints: np.ndarray
    pieces: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        x = np.array(self.pieces, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if b.ndim != 1 or b.size < 2:
            raise ValueError("need at least two breakpoints")
        if b[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if x.shape[0] != b.size - 1:
            raise ValueError("need one piece per interval")
        if not np.all(np.isfinite(x)):
            raise ValueError("pieces must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "pieces", x)

    @classmethod
    def indicator(cls, a: float, b: float, T: float, x=1.0) -> "SimpleFunction":
        """x 1_[a, b) on [0, T]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pts = sorted({0.0, float(a), float(b), float(T)})
        pieces = [x if a <= lo < b else np.zeros_like(x) for lo in pts[:-1]]
        return cls(np.array(pts), np.array(pieces))

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def m(self) -> int:
        return self.pieces.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, len(self.pieces) - 1)
        return self.pieces[k]

    def to_sampled(self, grid: TimeGrid) -> SampledFunction:
        """Exact representation on ``grid``; breakpoints must be grid nodes."""
        if not np.isclose(grid.T, self.T):
            raise ValueError("grid horizon differs from the function's horizon")
        idx = np.array([grid.index_of(b) for b in self.breakpoints])
        vals = np.zeros((grid.n + 1, self.m))
        for i, x in enumerate(self.pieces):
            vals[idx[i] : idx[i + 1]] = x
        vals[-1] = self.pieces[-1]
        left = np.empty_like(vals)
        left[1:] = vals[:-1]
        left[0] = vals[0]
        return SampledFunction(grid, vals, left)


def _pow_diff(d: np.ndarray, g: float) -> np.ndarray:
    """(d+1)^g - d^g for d >= 0 without cancellation."""
    d = np.asarray(d, dtype=float)
    out = np.ones_like(d)
    pos = d > 0
    dp = d[pos]
    out[pos] = dp**g * np.expm1(g * np.log1p(1.0 / dp))
    return out


def power_cell_moments(beta: float, d) -> tuple[np.ndarray, np.ndarray]:
    """Exact weights of x^beta against the hat functions of the cell [d, d+1].

    Returns ``(wl, wr)`` with wl = int (1-y) x^beta dx and wr = int y x^beta dx,
    y = x - d, so that int_d^{d+1} x^beta (L(1-y) + R y) dx = wl L + wr R.
    """
    d = np.asarray(d, dtype=float)
    m0 = _pow_diff(d, beta + 1) / (beta + 1)
    m1 = _pow_diff(d, beta + 2) / (beta + 2) - d * m0
    return m0 - m1, m1


def _product_cells(fl, fr, gl, gr) -> np.ndarray:
    """Exact integral of sum_c f_c g_c over each unit cell for linear f, g."""
    return np.sum(fl * gl / 3 + (fl * gr + fr * gl) / 6 + fr * gr / 3, axis=1)


def _half_segments(nodes: list[int]) -> dict[tuple[int, str], np.ndarray]:
    """Cells next to each boundary node, ordered by distance from it.

    The segment between consecutive nodes a < b is split at its midpoint; the
    first half belongs to (a, "right"), the second to (b, "left").
    """
    halves = {}
    for a, b in zip(nodes[:-1], nodes[1:]):
        mid = (a + b + 1) // 2
        halves[(a, "right")] = np.arange(a, mid)
        halves[(b, "left")] = np.arange(b - 1, mid - 1, -1)
    return halves


def _oriented(left: np.ndarray, right: np.ndarray, cells: np.ndarray, side: str):
    """(near, far) cell-end values as seen from the node owning ``cells``."""
    if side == "right":
        return left[cells], right[cells]
    return right[cells], left[cells]


# companion powers closer than this to another fitted power (or to 0, 1) are dropped
_MIN_EXPONENT_GAP = 0.15


def _fit_exponents(exponents) -> list[float]:
    kept: list[float] = []
    for e in exponents:
        if all(abs(e - o) >= _MIN_EXPONENT_GAP for o in kept + [0.0, 1.0]) or not kept:
            kept.append(float(e))
    return kept


def power_fit(f: SampledFunction, node: int, side: str, exponent, npts: int | None = None):
    """Fit f ~ sum_i c_i d^(e_i) + r0 + r1 d on the nodes at distance d = 1..npts.

    Distances are in cells. ``exponent`` is a single power, giving ``(c, r0)``
    with c of shape (m,), or a sequence of powers, giving c of shape (p, m).
    With fewer available nodes the model is reduced to its leading terms.
    """
    single = np.ndim(exponent) == 0
    exps = [float(exponent)] if single else [float(e) for e in exponent]
    need = len(exps) + 2
    step = 1 if side == "right" else -1
    avail = node if side == "left" else f.grid.n - node
    npts = max(1, min(need if npts is None else npts, avail))
    d = np.arange(1, npts + 1, dtype=float)
    y = f.values[node + step * np.arange(1, npts + 1)]
    cols = [d**e for e in exps] + [np.ones_like(d), d]
    basis = np.stack(cols, axis=1)[:, :npts]
    coef = np.linalg.solve(basis, y)
    p = len(exps)
    c = np.zeros((p, f.m))
    c[: min(p, npts)] = coef[: min(p, npts)]
    r0 = coef[p] if npts > p else np.zeros(f.m)
    return (c[0], r0) if single else (c, r0)


def _split_singular(f: SampledFunction, halves):
    """Cell-end values of f minus its fitted power parts, and the parts themselves.

    Near a node with f ~ d^e the power part c d^e from :func:`power_fit` is
    removed on the owning half-segment.
    """
    cl = f.cell_left.copy()
    cr = f.cell_right.copy()
    parts = {}
    for s in f.singularities:
        key = (s.node, s.side)
        cells = halves.get(key)
        if cells is None or cells.size == 0:
            continue
        exps = _fit_exponents(s.exponents)
        c, r0 = power_fit(f, s.node, s.side, exps, min(len(exps) + 2, cells.size))
        dist = np.arange(cells.size, dtype=float)
        near_sub = np.zeros((cells.size, f.m))
        far_sub = np.zeros((cells.size, f.m))
        for e, ci in zip(exps, c):
            # row 0 (d = 0) is overwritten by r0 below
            with np.errstate(divide="ignore", invalid="ignore"):
                near_sub += ci[None, :] * dist[:, None] ** e
            far_sub += ci[None, :] * (dist + 1)[:, None] ** e
        near, far = _oriented(cl, cr, cells, s.side)
        near = near - near_sub
        far = far - far_sub
        near[0] = r0
        if s.side == "right":
            cl[cells], cr[cells] = near, far
        else:
            cr[cells], cl[cells] = near, far
        parts[key] = list(zip(exps, c))
    return cl, cr, parts


def l2_inner(f: SampledFunction, g: SampledFunction) -> float:
    """<f, g> in L2([0,T]; R^m).

    The product of the two linear interpolants is integrated exactly on each
    cell. Near a node where a factor behaves like c d^e, the power part is
    fitted, subtracted, and its products with the remainder and with other
    power parts at the same node are integrated in closed form.
    """
    if f.grid != g.grid:
        raise ValueError("functions live on different grids")
    if f.m != g.m:
        raise ValueError("functions have different dimensions")
    n, h = f.grid.n, f.grid.h
    if not f.singularities and not g.singularities:
        return float(h * np.sum(_product_cells(f.cell_left, f.cell_right, g.cell_left, g.cell_right)))
    nodes = sorted({0, n} | {s.node for s in f.singularities + g.singularities})
    halves = _half_segments(nodes)
    fl, fr, fparts = _split_singular(f, halves)
    gl, gr, gparts = _split_singular(g, halves)
    total = float(np.sum(_product_cells(fl, fr, gl, gr)))
    for parts, ol, orr in ((fparts, gl, gr), (gparts, fl, fr)):
        for (node, side), terms in parts.items():
            cells = halves[(node, side)]
            near, far = _oriented(ol, orr, cells, side)
            for e, c in terms:
                wl, wr = power_cell_moments(e, np.arange(cells.size))
                total += float(np.sum(c * (wl @ near + wr @ far)))
    for key in fparts.keys() & gparts.keys():
        for e1, c1 in fparts[key]:
            for e2, c2 in gparts[key]:
                e = e1 + e2
                if e <= -1.0:
                    raise ValueError(f"product is not integrable at node {key[0]}")
                total += float(np.dot(c1, c2)) * halves[key].size ** (e + 1) / (e + 1)
    return float(h * total)


def l2_norm(f: SampledFunction) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))
