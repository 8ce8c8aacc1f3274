"""Cylindrical fractional Brownian motion through its series representation.

A cylindrical fBm in U is B(t)u* = sum_k <i e_k, u*> b_k(t) with an embedding
i: X -> U, an orthonormal basis (e_k) of X and independent scalar fBms b_k.
Everything is finite dimensional here: U is represented by m coordinates with
a diagonal pairing <u, v>_U = sum_i w_i u_i v_i, and the series is truncated at
N terms. The embedding is stored as the m x N matrix whose columns are i e_k.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .fbm import FbmPathSet, Hurst, TimeGrid, as_hurst, sample_paths
from .series import SeriesVerdict, TailReport, tail_verdict

__all__ = [
    "EmbeddingKind",
    "Embedding",
    "CylFbm",
    "GenuineReport",
    "apply",
    "covariance_operator",
    "is_genuine",
    "power_weights",
    "sine_basis",
    "spatial_grid",
]


class EmbeddingKind(enum.Enum):
    DIAGONAL = "diagonal"
    WEIGHTED_BASIS = "weighted_basis"
    SHEET = "sheet"


def power_weights(N: int, p: float, scale: float = 1.0) -> np.ndarray:
    """q_k = scale * k^p for k = 1..N."""
    return scale * np.arange(1, N + 1, dtype=float) ** p


def spatial_grid(m: int) -> tuple[np.ndarray, np.ndarray]:
    """m equispaced points on [0, 1] and their trapezoid weights."""
    if m < 2:
        raise ValueError("spatial grid needs at least two points")
    x = np.linspace(0.0, 1.0, m)
    w = np.full(m, 1.0 / (m - 1))
    w[[0, -1]] *= 0.5
    return x, w


def sine_basis(k, x) -> np.ndarray:
    """sqrt(2) sin(k pi x): orthonormal in L2(0,1), and exactly so under the trapezoid rule for k < m-1."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(np.asarray(x, dtype=float), k))


@dataclass(frozen=True)
class Embedding:
    """Truncated embedding i: X -> U in coordinates.

    Attributes
    ----------
    kind : EmbeddingKind
    columns : ndarray, shape (m, N)
        Column k is i e_{k+1} in U-coordinates.
    pairing : ndarray, shape (m,)
        Quadrature weights of the U pairing (ones for the diagonal kind).
    weights : ndarray or None
        The weights q_k for the diagonal and sheet kinds.
    points : ndarray or None
        Spatial grid for the discretized function-space kinds.
    """

    kind: EmbeddingKind
    columns: np.ndarray
    pairing: np.ndarray
    weights: np.ndarray | None = None
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.array(self.columns, dtype=float)
        w = np.array(self.pairing, dtype=float)
        if c.ndim != 2 or w.shape != (c.shape[0],):
            raise ValueError("columns must be (m, N) and pairing (m,)")
        if not np.all(np.isfinite(c)):
            raise ValueError("embedding entries must be finite")
        if np.any(w <= 0):
            raise ValueError("pairing weights must be positive")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "columns", c)
        object.__setattr__(self, "pairing", w)

    @classmethod
    def diagonal(cls, q) -> "Embedding":
        """i u = sum_k q_k <e_k, u> e_k with U = X = R^N."""
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise ValueError("weights must be a finite sequence")
        return cls(EmbeddingKind.DIAGONAL, np.diag(q), np.ones(q.size), q)

    @classmethod
    def weighted_basis(cls, tau, N: int, m: int, basis=sine_basis) -> "Embedding":
        """i e_k = tau_k e_k on an m-point grid of [0, 1].

        ``tau`` is either an (m, N) array of values tau_k(x_i) or a callable
        ``tau(k, x)`` returning tau_k at the points ``x``.
        """
        x, w = spatial_grid(m)
        k = np.arange(1, N + 1)
        if callable(tau):
            t = np.column_stack([np.broadcast_to(tau(kk, x), x.shape) for kk in k])
        else:
            t = np.asarray(tau, dtype=float)
            if t.shape != (m, N):
                raise ValueError(f"tau values must have shape ({m}, {N})")
        return cls(EmbeddingKind.WEIGHTED_BASIS, t * basis(k, x), w, None, x)

    @classmethod
    def sheet(cls, q, sets, m: int, basis=sine_basis) -> "Embedding":
        """i e_k = q_k 1_{A_k} e_k on an m-point grid of [0, 1].

        ``sets`` lists the A_k as intervals (a, b), read as [a, b), or as boolean
        masks over the grid points.
        """
        q = np.asarray(q, dtype=float)
        x, w = spatial_grid(m)
        if len(sets) != q.size:
            raise ValueError("need one set per weight")
        masks = []
        for A in sets:
            A = np.asarray(A)
            if A.dtype == bool:
                if A.shape != x.shape:
                    raise ValueError("mask does not match the spatial grid")
                masks.append(A)
            else:
                a, b = A
                masks.append((x >= a) & (x < b))
        ind = np.column_stack(masks).astype(float)
        cols = q * ind * basis(np.arange(1, q.size + 1), x)
        return cls(EmbeddingKind.SHEET, cols, w, q, x)

    @property
    def m(self) -> int:
        return self.columns.shape[0]

    @property
    def N(self) -> int:
        return self.columns.shape[1]

    def coefficients(self, u_star) -> np.ndarray:
        """<i e_k, u*>_U for k = 1..N; ``u_star`` is (m,) or (m, r)."""
        u = np.asarray(u_star, dtype=float)
        if u.shape[0] != self.m:
            raise ValueError(f"functional must have {self.m} coordinates")
        return self.columns.T @ (self.pairing[:, None] * u if u.ndim == 2 else self.pairing * u)

    def pair(self, u, v) -> float:
        return float(np.sum(self.pairing * np.asarray(u, dtype=float) * np.asarray(v, dtype=float)))

    def q_form(self, u_star, v_star) -> float:
        """<Q u*, v*> = sum_k <i e_k, u*><i e_k, v*>."""
        return float(self.coefficients(u_star) @ self.coefficients(v_star))

    def norms_sq(self) -> np.ndarray:
        """||i e_k||_U^2 for k = 1..N."""
        return self.pairing @ self.columns**2

    def rotated(self, O) -> "Embedding":
        """Embedding seen through the rotated basis f_k = sum_l O_kl e_l."""
        O = np.asarray(O, dtype=float)
        if O.shape != (self.N, self.N):
            raise ValueError("rotation must be N x N")
        return Embedding(self.kind, self.columns @ O.T, self.pairing, None, self.points)

    def truncated(self, N: int) -> "Embedding":
        if not 1 <= N <= self.N:
            raise ValueError("truncation out of range")
        w = None if self.weights is None else self.weights[:N]
        cols = self.columns[:N, :N] if self.kind is EmbeddingKind.DIAGONAL else self.columns[:, :N]
        pairing = self.pairing[:N] if self.kind is EmbeddingKind.DIAGONAL else self.pairing
        return Embedding(self.kind, cols, pairing, w, self.points)


def covariance_operator(embedding: Embedding) -> np.ndarray:
    """Truncated Q = i i* as the m x m matrix sum_k (i e_k)(i e_k)^T.

    In coordinates <Q u*, v*> = u*^T W Q W v* with W the pairing weights.
    """
    C = embedding.columns
    return C @ C.T


@dataclass
class CylFbm:
    """Truncated cylindrical fBm with independent component fBms b_1..b_N.

    Component k is drawn from its own family of RNG streams, so the components
    are independent and each one is reproducible on its own. Components are
    sampled on first use and cached unless ``cache`` is false.
    """

    embedding: Embedding
    hurst: Hurst
    grid: TimeGrid
    n_paths: int
    seed: int
    cache: bool = True
    _components: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.hurst = as_hurst(self.hurst)
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def N(self) -> int:
        return self.embedding.N

    def component(self, k: int) -> FbmPathSet:
        """Paths of b_{k+1} (zero-based index k)."""
        if not 0 <= k < self.N:
            raise IndexError("component index out of range")
        if k in self._components:
            return self._components[k]
        paths = sample_paths(self.grid, self.hurst, self.n_paths, self.seed, stream=(k,))
        if self.cache:
            self._components[k] = paths
        return paths

    @property
    def components(self) -> list[FbmPathSet]:
        return [self.component(k) for k in range(self.N)]


def apply(B: CylFbm, t: float, u_star) -> np.ndarray:
    """B(t)u* = sum_{k<=N} <i e_k, u*> b_k(t) per path.

    ``u_star`` of shape (m,) gives (n_paths,); shape (m, r) gives (n_paths, r).
    """
    j = B.grid.index_of(t)
    coef = B.embedding.coefficients(u_star)
    out = np.zeros((B.n_paths,) + coef.shape[1:])
    active = np.any(coef.reshape(coef.shape[0], -1) != 0, axis=1)
    for k in np.flatnonzero(active):
        out += np.multiply.outer(B.component(int(k)).paths[:, j], coef[k])
    return out


_GENUINE_LABELS = {
    SeriesVerdict.CONVERGES: "genuine",
    SeriesVerdict.DIVERGES: "cylindrical-only",
    SeriesVerdict.INCONCLUSIVE: "inconclusive",
}


@dataclass
class GenuineReport:
    verdict: str
    tail: TailReport


def is_genuine(embedding: Embedding, N: int | None = None, tail_rule: float | None = None) -> GenuineReport:
    """Decide whether the truncated embedding is Hilbert-Schmidt, i.e. sum_k ||i e_k||^2 < inf.

    Parameters
    ----------
    embedding : Embedding
    N : int, optional
        Number of terms used; defaults to all stored columns.
    tail_rule : float, optional
        Declared decay exponent p of ||i e_k||^2 ~ C k^(-p). A declared exponent
        is classified exactly (p > 1 converges). Without it the exponent is
        fitted and values within the band around 1 are inconclusive.
    """
    terms = embedding.norms_sq()[: N or embedding.N]
    if tail_rule is not None:
        p = float(tail_rule)
        rep = tail_verdict(terms, exponent=p, band=(1.0, 1.0))
        if p == 1.0:
            rep.verdict = SeriesVerdict.DIVERGES
    else:
        rep = tail_verdict(terms)
    return GenuineReport(_GENUINE_LABELS[rep.verdict], rep)
