"""Real-valued fractional Brownian motion: covariance, kernel and exact sampling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

__all__ = [
    "Regime",
    "Hurst",
    "TimeGrid",
    "FbmPathSet",
    "covariance",
    "covariance_matrix",
    "b_h_constant",
    "kernel_kappa",
    "kernel_kappa_ds",
    "kernel_covariance",
    "fgn_autocovariance",
    "sample_paths",
    "increments_to_path",
    "path_to_increments",
    "SamplerError",
    "DEFAULT_BLOCK",
]

# paths per RNG stream; fixed so results do not depend on how work is split
DEFAULT_BLOCK = 4096


class SamplerError(RuntimeError):
    """Raised when neither circulant embedding nor Cholesky can factor the covariance."""


class Regime(enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class Hurst:
    """Hurst index in (0, 1) with the Brownian value 1/2 excluded."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0) or v == 0.5:
            raise ValueError(f"Hurst index must lie in (0,1) and differ from 1/2, got {self.value!r}")
        object.__setattr__(self, "value", v)

    def regime(self) -> Regime:
        return Regime.LOW if self.value < 0.5 else Regime.HIGH

    @property
    def is_low(self) -> bool:
        return self.value < 0.5

    def __float__(self) -> float:
        return self.value


def as_hurst(H) -> Hurst:
    return H if isinstance(H, Hurst) else Hurst(H)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] with ``n`` cells."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"number of cells must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.h
        t[-1] = self.T
        return t

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is off-grid."""
        x = t / self.h
        j = int(round(x))
        if abs(x - j) > tol * max(1.0, abs(x)) or not 0 <= j <= self.n:
            raise ValueError(f"time {t!r} is not a node of the grid (T={self.T}, n={self.n})")
        return j

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.n * int(factor))

    def truncate(self, j: int) -> "TimeGrid":
        """Grid on [0, t_j] sharing the step of this grid."""
        return TimeGrid(self.nodes[j], j)


def covariance(s, t, H) -> np.ndarray | float:
    """R(s,t) = (s^2H + t^2H - |s-t|^2H) / 2, broadcasting over arrays."""
    H = float(as_hurst(H).value)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("covariance is defined for nonnegative times only")
    out = 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(s - t) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def covariance_matrix(times, H) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return covariance(t[:, None], t[None, :], H)


def b_h_constant(H) -> float:
    """Normalising constant of the kernel, regime dependent."""
    H = as_hurst(H).value
    if H > 0.5:
        return math.sqrt(H * (2 * H - 1) / special.beta(2 - 2 * H, H - 0.5))
    return math.sqrt(2 * H / ((1 - 2 * H) * special.beta(1 - 2 * H, H + 0.5)))


def _gauss_legendre01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_kernel_args(t, u):
    if np.any(u <= 0) or np.any(u >= t):
        raise ValueError("kernel requires 0 < u < t")


def kernel_kappa(t, u, H, quad_n: int = 2048) -> np.ndarray | float:
    """Kernel with R(s,t) = int_0^{s^t} kappa(s,u) kappa(t,u) du.

    For H > 1/2 the inner integral is taken after the substitution
    r = u + (t-u) w^(1/a), a = H - 1/2, which absorbs the (r-u)^(a-1) endpoint
    singularity into the measure, followed by a composite midpoint rule with
    ``quad_n`` points. For H < 1/2 the correction integral is an incomplete Beta
    function and is evaluated in closed form.
    """
    H = as_hurst(H)
    h = H.value
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_kernel_args(t, u)
    t, u = np.broadcast_arrays(t, u)
    a = h - 0.5
    bh = b_h_constant(H)
    if a > 0:
        w = (np.arange(quad_n) + 0.5) / quad_n
        tt = t[..., None]
        uu = u[..., None]
        # int_u^t (r-u)^(a-1) r^a dr = (t-u)^a / a * int_0^1 r(w)^a dw
        r = uu + (tt - uu) * w ** (1.0 / a)
        inner = (t - u) ** a / a * np.mean(r**a, axis=-1)
        out = bh * u ** (-a) * inner
    else:
        # int_u^t (r-u)^a r^(a-1) dr = u^(2a) B(-2a, a+1) P(y > u/t), y ~ Beta(-2a, a+1)
        c, d = -2.0 * a, a + 1.0
        inner = u ** (2 * a) * special.beta(c, d) * special.betaincc(c, d, u / t)
        out = bh * ((t / u) ** a * (t - u) ** a - a * u ** (-a) * inner)
    return float(out) if out.ndim == 0 else out


def _sigmoid_map(n: int, p: float):
    """Midpoint nodes of w -> w^p / (w^p + (1-w)^p) on (0,1) and the Jacobian."""
    w = (np.arange(n) + 0.5) / n
    a, b = w**p, (1 - w) ** p
    phi = a / (a + b)
    dphi = p * (w * (1 - w)) ** (p - 1) / (a + b) ** 2
    return phi, dphi / n


def kernel_covariance(s: float, t: float, H, quad_n: int = 2048) -> float:
    """int_0^{s^t} kappa(s,u) kappa(t,u) du by endpoint-graded midpoint quadrature."""
    H = as_hurst(H)
    lo = min(s, t)
    if lo <= 0:
        return 0.0
    # integrand behaves like |u - endpoint|^e with e >= -|2H-1|; grade so w^(p(1+e)-1) is C^2
    e = -abs(2 * H.value - 1)
    p = 3.0 / (1.0 + e)
    phi, jac = _sigmoid_map(quad_n, p)
    u = lo * phi
    keep = (u > 0) & (u < lo)
    u, jac = u[keep], jac[keep]
    k1 = kernel_kappa(s, u, H, quad_n)
    k2 = k1 if s == t else kernel_kappa(t, u, H, quad_n)
    return float(lo * np.sum(k1 * k2 * jac))


def kernel_kappa_ds(s, t, H) -> np.ndarray | float:
    """Closed-form derivative of kappa(s, t) in its first argument, for 0 < t < s."""
    H = as_hurst(H)
    a = H.value - 0.5
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    bh = b_h_constant(H)
    if a > 0:
        out = bh * t ** (-a) * (s - t) ** (a - 1.0) * s**a
    else:
        out = bh * a * (s / t) ** a * (s - t) ** (a - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def fgn_autocovariance(k, H, h: float = 1.0) -> np.ndarray:
    """Autocovariance of increments b(t_{j+1}) - b(t_j) at integer lag ``k`` on step ``h``."""
    H = as_hurst(H).value
    k = np.abs(np.asarray(k, dtype=float))
    g = 0.5 * ((k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))
    return g * h ** (2 * H)


@dataclass
class FbmPathSet:
    """Discrete fBm paths, one row per path, column j is b(t_j)."""

    grid: TimeGrid
    hurst: Hurst
    paths: np.ndarray
    seed: int
    method: str = field(default="circulant")

    def __post_init__(self):
        if self.paths.ndim != 2 or self.paths.shape[1] != self.grid.n + 1:
            raise ValueError("paths must have shape (n_paths, n+1)")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def at(self, t: float) -> np.ndarray:
        return self.paths[:, self.grid.index_of(t)]

    def increments(self) -> np.ndarray:
        return path_to_increments(self.paths)


def _circulant_eigenvalues(n: int, H: float) -> np.ndarray:
    g = fgn_autocovariance(np.arange(n + 1), H)
    row = np.concatenate([g, g[-2:0:-1]])
    return np.fft.fft(row).real


def _block_rngs(seed: int, n_paths: int, block: int, stream: tuple[int, ...] = ()):
    n_blocks = -(-n_paths // block)
    for b in range(n_blocks):
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream) + (b,))
        yield min(block, n_paths - b * block), np.random.Generator(np.random.Philox(ss))


def _fgn_circulant(eig: np.ndarray, n: int, count: int, rng) -> np.ndarray:
    m = eig.size
    half = -(-count // 2)
    # row-sequential draws and interleaved real/imaginary parts keep path p
    # independent of how many paths the block holds
    a = rng.standard_normal((half, 2, m))
    y = np.fft.fft(np.sqrt(eig / m) * (a[:, 0] + 1j * a[:, 1]), axis=1)[:, :n]
    out = np.empty((2 * half, n))
    out[0::2], out[1::2] = y.real, y.imag
    return out[:count]


def sample_increments(n: int, H, n_paths: int, seed: int, stream: tuple[int, ...] = (),
                      block: int = DEFAULT_BLOCK) -> tuple[np.ndarray, str]:
    """Unit-step fractional Gaussian noise, shape (n_paths, n)."""
    H = as_hurst(H).value
    eig = _circulant_eigenvalues(n, H)
    tol = 1e-10 * np.max(np.abs(eig))
    out = np.empty((n_paths, n))
    if eig.min() >= -tol:
        eig = np.clip(eig, 0.0, None)
        method = "circulant"
        chol = None
    else:
        method = "cholesky"
        cov = linalg.toeplitz(fgn_autocovariance(np.arange(n), H))
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            lam = np.linalg.eigvalsh(cov).min()
            raise SamplerError(
                f"circulant embedding has negative eigenvalue {eig.min():.3e} and Cholesky failed "
                f"(minimum covariance eigenvalue {lam:.3e})"
            ) from exc
    pos = 0
    for count, rng in _block_rngs(seed, n_paths, block, stream):
        if chol is None:
            out[pos:pos + count] = _fgn_circulant(eig, n, count, rng)
        else:
            out[pos:pos + count] = rng.standard_normal((count, n)) @ chol.T
        pos += count
    return out, method


def sample_paths(grid: TimeGrid, H, n_paths: int, seed: int, stream: tuple[int, ...] = ()) -> FbmPathSet:
    """Exact discrete fBm paths on ``grid`` by circulant embedding (Davies-Harte).

    ``stream`` selects an independent family of RNG streams for the same seed; the
    cylindrical code uses it to give each component fBm its own streams.
    """
    H = as_hurst(H)
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    inc, method = sample_increments(grid.n, H, n_paths, seed, stream)
    inc *= grid.h**H.value
    return FbmPathSet(grid, H, increments_to_path(inc), int(seed), method)


def increments_to_path(increments) -> np.ndarray:
    inc = np.asarray(increments, dtype=float)
    zero = np.zeros(inc.shape[:-1] + (1,))
    return np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)


def path_to_increments(path) -> np.ndarray:
    return np.diff(np.asarray(path, dtype=float), axis=-1)
