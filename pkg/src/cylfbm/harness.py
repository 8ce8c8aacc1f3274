"""Monte Carlo comparisons, convergence rates and machine-readable check lines."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Statistic",
    "McReport",
    "mc_compare",
    "convergence_rate",
    "check_line",
    "Z_THRESHOLD",
]

# about 6e-5 two-sided false alarm per comparison under the null
Z_THRESHOLD = 4.0


class Statistic(enum.Enum):
    MEAN = "mean"
    VARIANCE = "variance"


@dataclass
class McReport:
    name: str
    estimate: float
    stderr: float
    reference: float
    z_score: float
    n_samples: int
    threshold: float

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("standard error must be nonnegative")

    @property
    def passed(self) -> bool:
        return bool(abs(self.z_score) <= self.threshold)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def line(self) -> str:
        return check_line(self.name, self.estimate, self.reference, self.z_score, self.passed)


def mc_compare(samples, reference: float, z_threshold: float = Z_THRESHOLD,
               statistic: Statistic | str = Statistic.MEAN, name: str = "mc") -> McReport:
    """Compare the sample mean (or variance) with a reference value.

    For the variance the standard error is Var * sqrt(2/(n-1)), exact for
    Gaussian samples. A zero standard error gives z = 0 when the estimate equals
    the reference and an infinite z otherwise.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    statistic = Statistic(statistic)
    if statistic is Statistic.MEAN:
        est = float(np.mean(x))
        se = float(np.std(x, ddof=1) / np.sqrt(n))
    else:
        est = float(np.var(x, ddof=1))
        se = est * float(np.sqrt(2.0 / (n - 1)))
    diff = est - float(reference)
    if se == 0.0:
        z = 0.0 if np.isclose(diff, 0.0, atol=1e-14 * max(1.0, abs(reference))) else np.copysign(np.inf, diff)
    else:
        z = diff / se
    return McReport(name, est, se, float(reference), float(z), n, float(z_threshold))


def convergence_rate(errors, grid_factors=None) -> float:
    """Least-squares slope of log(error) against log(h).

    ``grid_factors`` are the relative step sizes h_i; by default the steps halve
    from one error to the next.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size < 3:
        raise ValueError("need at least three errors")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite")
    h = 0.5 ** np.arange(e.size) if grid_factors is None else np.asarray(grid_factors, dtype=float)
    if h.shape != e.shape or np.any(h <= 0):
        raise ValueError("need one positive step size per error")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


def check_line(name: str, estimate: float, reference: float, z: float, passed: bool) -> str:
    verdict = "pass" if passed else "fail"
    return f"CHECK {name} estimate={estimate:.6g} ref={reference:.6g} z={z:.3f} verdict={verdict}"
