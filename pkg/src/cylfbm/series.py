"""Convergence verdicts for truncated nonnegative series with power-law tails."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["SeriesVerdict", "TailReport", "tail_verdict", "EXPONENT_BAND"]

# around the p-series boundary p = 1 finite data cannot decide
EXPONENT_BAND = (0.9, 1.1)


class SeriesVerdict(enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    INCONCLUSIVE = "inconclusive"


@dataclass
class TailReport:
    """Partial sums of a series and the tail model terms ~ C k^(-p).

    ``tail_estimate`` is the integral-test bound C N^(1-p)/(p-1) on the mass
    beyond the truncation, infinite unless the tail is judged convergent.
    """

    terms: np.ndarray
    partial_sums: np.ndarray
    exponent: float
    constant: float
    tail_estimate: float
    verdict: SeriesVerdict
    fitted: bool

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1]) if self.partial_sums.size else 0.0

    @property
    def N(self) -> int:
        return int(self.terms.size)


# a fitted exponent from fewer tail points decides nothing
MIN_FIT_POINTS = 8


def tail_verdict(terms, exponent: float | None = None, band=EXPONENT_BAND,
                 fit_from: float = 0.5) -> TailReport:
    """Classify sum_k terms[k-1] from its partial sums and tail exponent.

    Parameters
    ----------
    terms : array_like
        Nonnegative terms for k = 1..N.
    exponent : float, optional
        Declared decay exponent p. When omitted p is fitted by least squares of
        log term against log k over the last ``1 - fit_from`` fraction of k.
    band : (float, float)
        Exponents inside this interval give an inconclusive verdict, as does a
        fit on fewer than ``MIN_FIT_POINTS`` positive tail terms.
    """
    t = np.asarray(terms, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need a nonempty one-dimensional sequence of terms")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("terms must be finite and nonnegative")
    sums = np.cumsum(t)
    N = t.size
    k = np.arange(1, N + 1, dtype=float)
    window = slice(min(int(np.floor(fit_from * N)), N - 1), N)
    kw, tw = k[window], t[window]
    pos = tw > 0
    if not np.any(pos):
        # the series terminates inside the window
        return TailReport(t, sums, np.inf, 0.0, 0.0, SeriesVerdict.CONVERGES, exponent is None)
    fitted = exponent is None
    if fitted:
        if pos.sum() < 2:
            p, C = np.inf, 0.0
        else:
            slope, icpt = np.polyfit(np.log(kw[pos]), np.log(tw[pos]), 1)
            with np.errstate(over="ignore"):
                p, C = -float(slope), float(np.exp(icpt))
    else:
        p = float(exponent)
        C = float(np.exp(np.mean(np.log(tw[pos]) + p * np.log(kw[pos]))))
    if band[0] <= p <= band[1] or (fitted and pos.sum() < MIN_FIT_POINTS):
        verdict = SeriesVerdict.INCONCLUSIVE
    elif p > band[1]:
        verdict = SeriesVerdict.CONVERGES
    else:
        verdict = SeriesVerdict.DIVERGES
    if verdict is SeriesVerdict.INCONCLUSIVE:
        tail = np.inf
    elif not np.isfinite(p):
        tail = 0.0
    elif verdict is SeriesVerdict.CONVERGES or (not fitted and p > 1.0):
        tail = C * N ** (1.0 - p) / (p - 1.0)
    else:
        tail = np.inf
    return TailReport(t, sums, p, C, float(tail), verdict, fitted)
