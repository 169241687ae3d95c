"""Correlation and CI-weighted error measures between objective and subjective scores."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

from ..errors import ConstantInput, LengthMismatch, NonPositiveCI, TooFewSamples

Z95 = 1.96


def _pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise LengthMismatch("need at least two points")
    return x, y


def pearson(x, y) -> float:
    """Sample (Pearson) correlation coefficient."""
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation is undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    """Rank correlation: Pearson on average ranks (ties share their mean rank)."""
    x, y = _pair(x, y)
    return pearson(rankdata(x), rankdata(y))


def aes(objective, subjective, ci) -> float:
    """CI-normalized RMS error ``sqrt(mean(((o - s) / ci)**2))``."""
    o, s = _pair(objective, subjective)
    c = np.asarray(ci, dtype=float).ravel()
    if c.shape != o.shape:
        raise LengthMismatch(f"ci has {c.shape[0]} entries, expected {o.shape[0]}")
    if np.any(c <= 0):
        raise NonPositiveCI("confidence half-widths must be > 0")
    return float(np.sqrt(np.mean(((o - s) / c) ** 2)))


def aggregate_ci(samples, method: str = "normal") -> tuple[float, float]:
    """Mean of ``samples`` and a 95 % half-width.

    ``normal``: half-width of the CI of the mean, ``1.96 * sd / sqrt(N)``.
    ``percentile``: half the width of the central 95 % range of the samples
    themselves (the spread of single realizations, not of their mean).
    """
    a = np.asarray(samples, dtype=float).ravel()
    if a.shape[0] < 2:
        raise TooFewSamples(f"need at least two samples, got {a.shape[0]}")
    mean = float(a.mean())
    if method == "normal":
        half = Z95 * float(a.std(ddof=1)) / math.sqrt(a.shape[0])
    elif method == "percentile":
        lo, hi = np.percentile(a, [2.5, 97.5])
        half = float(hi - lo) / 2.0
    else:
        raise ValueError(f"unknown CI method {method!r}")
    return mean, half
