"""Inequity indices evaluated on per-node outcome vectors.

Every index here is anonymous (invariant to relabelling nodes) and equals 0
on a constant vector. Sums are accumulated with :func:`math.fsum`, so a value
depends only on the multiset of terms and never on summation order; the
solver and the brute-force test oracles rely on that to agree bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import ValidationError


class DegenerateGiniWarning(UserWarning):
    """Gini requested on an all-zero vector; 0 is returned by convention."""


@dataclass(frozen=True)
class OutcomeVector:
    """Per-node outcomes plus an optional externally supplied mean.

    ``weighting`` records whether the values are raw travel times
    (``"unweighted"``) or demand-weighted ones (``"demand_weighted"``).
    """

    values: np.ndarray
    reference_mean: Optional[float] = None
    weighting: Optional[str] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size == 0:
            raise ValidationError("outcome vector is empty")
        if not np.all(np.isfinite(v)):
            raise ValidationError("outcome vector has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


ArrayLike = Union[OutcomeVector, np.ndarray, list, tuple]


def _values(v: ArrayLike) -> np.ndarray:
    if isinstance(v, OutcomeVector):
        return v.values
    return OutcomeVector(v).values


def _nonnegative(x: np.ndarray, what: str) -> None:
    if np.any(x < 0):
        raise ValidationError(f"{what} requires non-negative outcomes")


def pairwise_abs(x: np.ndarray) -> np.ndarray:
    """Matrix of ``|x_i - x_j|`` over all ordered pairs."""
    return np.abs(x[:, None] - x[None, :])


def _mean(x: np.ndarray) -> float:
    # The rounded quotient can land an ulp outside [min, max]; clamping keeps
    # the mean of a constant vector exactly equal to that constant.
    return min(max(math.fsum(x) / x.size, float(x.min())), float(x.max()))


def mad(v: ArrayLike, mean: Optional[float] = None) -> float:
    """Total absolute deviation from the mean, ``sum_i |x_i - mean|``.

    The mean defaults to ``v.reference_mean`` and then to the arithmetic mean.
    """
    x = _values(v)
    if mean is None and isinstance(v, OutcomeVector):
        mean = v.reference_mean
    if mean is None:
        mean = _mean(x)
    return math.fsum(np.abs(x - mean))


def sad(v: ArrayLike) -> float:
    """Sum of absolute differences over ordered pairs (each pair counted twice)."""
    x = _values(v)
    return math.fsum(pairwise_abs(x).ravel())


def range_spread(v: ArrayLike) -> float:
    x = _values(v)
    return float(x.max() - x.min())


def ratio_min_max(v: ArrayLike) -> float:
    """``min / max``; 1.0 for an all-zero vector (perfect equity)."""
    x = _values(v)
    _nonnegative(x, "ratio_min_max")
    hi = x.max()
    if hi == 0:
        return 1.0
    return float(x.min() / hi)


def variance(v: ArrayLike) -> float:
    """Population variance (divides by the number of nodes)."""
    x = _values(v)
    return math.fsum((x - _mean(x)) ** 2) / x.size


def gini(v: ArrayLike) -> float:
    """Gini coefficient ``SAD / (2 |I| sum x)``, in [0, 1] for non-negative input.

    An all-zero vector yields 0 and emits :class:`DegenerateGiniWarning`.
    """
    x = _values(v)
    _nonnegative(x, "gini")
    total = math.fsum(x)
    if total == 0:
        warnings.warn("gini of an all-zero vector is defined as 0", DegenerateGiniWarning,
                      stacklevel=2)
        return 0.0
    return sad(x) / (2.0 * x.size * total)


def deviation_from_target(v: ArrayLike, target: float, mode: str = "sum_abs") -> float:
    x = _values(v)
    dev = np.abs(x - float(target))
    if mode == "sum_abs":
        return math.fsum(dev)
    if mode == "max_abs":
        return float(dev.max())
    raise ValidationError(f"unknown deviation mode {mode!r}; use 'sum_abs' or 'max_abs'")


METRICS: dict = {
    "mad": mad,
    "sad": sad,
    "range": range_spread,
    "ratio_min_max": ratio_min_max,
    "variance": variance,
    "gini": gini,
}


def _resolve(index) -> Callable:
    if callable(index):
        return index
    try:
        return METRICS[index]
    except KeyError:
        raise ValidationError(f"unknown metric {index!r}; choose from {sorted(METRICS)}") from None


def check_pigou_dalton(index, v: ArrayLike, i: int, j: int, delta: float) -> bool:
    """Does moving ``delta`` from poorer node ``i`` to richer node ``j`` not lower the index?

    Requires ``x_i <= x_j`` and ``0 <= delta <= x_i``.
    """
    fn = _resolve(index)
    x = np.array(_values(v), dtype=float)
    if i == j:
        raise ValidationError("transfer needs two distinct nodes")
    if x[i] > x[j]:
        raise ValidationError(f"node {i} ({x[i]}) is not poorer than node {j} ({x[j]})")
    if not 0 <= delta <= x[i]:
        raise ValidationError(f"delta must lie in [0, x_i={x[i]}], got {delta}")
    before = fn(x)
    x[i] -= delta
    x[j] += delta
    return fn(x) >= before


@dataclass(frozen=True)
class EquityReport:
    mad: float
    sad: float
    range: float
    ratio_min_max: float
    variance: float
    gini: float
    mean: float
    max: float
    min: float

    def as_dict(self) -> dict:
        return asdict(self)


def equity_report(v: ArrayLike) -> EquityReport:
    """All indices at once; ``gini``/``ratio_min_max`` are NaN for negative input."""
    x = _values(v)
    nonneg = not np.any(x < 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGiniWarning)
        g = gini(x) if nonneg else math.nan
    return EquityReport(
        mad=mad(x), sad=sad(x), range=range_spread(x),
        ratio_min_max=ratio_min_max(x) if nonneg else math.nan,
        variance=variance(x), gini=g,
        mean=_mean(x), max=float(x.max()), min=float(x.min()),
    )
