"""Objective catalog: classical, equity and rank-based location models.

Each model maps a per-node outcome vector ``z`` to a scalar:

==================  ======================  ==================================
name                outcome ``z_i``          objective
==================  ======================  ==================================
p-median            ``w_i d_i,a(i)``         ``sum_i z_i``
p-center            ``d_i,a(i)``             ``max_i z_i``
total-distance      ``d_i,a(i)``             ``sum_i z_i``
equity-1 / 3        raw / weighted           ``sum_i sum_j |z_i - z_j|``
equity-2 / 4        raw / weighted           ``max_ij |z_i - z_j|``
equity-5 / 6        raw / weighted           ``max_i sum_j |z_i - z_j|``
equity-7 / 8        raw / weighted           ``sum_i max_j |z_i - z_j|``
lex-center          raw                      outcomes sorted decreasing, lexicographic
ordered-median      raw                      ``sum_k lambda_k z_(k)`` (k-th largest)
==================  ======================  ==================================

Evaluation here is direct; :mod:`equiloc.linearized` gives the equivalent
linear programs used to cross-check the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ContractViolation, ValidationError
from .metrics import OutcomeVector, pairwise_abs, ratio_min_max, sad

UNWEIGHTED = "unweighted"
DEMAND_WEIGHTED = "demand_weighted"
CLOSEST = "closest"
FREE = "free"


class Objective(str, Enum):
    P_MEDIAN = "p-median"
    P_CENTER = "p-center"
    TOTAL_DISTANCE = "total-distance"
    EQUITY_1 = "equity-1"
    EQUITY_2 = "equity-2"
    EQUITY_3 = "equity-3"
    EQUITY_4 = "equity-4"
    EQUITY_5 = "equity-5"
    EQUITY_6 = "equity-6"
    EQUITY_7 = "equity-7"
    EQUITY_8 = "equity-8"
    LEX_CENTER = "lex-center"
    ORDERED_MEDIAN = "ordered-median"

    def __str__(self):
        return self.value

    @property
    def weighting(self) -> str:
        return DEMAND_WEIGHTED if self in _WEIGHTED else UNWEIGHTED

    @property
    def kind(self) -> str:
        """Aggregation family: sum, max, sad, range, max_row_sad, sum_row_max, lex, om."""
        return _KIND[self]

    @property
    def is_equity(self) -> bool:
        return self.value.startswith("equity-")

    @property
    def monotone(self) -> bool:
        """Objective is nondecreasing in every outcome, so nearest assignment is optimal."""
        return self.kind in ("sum", "max", "lex", "om")

    @property
    def display_name(self) -> str:
        return _DISPLAY.get(self, self.value.replace("-", " ").title())


_WEIGHTED = {Objective.P_MEDIAN, Objective.EQUITY_3, Objective.EQUITY_4,
             Objective.EQUITY_6, Objective.EQUITY_8}

_KIND = {
    Objective.P_MEDIAN: "sum", Objective.TOTAL_DISTANCE: "sum", Objective.P_CENTER: "max",
    Objective.EQUITY_1: "sad", Objective.EQUITY_3: "sad",
    Objective.EQUITY_2: "range", Objective.EQUITY_4: "range",
    Objective.EQUITY_5: "max_row_sad", Objective.EQUITY_6: "max_row_sad",
    Objective.EQUITY_7: "sum_row_max", Objective.EQUITY_8: "sum_row_max",
    Objective.LEX_CENTER: "lex", Objective.ORDERED_MEDIAN: "om",
}

_DISPLAY = {Objective.P_MEDIAN: "p-median", Objective.P_CENTER: "p-center",
            Objective.TOTAL_DISTANCE: "Total Distance", Objective.LEX_CENTER: "Lex center",
            Objective.ORDERED_MEDIAN: "Ordered median"}

# The eleven models of the Lehigh study, in table order.
TABLE_MODELS = (
    Objective.P_MEDIAN, Objective.P_CENTER, Objective.TOTAL_DISTANCE,
    Objective.EQUITY_1, Objective.EQUITY_2, Objective.EQUITY_3, Objective.EQUITY_4,
    Objective.EQUITY_5, Objective.EQUITY_6, Objective.EQUITY_7, Objective.EQUITY_8,
)


@dataclass(frozen=True)
class ModelSpec:
    """Which objective to optimize and how nodes may be assigned.

    ``assignment_rule`` defaults to ``"closest"`` for objectives that are
    monotone in every outcome and ``"free"`` for the equity models.
    ``beta`` adds the side constraint ``min z / max z >= beta`` on the
    (scenario-averaged) outcome vector.
    """

    objective: Objective
    ordered_weights: Optional[tuple] = None
    assignment_rule: Optional[str] = None
    beta: Optional[float] = None

    def __post_init__(self):
        obj = Objective(self.objective)
        object.__setattr__(self, "objective", obj)
        if obj is Objective.ORDERED_MEDIAN:
            if self.ordered_weights is None:
                raise ValidationError("ordered-median needs ordered_weights")
            lam = tuple(float(x) for x in self.ordered_weights)
            if any(not math.isfinite(x) or x < 0 for x in lam):
                raise ValidationError("ordered weights must be finite and non-negative")
            object.__setattr__(self, "ordered_weights", lam)
        elif self.ordered_weights is not None:
            raise ValidationError("ordered_weights only apply to ordered-median")
        if self.assignment_rule is None:
            object.__setattr__(self, "assignment_rule", CLOSEST if obj.monotone else FREE)
        elif self.assignment_rule not in (CLOSEST, FREE):
            raise ValidationError(f"assignment_rule must be 'closest' or 'free', "
                                  f"got {self.assignment_rule!r}")
        if self.beta is not None and not (0 < self.beta <= 1):
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")

    @classmethod
    def parse(cls, name: str, **kwargs) -> "ModelSpec":
        try:
            return cls(Objective(name.strip().lower()), **kwargs)
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            names = ", ".join(o.value for o in Objective)
            raise ValidationError(f"unknown model {name!r}; expected one of: {names}") from None

    @property
    def weighting(self) -> str:
        return self.objective.weighting

    @property
    def name(self) -> str:
        return self.objective.value

    def with_rule(self, rule: Optional[str]) -> "ModelSpec":
        if rule is None or rule == self.assignment_rule:
            return self
        return ModelSpec(self.objective, self.ordered_weights, rule, self.beta)


class Scenario(NamedTuple):
    """One realization of demand (length n) and travel times (n x n)."""

    demand: np.ndarray
    distance: np.ndarray


@dataclass(frozen=True)
class Assignment:
    """Open facilities and the facility serving each node.

    Structurally integral; :meth:`validate` checks the cardinality and
    open-facility constraints against an instance.
    """

    open_set: tuple
    assign: tuple

    def __post_init__(self):
        object.__setattr__(self, "open_set", tuple(sorted(int(j) for j in self.open_set)))
        object.__setattr__(self, "assign", tuple(int(j) for j in self.assign))

    def validate(self, n: int, p: int) -> "Assignment":
        if len(set(self.open_set)) != len(self.open_set):
            raise ContractViolation(f"open set {self.open_set} repeats a facility")
        if len(self.open_set) != p:
            raise ContractViolation(f"open set has {len(self.open_set)} facilities, p = {p}")
        if any(not 0 <= j < n for j in self.open_set):
            raise ContractViolation(f"open set {self.open_set} has indices outside [0, {n})")
        if len(self.assign) != n:
            raise ContractViolation(f"assignment covers {len(self.assign)} of {n} nodes")
        opened = set(self.open_set)
        for i, j in enumerate(self.assign):
            if j not in opened:
                raise ContractViolation(f"node {i} assigned to closed facility {j}")
        return self

    @classmethod
    def closest(cls, open_set: Sequence[int], distance: np.ndarray) -> "Assignment":
        """Each node to its nearest open facility, ties to the lowest index."""
        cols = np.array(sorted(open_set), dtype=int)
        pick = np.argmin(np.asarray(distance)[:, cols], axis=1)
        return cls(tuple(cols), tuple(cols[pick]))


def outcome_array(assign, scenario: Scenario, weighting: str) -> np.ndarray:
    idx = np.asarray(assign, dtype=int)
    z = np.asarray(scenario.distance)[np.arange(idx.size), idx]
    if weighting == DEMAND_WEIGHTED:
        z = np.asarray(scenario.demand) * z
    return z


def outcomes(instance, a: Assignment, scenario: Optional[Scenario] = None,
             weighting: str = UNWEIGHTED) -> OutcomeVector:
    """Per-node outcomes ``d[i, a(i)]`` (optionally times ``w_i``) under a scenario.

    The instance means are used when ``scenario`` is omitted.
    """
    a.validate(instance.n, instance.p)
    if scenario is None:
        scenario = Scenario(instance.demand_mean, instance.distance)
    if weighting not in (UNWEIGHTED, DEMAND_WEIGHTED):
        raise ValidationError(f"unknown weighting {weighting!r}")
    return OutcomeVector(outcome_array(a.assign, scenario, weighting), weighting=weighting)


# --- direct evaluation --------------------------------------------------------

def sorted_desc(z: np.ndarray) -> np.ndarray:
    return np.sort(z)[::-1]


def max_row_sad(z: np.ndarray) -> float:
    return max(math.fsum(row) for row in pairwise_abs(z))


def sum_row_max(z: np.ndarray) -> float:
    hi, lo = z.max(), z.min()
    return math.fsum(np.maximum(hi - z, z - lo))


def ordered_median(z: np.ndarray, weights) -> float:
    lam = np.asarray(weights, dtype=float)
    if lam.size != z.size:
        raise ValidationError(f"{lam.size} ordered weights for {z.size} outcomes")
    return math.fsum(lam * sorted_desc(z))


def scenario_value(spec: ModelSpec, z: np.ndarray) -> float:
    """Objective of a single outcome vector (raw array, weighting already applied)."""
    kind = spec.objective.kind
    if kind == "sum":
        return math.fsum(z)
    if kind in ("max", "lex"):
        return float(z.max())
    if kind == "sad":
        return sad(z)
    if kind == "range":
        return float(z.max() - z.min())
    if kind == "max_row_sad":
        return max_row_sad(z)
    if kind == "sum_row_max":
        return sum_row_max(z)
    return ordered_median(z, spec.ordered_weights)


def objective_value(spec: ModelSpec, v, w=None) -> float:
    """Evaluate ``spec`` on an outcome vector.

    ``v`` must carry the weighting the model expects. An unweighted vector
    is accepted for a demand-weighted model when the demand ``w`` is passed.
    For lex-center the scalar is the worst outcome; use :func:`objective_key`
    for the full lexicographic order.
    """
    return scenario_value(spec, _checked_values(spec, v, w))


def objective_key(spec: ModelSpec, v, w=None):
    """Sort key: a float, or a tuple of decreasing outcomes for lex-center."""
    z = _checked_values(spec, v, w)
    if spec.objective is Objective.LEX_CENTER:
        return tuple(float(x) for x in sorted_desc(z))
    return scenario_value(spec, z)


def _checked_values(spec: ModelSpec, v, w) -> np.ndarray:
    if isinstance(v, OutcomeVector):
        z, weighting = v.values, v.weighting
    else:
        z, weighting = OutcomeVector(v).values, None
    if weighting is not None and weighting != spec.weighting:
        if weighting == UNWEIGHTED and w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape != z.shape:
                raise ContractViolation("demand vector and outcomes differ in length")
            return w * z
        raise ContractViolation(
            f"{spec.name} expects {spec.weighting} outcomes, got {weighting}")
    return z


def check_beta_constraint(v, beta: float) -> bool:
    return ratio_min_max(v) >= beta


# --- sample averages ------------------------------------------------------------

def scenario_outcomes(spec: ModelSpec, assign, demand: np.ndarray,
                      distance: np.ndarray) -> np.ndarray:
    """``(N, n)`` outcomes of ``assign`` across stacked scenarios."""
    idx = np.asarray(assign, dtype=int)
    z = distance[:, np.arange(idx.size), idx]
    if spec.weighting == DEMAND_WEIGHTED:
        z = demand * z
    return z


def average_key(spec: ModelSpec, z: np.ndarray):
    """Sample-average objective of ``(N, n)`` outcomes (tuple for lex-center).

    For lex-center each rank position is averaged over scenarios, so the
    first component equals the sample-average p-center value.
    """
    n_scen = z.shape[0]
    if spec.objective is Objective.LEX_CENTER:
        ranked = -np.sort(-z, axis=1)
        return tuple(math.fsum(ranked[:, k]) / n_scen for k in range(z.shape[1]))
    return math.fsum(scenario_value(spec, row) for row in z) / n_scen


def key_value(key) -> float:
    return key[0] if isinstance(key, tuple) else key
