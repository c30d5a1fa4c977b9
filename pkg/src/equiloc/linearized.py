"""Linear (MILP) forms of the catalog models and an exhaustive solver for them.

The forms use binary ``x_j`` (open site) and ``y_i_j`` (node ``i`` served by
``j``) shared by every scenario, plus per-scenario continuous auxiliaries:
an epigraph ``t^n`` for max-type objectives, ``u^n_i_j >= +/-(z_i - z_j)``
for absolute pairwise differences, and ``s^n_i >= u^n_i_j`` for row maxima.
The objective is the coefficient sum divided by the number of scenarios.

:func:`solve_exhaustive` is a test oracle: it enumerates every integer point
satisfying the model's rows and fixes each auxiliary at the smallest value
its rows allow, which is the LP optimum for these monotone epigraph forms.
It never calls the production solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedModelError, ValidationError
from .models import DEMAND_WEIGHTED, ModelSpec


@dataclass(frozen=True)
class Row:
    coefs: dict          # variable index -> coefficient
    sense: str           # "<=", ">=", "=="
    rhs: float
    tag: str = ""


@dataclass
class LinearModel:
    names: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    divisor: float = 1.0
    n: int = 0
    p: int = 0
    n_scenarios: int = 1

    def add_var(self, name: str, binary: bool = False, lb: float = 0.0) -> int:
        self.names.append(name)
        self.binary.append(binary)
        self.lower.append(lb)
        return len(self.names) - 1

    def add_row(self, coefs: dict, sense: str, rhs: float = 0.0, tag: str = "") -> None:
        self.rows.append(Row({k: v for k, v in coefs.items() if v != 0}, sense, rhs, tag))

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def count(self, prefix: str) -> int:
        return sum(1 for nm in self.names if nm.startswith(prefix))

    def rows_tagged(self, tag: str) -> list:
        return [r for r in self.rows if r.tag == tag]


def _scenario_arrays(instance, scenarios):
    if scenarios is None:
        return instance.demand_mean[None, :], instance.distance[None, :, :]
    return np.asarray(scenarios.demand), np.asarray(scenarios.distance)


def linearized_form(spec: ModelSpec, instance, scenarios=None) -> LinearModel:
    """Symbolic linear model of ``spec`` over ``instance`` and its scenarios."""
    kind = spec.objective.kind
    if kind == "lex":
        raise UnsupportedModelError("lex-center is solved sequentially and has no single LP")
    if kind == "om":
        raise UnsupportedModelError("ordered-median has no linear form here")
    if spec.beta is not None:
        raise UnsupportedModelError("the beta ratio constraint is not linearized")

    W, D = _scenario_arrays(instance, scenarios)
    N, n = W.shape
    m = LinearModel(n=n, p=instance.p, n_scenarios=N, divisor=float(N))
    x = [m.add_var(f"x_{j}", binary=True) for j in range(n)]
    y = [[m.add_var(f"y_{i}_{j}", binary=True) for j in range(n)] for i in range(n)]
    m.add_row({x[j]: 1.0 for j in range(n)}, "==", instance.p, "C1")
    for i in range(n):
        m.add_row({y[i][j]: 1.0 for j in range(n)}, "==", 1.0, "C2")
    for i in range(n):
        for j in range(n):
            m.add_row({y[i][j]: 1.0, x[j]: -1.0}, "<=", 0.0, "C3")

    weighted = spec.weighting == DEMAND_WEIGHTED
    for s in range(N):
        c = D[s] * W[s][:, None] if weighted else D[s]

        def z(i, sign=1.0):
            return {y[i][j]: sign * float(c[i, j]) for j in range(n)}

        def diff(i, j):
            # coefficients of z_i - z_j
            out = z(i)
            for k, v in z(j, -1.0).items():
                out[k] = out.get(k, 0.0) + v
            return out

        def abs_pairs():
            u = {}
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    u[i, j] = m.add_var(f"u{s}_{i}_{j}")
                    for sign in (1.0, -1.0):
                        row = {u[i, j]: 1.0}
                        for k, v in diff(i, j).items():
                            row[k] = row.get(k, 0.0) - sign * v
                        m.add_row(row, ">=", 0.0, f"abs{s}")
            return u

        if kind == "sum":
            for i in range(n):
                for k, v in z(i).items():
                    m.objective[k] = m.objective.get(k, 0.0) + v
        elif kind == "max":
            t = m.add_var(f"t{s}")
            for i in range(n):
                m.add_row({t: 1.0, **{k: -v for k, v in z(i).items()}}, ">=", 0.0, f"epi{s}")
            m.objective[t] = 1.0
        elif kind == "range":
            t = m.add_var(f"t{s}")
            for i in range(n):
                for j in range(n):
                    if i != j:
                        m.add_row({t: 1.0, **{k: -v for k, v in diff(i, j).items()}},
                                  ">=", 0.0, f"epi{s}")
            m.objective[t] = 1.0
        elif kind == "sad":
            for var in abs_pairs().values():
                m.objective[var] = 1.0
        elif kind == "max_row_sad":
            u = abs_pairs()
            t = m.add_var(f"t{s}")
            for i in range(n):
                row = {t: 1.0}
                row.update({u[i, j]: -1.0 for j in range(n) if j != i})
                m.add_row(row, ">=", 0.0, f"epi{s}")
            m.objective[t] = 1.0
        elif kind == "sum_row_max":
            u = abs_pairs()
            for i in range(n):
                si = m.add_var(f"s{s}_{i}")
                for j in range(n):
                    if j != i:
                        m.add_row({si: 1.0, u[i, j]: -1.0}, ">=", 0.0, f"rowmax{s}")
                m.objective[si] = 1.0
        else:  # pragma: no cover - guarded above
            raise UnsupportedModelError(kind)
    return m


# --- exhaustive oracle ----------------------------------------------------------

def _row_arrays(row: Row):
    idx = np.fromiter(row.coefs.keys(), dtype=int, count=len(row.coefs))
    val = np.fromiter(row.coefs.values(), dtype=float, count=len(row.coefs))
    return idx, val


def _satisfied(vals, row: Row):
    idx, coef = _row_arrays(row)
    lhs = vals[:, idx] @ coef
    if row.sense == "==":
        return lhs == row.rhs
    if row.sense == "<=":
        return lhs <= row.rhs
    return lhs >= row.rhs


def _propagation_plan(m: LinearModel):
    """Group rows by the auxiliary they bound from below; check monotone structure."""
    aux = [k for k in range(m.n_vars) if not m.binary[k]]
    heads = {k: [] for k in aux}
    for row in m.rows:
        cont = [k for k in row.coefs if not m.binary[k]]
        if not cont:
            continue
        if row.sense != ">=":
            raise ValidationError(f"row {row.tag} on continuous variables must be '>='")
        pos = [k for k in cont if row.coefs[k] > 0]
        if len(pos) != 1:
            raise ValidationError(f"row {row.tag} lacks a unique bounded variable")
        head = pos[0]
        for k in cont:
            if k != head and k > head:
                raise ValidationError("auxiliaries must depend only on earlier ones")
        heads[head].append(row)
    for k, c in m.objective.items():
        if not m.binary[k] and c < 0:
            raise ValidationError("negative objective weight on an auxiliary")
    return aux, heads


def _candidates(m: LinearModel):
    """Integer points: x from all 0/1 vectors, y rows one-hot over open columns."""
    n = m.n
    xs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    pts = np.zeros((xs.shape[0], m.n_vars))
    pts[:, :n] = xs
    int_rows = [r for r in m.rows if all(m.binary[k] for k in r.coefs)]
    x_rows = [r for r in int_rows if all(k < n for k in r.coefs)]
    ok = np.ones(xs.shape[0], dtype=bool)
    for r in x_rows:
        ok &= _satisfied(pts, r)
    batches = []
    for xv in xs[ok]:
        cols = np.flatnonzero(xv)
        choice = np.array(list(itertools.product(cols, repeat=n)), dtype=int)
        block = np.zeros((choice.shape[0], m.n_vars))
        block[:, :n] = xv
        rows_idx = np.arange(n)
        block[np.arange(choice.shape[0])[:, None], n + rows_idx * n + choice] = 1.0
        batches.append(block)
    if not batches:
        return np.zeros((0, m.n_vars)), int_rows
    return np.vstack(batches), int_rows


def solve_exhaustive(m: LinearModel):
    """Optimal ``(value, open_set, assign)`` of a linear model by enumeration."""
    aux, heads = _propagation_plan(m)
    pts, int_rows = _candidates(m)
    feasible = np.ones(pts.shape[0], dtype=bool)
    for r in int_rows:
        feasible &= _satisfied(pts, r)
    pts = pts[feasible]
    if pts.shape[0] == 0:
        raise ValidationError("linear model has no integer-feasible point")
    for k in aux:
        best = np.full(pts.shape[0], m.lower[k])
        for row in heads[k]:
            idx, coef = _row_arrays(row)
            mask = idx != k
            bound = (row.rhs - pts[:, idx[mask]] @ coef[mask]) / row.coefs[k]
            best = np.maximum(best, bound)
        pts[:, k] = best
    oidx = np.fromiter(m.objective.keys(), dtype=int)
    ocoef = np.fromiter(m.objective.values(), dtype=float)
    values = (pts[:, oidx] @ ocoef) / m.divisor
    k = int(np.argmin(values))
    n = m.n
    xv = pts[k, :n]
    yv = pts[k, n:n + n * n].reshape(n, n)
    return float(values[k]), tuple(np.flatnonzero(xv)), tuple(int(j) for j in yv.argmax(axis=1))
