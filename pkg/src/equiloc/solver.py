"""Exact and heuristic optimization over open sets and assignments.

``enumerate_exact`` visits every ``p``-subset of sites. For each subset the
inner problem assigns nodes to open facilities either by the closest rule
or freely; the free rule is solved exactly by depth-first branch and bound
with per-scenario relaxation bounds. Ties are broken toward the
lexicographically smallest open set, then the smallest assignment vector,
so results do not depend on search order or worker count.

``local_search`` runs swap moves (close one site, open another) from a
greedy seed plus random restarts.
"""

from __future__ import annotations

import itertools
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InfeasibleError, ValidationError
from .metrics import OutcomeVector, ratio_min_max
from .models import (CLOSEST, FREE, Assignment, ModelSpec, Objective, average_key, key_value,
                     scenario_outcomes)
from .scenarios import ScenarioSet

ENUMERATE_EXACT = "enumerate_exact"
LOCAL_SEARCH = "local_search"
MAX_SUBSETS = 10 ** 6

OPTIMAL = "optimal"
HEURISTIC = "heuristic"
TIME_LIMIT = "time_limit"


def default_workers() -> int:
    raw = os.environ.get("EQUILOC_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"EQUILOC_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class SolveOptions:
    method: str = ENUMERATE_EXACT
    assignment_rule: Optional[str] = None
    time_limit: Optional[float] = None
    workers: Optional[int] = None
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.method not in (ENUMERATE_EXACT, LOCAL_SEARCH):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.assignment_rule not in (None, CLOSEST, FREE):
            raise ValidationError(f"unknown assignment rule {self.assignment_rule!r}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValidationError("time_limit must be positive")


@dataclass
class Solution:
    open_set: tuple
    assignment: Assignment
    objective: float
    key: object
    per_node_outcomes: OutcomeVector
    model: ModelSpec
    status: str = OPTIMAL
    provenance: dict = field(default_factory=dict)

    @property
    def heuristic(self) -> bool:
        return self.status == HEURISTIC

    def labels(self, instance) -> list:
        return [instance.label(j) for j in self.open_set]

    def to_dict(self, instance=None) -> dict:
        out = {
            "model": self.model.name,
            "open_set": list(self.open_set),
            "assign": list(self.assignment.assign),
            "objective": self.objective,
            "status": self.status,
            "per_node_outcomes": [float(x) for x in self.per_node_outcomes.values],
            "provenance": self.provenance,
        }
        if isinstance(self.key, tuple):
            out["lex_key"] = list(self.key)
        if instance is not None:
            out["locations"] = self.labels(instance)
        return out


class _Timeout(Exception):
    pass


class TimeLimitError(InfeasibleError):
    """Time ran out before any feasible open set was evaluated."""


def _tol(ref) -> float:
    return 1e-9 * (1.0 + abs(key_value(ref)))


def _exceeds(bound, ref) -> bool:
    """``bound`` is worse than ``ref`` by more than rounding noise."""
    if ref is None:
        return False
    tol = _tol(ref)
    if isinstance(ref, tuple):
        for b, r in zip(bound, ref):
            if b > r + tol:
                return True
            if b < r - tol:
                return False
        return False
    return bound > ref + tol


def _no_better(bound, ref) -> bool:
    """Nothing under ``bound`` can beat ``ref``: at best a tie.

    Uses a tolerance far below :func:`_tol`, sized to the rounding error of
    the vectorised bound sums, so that tied subtrees can be skipped once the
    tie-break has already been decided.
    """
    tol = 1e-12 * (1.0 + abs(key_value(ref)))
    if isinstance(ref, tuple):
        for b, r in zip(bound, ref):
            if b < r - tol:
                return False
            if b > r + tol:
                return True
        return True
    return bound >= ref - tol


class _Problem:
    """Stacked scenario data and the per-open-set inner solvers."""

    def __init__(self, spec: ModelSpec, instance, scen: ScenarioSet, rule: str,
                 deadline: Optional[float]):
        if scen.n_nodes != instance.n:
            raise ValidationError("scenario set and instance differ in node count")
        self.spec = spec
        self.kind = spec.objective.kind
        self.W = np.asarray(scen.demand)
        self.D = np.asarray(scen.distance)
        self.N, self.n = self.W.shape
        self.p = instance.p
        self.rule = rule
        self.deadline = deadline
        self.mean_d = self.D.sum(axis=0)
        self.weighted = spec.weighting != "unweighted"
        if spec.objective is Objective.ORDERED_MEDIAN and len(spec.ordered_weights) != self.n:
            raise ValidationError(f"ordered-median needs {self.n} weights, "
                                  f"got {len(spec.ordered_weights)}")
        self.lam = (np.asarray(spec.ordered_weights) if spec.ordered_weights else None)
        self.ticks = 0

    def check_time(self):
        self.ticks += 1
        if self.deadline is not None and (self.ticks == 1 or (self.ticks & 127) == 0):
            if time.monotonic() > self.deadline:
                raise _Timeout

    # -- evaluation ------------------------------------------------------------
    def key(self, assign):
        z = scenario_outcomes(self.spec, assign, self.W, self.D)
        return average_key(self.spec, z)

    def feasible(self, assign) -> bool:
        if self.spec.beta is None:
            return True
        return ratio_min_max(self.mean_outcomes(assign)) >= self.spec.beta

    def mean_outcomes(self, assign) -> np.ndarray:
        z = scenario_outcomes(self.spec, assign, self.W, self.D)
        return np.array([math.fsum(col) / self.N for col in z.T])

    # -- inner problem -----------------------------------------------------------
    def closest(self, open_set) -> tuple:
        cols = np.asarray(open_set, dtype=int)
        return tuple(int(j) for j in cols[np.argmin(self.mean_d[:, cols], axis=1)])

    def solve_open_set(self, open_set, rule=None, cutoff=None):
        """Best ``(key, assign)`` for this open set, or None if nothing beats ``cutoff``.

        ``cutoff`` is an incumbent ``(key, open_set, assign)`` from anywhere in
        the search; results strictly worse than it are not reported.
        """
        rule = rule or self.rule
        open_set = tuple(open_set)
        if len(open_set) == 1 or rule == CLOSEST:
            assign = (open_set * self.n if len(open_set) == 1 else self.closest(open_set))
            if not self.feasible(assign):
                return None
            return self.key(assign), assign
        if self.kind == "sum" and self.spec.beta is None:
            return self._separable(open_set)
        return self._branch_and_bound(open_set, cutoff)

    def root_bound(self, open_set):
        return self._bound(self._candidates(tuple(open_set)))

    def _candidates(self, open_set) -> np.ndarray:
        cols = np.asarray(open_set, dtype=int)
        C = self.D[:, :, cols]
        if self.weighted:
            C = C * self.W[:, :, None]
        return C

    def _separable(self, open_set):
        C = self._candidates(open_set)
        per_node = np.array([[math.fsum(C[:, i, k]) for k in range(C.shape[2])]
                             for i in range(self.n)])
        pick = np.argmin(per_node, axis=1)
        assign = tuple(int(open_set[k]) for k in pick)
        return self.key(assign), assign

    def _bound(self, vals: np.ndarray):
        """Relaxation bound; ``vals`` is ``(N, n, p)`` with fixed nodes broadcast.

        Each node keeps one facility across all scenarios, so per-node terms
        are averaged over scenarios before minimizing over the choice; the
        per-scenario relaxation is kept where it can be tighter.
        """
        kind = self.kind
        if kind in ("sum", "max", "om", "lex"):
            lo = vals.min(axis=2)
            if kind == "sum":
                return float(vals.mean(axis=0).min(axis=1).sum())
            if kind == "max":
                coupled = vals.mean(axis=0).min(axis=1).max()
                return float(max(lo.max(axis=1).mean(), coupled))
            ranked = -np.sort(-lo, axis=1)
            if kind == "om":
                return float((ranked @ self.lam).mean())
            return tuple(float(x) for x in ranked.mean(axis=0))
        # m[s, i, k, j] = min_l |vals[s, i, k] - vals[s, j, l]|; looping over the
        # short l axis is much faster than reducing it
        a = vals[:, :, :, None]
        m = np.abs(a - vals[:, None, None, :, 0])
        for l in range(1, vals.shape[2]):
            np.minimum(m, np.abs(a - vals[:, None, None, :, l]), out=m)
        row = m.sum(axis=3) if kind in ("sad", "max_row_sad") else m.max(axis=3)   # (N, n, p)
        node = row.mean(axis=0).min(axis=1)                                      # (n,)
        if kind in ("sad", "sum_row_max"):
            return float(node.sum())
        per_scenario = row.min(axis=2).max(axis=1).mean()
        return float(max(node.max(), per_scenario))

    def _branch_and_bound(self, open_set, cutoff):
        C = self._candidates(open_set)
        p, n = len(open_set), self.n
        avg = C.mean(axis=0)
        # heaviest nodes first: those whose worst option has the largest
        # average outcome pin down the bound soonest
        heavy = avg.max(axis=1)
        order = sorted(range(n), key=lambda i: (-heavy[i], i))
        child_rank = np.argsort(avg, axis=1, kind="stable")
        choice = np.full(n, -1, dtype=int)
        best = [None, None]   # key, assign
        cut_key = None if cutoff is None else cutoff[0]
        # a tie with an incumbent from a smaller open set loses the tie-break
        cut_wins_ties = cutoff is not None and tuple(cutoff[1]) < open_set

        start = self.closest(open_set)
        if self.feasible(start):
            k0 = self.key(start)
            if cut_key is None or not _exceeds(k0, cut_key):
                best[:] = [k0, start]

        def limit():
            if best[0] is None:
                return cut_key
            if cut_key is None:
                return best[0]
            return best[0] if best[0] <= cut_key else cut_key

        def lexmin_completion():
            return tuple(int(open_set[k]) if k >= 0 else int(open_set[0]) for k in choice)

        def prune(bound):
            if _exceeds(bound, limit()):
                return True
            if cut_wins_ties and _no_better(bound, cut_key):
                return True
            return (best[0] is not None and _no_better(bound, best[0])
                    and lexmin_completion() >= best[1])

        vals = C.copy()

        def dfs(depth):
            self.check_time()
            if depth == n:
                assign = tuple(int(open_set[k]) for k in choice)
                if not self.feasible(assign):
                    return
                key = self.key(assign)
                if cut_key is not None and _exceeds(key, cut_key):
                    return
                if best[0] is None or (key, assign) < (best[0], best[1]):
                    best[:] = [key, assign]
                return
            i = order[depth]
            saved = vals[:, i, :].copy()
            for k in child_rank[i]:
                choice[i] = k
                vals[:, i, :] = C[:, i, k][:, None]
                if depth + 1 < n and prune(self._bound(vals)):
                    continue
                dfs(depth + 1)
            vals[:, i, :] = saved
            choice[i] = -1

        if p > 0 and not prune(self._bound(vals)):
            dfs(0)
        if best[0] is None:
            return None
        return best[0], best[1]


def _as_scenarios(instance, scen) -> ScenarioSet:
    return ScenarioSet.deterministic(instance) if scen is None else scen


def _provenance(method, scen: ScenarioSet, opts: SolveOptions, evaluated) -> dict:
    gen = scen.generator
    return {
        "method": method,
        "seed": None if gen is None else gen.seed,
        "generator": None if gen is None else gen.name,
        "n_scenarios": len(scen),
        "scenario_hash": scen.content_hash(),
        "open_sets_evaluated": evaluated,
        "search_seed": opts.seed if method == LOCAL_SEARCH else None,
    }


def _build(prob: _Problem, spec: ModelSpec, open_set, key, assign, status, prov) -> Solution:
    a = Assignment(open_set, assign)
    z = OutcomeVector(prob.mean_outcomes(assign), weighting=spec.weighting)
    return Solution(tuple(a.open_set), a, key_value(key), key, z, spec, status, prov)


def inner_assignment(spec: ModelSpec, open_set, scen=None, instance=None,
                     rule: Optional[str] = None) -> Assignment:
    """Optimal assignment of every node to one of the facilities in ``open_set``."""
    if instance is None:
        raise ValidationError("inner_assignment needs the instance")
    open_set = tuple(sorted(int(j) for j in open_set))
    if len(open_set) != instance.p:
        raise ValidationError(f"open set has {len(open_set)} sites, p = {instance.p}")
    spec = spec.with_rule(rule)
    prob = _Problem(spec, instance, _as_scenarios(instance, scen), spec.assignment_rule, None)
    res = prob.solve_open_set(open_set)
    if res is None:
        raise InfeasibleError(f"open set {open_set} violates the beta constraint")
    return Assignment(open_set, res[1])


def solve(spec: ModelSpec, instance, scen: Optional[ScenarioSet] = None,
          opts: Optional[SolveOptions] = None) -> Solution:
    """Optimize ``spec`` on ``instance`` under the sample average of ``scen``.

    With ``scen`` omitted the instance means form a single scenario.
    """
    opts = opts or SolveOptions()
    spec = spec.with_rule(opts.assignment_rule)
    scen = _as_scenarios(instance, scen)
    deadline = None if opts.time_limit is None else time.monotonic() + opts.time_limit
    prob = _Problem(spec, instance, scen, spec.assignment_rule, deadline)
    if opts.method == LOCAL_SEARCH:
        return _local_search(prob, spec, instance, scen, opts)
    n_sets = math.comb(instance.n, instance.p)
    if n_sets > MAX_SUBSETS:
        raise ConfigurationError(
            f"C({instance.n}, {instance.p}) = {n_sets} open sets exceeds {MAX_SUBSETS}; "
            "use method='local_search'")
    return _enumerate(prob, spec, instance, scen, opts)


def _seed(prob, subsets):
    """Best closest-rule solution over all subsets, plus subsets sorted by root bound.

    The seed gives the free-rule search a global cutoff from the start, and
    visiting promising subsets first tightens it quickly. Neither affects the
    result, only how much of the tree is pruned. Returns ``(best, subsets,
    timed_out)``; on timeout ``best`` is the best seen so far.
    """
    best, ranked = None, []
    try:
        for s in subsets:
            prob.check_time()
            a = prob.closest(s)
            if prob.feasible(a):
                cand = (prob.key(a), s, a)
                if best is None or cand < best:
                    best = cand
            ranked.append((prob.root_bound(s), s))
    except _Timeout:
        return best, subsets, True
    ranked.sort()
    return best, [s for _, s in ranked], False


def _enumerate(prob, spec, instance, scen, opts) -> Solution:
    subsets = list(itertools.combinations(range(instance.n), instance.p))
    workers = opts.workers or default_workers()
    lock = threading.Lock()
    shared = {"best": None}
    timed_out = threading.Event()

    if prob.rule == FREE and instance.p > 1:
        shared["best"], subsets, expired = _seed(prob, subsets)
        if expired:
            timed_out.set()

    def run(chunk):
        local = None
        for s in chunk:
            if timed_out.is_set():
                break
            cutoff = shared["best"]
            try:
                res = prob.solve_open_set(s, cutoff=cutoff)
            except _Timeout:
                timed_out.set()
                break
            if res is None:
                continue
            cand = (res[0], s, res[1])
            if local is None or cand < local:
                local = cand
            with lock:
                if shared["best"] is None or cand < shared["best"]:
                    shared["best"] = cand
        return local

    if workers <= 1 or len(subsets) < 2 * workers:
        results = [run(subsets)]
    else:
        # round-robin so every worker gets a share of the promising subsets
        chunks = [subsets[k::workers] for k in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    found = [r for r in results if r is not None]
    if shared["best"] is not None:
        found.append(shared["best"])
    status = TIME_LIMIT if timed_out.is_set() else OPTIMAL
    if not found:
        if status == TIME_LIMIT:
            raise _timeout_error()
        raise InfeasibleError(
            f"no open set satisfies min/max >= {spec.beta}", {"beta": spec.beta,
                                                              "open_sets": len(subsets)})
    key, open_set, assign = min(found)
    prov = _provenance(ENUMERATE_EXACT, scen, opts, len(subsets))
    return _build(prob, spec, open_set, key, assign, status, prov)


def _timeout_error():
    return TimeLimitError("time limit reached before any feasible solution was found")


def _local_search(prob: _Problem, spec, instance, scen, opts) -> Solution:
    n, p = instance.n, instance.p
    cache = {}
    timed_out = False

    def evaluate(s, cutoff=None):
        # None means infeasible or no better than ``cutoff``; cutoffs only
        # tighten, so a cached None stays valid
        s = tuple(sorted(s))
        if s not in cache:
            res = prob.solve_open_set(s, cutoff=cutoff)
            cache[s] = None if res is None else (res[0], s, res[1])
        return cache[s]

    def better(a, b):
        return a is not None and (b is None or a < b)

    def greedy():
        chosen = []
        for _ in range(p):
            best = None
            for j in range(n):
                if j in chosen:
                    continue
                s = tuple(sorted(chosen + [j]))
                part = _Problem(spec, instance.with_p(len(s)), scen, CLOSEST, None)
                res = part.solve_open_set(s, rule=CLOSEST)
                cand = None if res is None else (res[0], s)
                if better(cand, best):
                    best = cand
            if best is None:
                chosen.append(min(set(range(n)) - set(chosen)))
            else:
                chosen = list(best[1])
        return tuple(sorted(chosen))

    def incumbent(cur):
        return min(x for x in (cur, best) if x is not None) if (cur or best) else None

    def swap_descent(s):
        cur = evaluate(s, cutoff=best)
        improved = True
        while improved:
            improved = False
            for out in s:
                for inn in range(n):
                    if inn in s:
                        continue
                    t = tuple(sorted(set(s) - {out} | {inn}))
                    cand = evaluate(t, cutoff=incumbent(cur))
                    if better(cand, cur):
                        s, cur, improved = t, cand, True
                        break
                if improved:
                    break
        return cur

    rng = np.random.default_rng(opts.seed)
    best = None
    try:
        seed_set = greedy()
        # the greedy closest-rule solution is the first incumbent, so the
        # result is never worse than it, even when time runs out
        first = prob.solve_open_set(seed_set, rule=CLOSEST)
        if first is not None:
            best = (first[0], seed_set, first[1])
        res = evaluate(seed_set, cutoff=best)
        if better(res, best):
            best = res
        res = swap_descent(seed_set)
        if better(res, best):
            best = res
        for _ in range(opts.restarts):
            start = tuple(sorted(rng.choice(n, size=p, replace=False).tolist()))
            res = swap_descent(start)
            if better(res, best):
                best = res
    except _Timeout:
        timed_out = True
    if best is None:
        # fall back to anything evaluated so far
        done = [v for v in cache.values() if v is not None]
        if not done:
            if timed_out:
                raise _timeout_error()
            raise InfeasibleError(f"local search found no set with min/max >= {spec.beta}")
        best = min(done)
    key, open_set, assign = best
    prov = _provenance(LOCAL_SEARCH, scen, opts, len(cache))
    return _build(prob, spec, open_set, key, assign, TIME_LIMIT if timed_out else HEURISTIC,
                  prov)


def lexicographic_minimax(instance, scen: Optional[ScenarioSet] = None,
                          opts: Optional[SolveOptions] = None) -> Solution:
    """Minimize the worst outcome, then the second worst, and so on."""
    return solve(ModelSpec(Objective.LEX_CENTER), instance, scen, opts)
