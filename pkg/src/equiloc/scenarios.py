"""Scenario generation and sample-average objectives.

A :class:`ScenarioSet` stacks ``N`` independent draws of node demand and
pairwise travel time. Draws come from a counter-based generator (Philox)
keyed by ``(seed, instance fingerprint, scenario index, stream)``, so a set
is a pure function of its inputs and growing ``N`` leaves the earlier
scenarios untouched.

Two named recipes reproduce the Lehigh study:

* ``set1`` - lognormal demand, travel time uniform on ``mu +/- 10`` minutes;
* ``set2`` - lognormal demand, lognormal travel time with std equal to its mean.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError
from .models import Assignment, ModelSpec, Scenario, average_key, key_value, scenario_outcomes

# Lower end of the uniform travel-time interval for nearby pairs (minutes).
UNIFORM_FLOOR = 0.1

_DEMAND_STREAM = 0
_DISTANCE_STREAM = 1


@dataclass(frozen=True)
class GeneratorSpec:
    """Distribution recipe for a scenario set.

    ``distance`` is ``"uniform"`` (half-width ``delta`` minutes) or
    ``"lognormal"`` (std = ``distance_cv`` x mean). Demand is always lognormal
    with the instance's per-node mean and std.
    """

    n_scenarios: int = 50
    seed: int = 0
    distance: str = "uniform"
    delta: float = 10.0
    distance_cv: float = 1.0
    demand: str = "lognormal"
    name: str = "custom"

    def __post_init__(self):
        if int(self.n_scenarios) < 1:
            raise ValidationError(f"n_scenarios must be >= 1, got {self.n_scenarios}")
        if self.distance not in ("uniform", "lognormal"):
            raise ValidationError(f"distance distribution must be uniform or lognormal, "
                                  f"got {self.distance!r}")
        if self.demand != "lognormal":
            raise ValidationError(f"demand distribution must be lognormal, got {self.demand!r}")
        if self.delta < 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        if self.distance_cv < 0:
            raise ValidationError(f"distance_cv must be >= 0, got {self.distance_cv}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "n_scenarios", int(self.n_scenarios))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "distance_cv", float(self.distance_cv))

    @classmethod
    def set1(cls, n_scenarios: int = 50, seed: int = 0, delta: float = 10.0) -> "GeneratorSpec":
        return cls(n_scenarios, seed, "uniform", delta=delta, name="set1")

    @classmethod
    def set2(cls, n_scenarios: int = 50, seed: int = 0) -> "GeneratorSpec":
        return cls(n_scenarios, seed, "lognormal", distance_cv=1.0, name="set2")

    @classmethod
    def named(cls, name: str, n_scenarios: int = 50, seed: int = 0) -> "GeneratorSpec":
        if name == "set1":
            return cls.set1(n_scenarios, seed)
        if name == "set2":
            return cls.set2(n_scenarios, seed)
        raise ValidationError(f"unknown scenario set {name!r}; use set1, set2 or a JSON file")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown generator fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "GeneratorSpec":
        return GeneratorSpec(**{**asdict(self), **changes})


def lognormal_from_mean_std(mean: float, std: float):
    """Log-scale ``(location, shape)`` giving a lognormal with this mean and std."""
    if not mean > 0:
        raise ValidationError(f"lognormal mean must be positive, got {mean}")
    if std < 0:
        raise ValidationError(f"lognormal std must be non-negative, got {std}")
    shape2 = math.log1p((std / mean) ** 2)
    return math.log(mean) - shape2 / 2.0, math.sqrt(shape2)


def _lognormal(mean: np.ndarray, std: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Vectorised lognormal transform; zero std gives the mean exactly."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    out = np.array(mean, dtype=float, copy=True)
    live = std > 0
    if np.any(live):
        mu, sd = mean[live], std[live]
        shape2 = np.log1p((sd / mu) ** 2)
        out[live] = np.exp(np.log(mu) - shape2 / 2.0 + np.sqrt(shape2) * normals[live])
    return out


def _stream(seed: int, fingerprint: str, scenario: int, which: int) -> np.random.Generator:
    fp_word = int(fingerprint[:16], 16)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(fp_word, scenario, which))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """``N`` scenarios stacked as ``demand (N, n)`` and ``distance (N, n, n)``."""

    demand: np.ndarray
    distance: np.ndarray
    generator: Optional[GeneratorSpec] = None
    instance_fingerprint: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.demand, dtype=float, copy=True)
        d = np.array(self.distance, dtype=float, copy=True)
        if w.ndim != 2 or d.ndim != 3 or d.shape != (w.shape[0], w.shape[1], w.shape[1]):
            raise ValidationError(f"inconsistent scenario shapes {w.shape} and {d.shape}")
        if w.shape[0] == 0:
            raise ValidationError("scenario set is empty")
        if np.any(w < 0) or np.any(d < 0) or not (np.all(np.isfinite(w))
                                                   and np.all(np.isfinite(d))):
            raise ValidationError("scenario demand and travel times must be finite and >= 0")
        if np.any(np.diagonal(d, axis1=1, axis2=2) != 0):
            raise ValidationError("scenario travel-time diagonals must be 0")
        if self.generator is not None and self.generator.n_scenarios != w.shape[0]:
            raise ValidationError("scenario count disagrees with the generator spec")
        w.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "demand", w)
        object.__setattr__(self, "distance", d)

    def __len__(self) -> int:
        return self.demand.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield Scenario(self.demand[k], self.distance[k])

    def __getitem__(self, k) -> Scenario:
        return Scenario(self.demand[k], self.distance[k])

    @property
    def n_nodes(self) -> int:
        return self.demand.shape[1]

    def mean_distance(self) -> np.ndarray:
        return self.distance.mean(axis=0)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.demand.shape}".encode())
        h.update(np.ascontiguousarray(self.demand, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.distance, dtype="<f8").tobytes())
        return h.hexdigest()

    def head(self, n_scenarios: int) -> "ScenarioSet":
        """The first ``n_scenarios`` draws (identical to sampling with that N)."""
        gen = None if self.generator is None else self.generator.replace(
            n_scenarios=n_scenarios)
        return ScenarioSet(self.demand[:n_scenarios], self.distance[:n_scenarios], gen,
                           self.instance_fingerprint, dict(self.metadata))

    @classmethod
    def deterministic(cls, instance) -> "ScenarioSet":
        """A single scenario equal to the instance means."""
        return cls(instance.demand_mean[None, :], instance.distance[None, :, :], None,
                   instance.fingerprint, {"mode": "mean"})


def sample(instance, gen: GeneratorSpec) -> ScenarioSet:
    """Draw ``gen.n_scenarios`` independent scenarios around the instance means."""
    n = instance.n
    mu_w, sd_w = instance.demand_mean, instance.demand_std
    bad = np.flatnonzero((mu_w == 0) & (sd_w > 0))
    if bad.size:
        raise ValidationError(f"node {bad[0]} has zero mean demand but positive std")
    mu_d = instance.distance
    off = ~np.eye(n, dtype=bool)
    meta = {"mode": "sampled"}
    if gen.distance == "lognormal":
        zero = np.argwhere(off & (mu_d == 0))
        if zero.size:
            i, j = zero[0]
            raise ValidationError(
                f"lognormal travel time needs a positive mean; d[{i}][{j}] = 0 "
                f"({instance.nodes[i].name} -> {instance.nodes[j].name})")
        sd_d = gen.distance_cv * mu_d
    else:
        lo = np.minimum(mu_d, np.maximum(UNIFORM_FLOOR, mu_d - gen.delta))
        hi = mu_d + gen.delta
        truncated = off & (mu_d - gen.delta < lo)
        meta["truncated_pairs"] = int(truncated.sum())

    fp = instance.fingerprint
    W = np.empty((gen.n_scenarios, n))
    D = np.empty((gen.n_scenarios, n, n))
    for k in range(gen.n_scenarios):
        rng_w = _stream(gen.seed, fp, k, _DEMAND_STREAM)
        W[k] = _lognormal(mu_w, sd_w, rng_w.standard_normal(n))
        rng_d = _stream(gen.seed, fp, k, _DISTANCE_STREAM)
        if gen.distance == "lognormal":
            dk = _lognormal(mu_d, sd_d, rng_d.standard_normal((n, n)))
        else:
            dk = lo + (hi - lo) * rng_d.random((n, n))
        np.fill_diagonal(dk, 0.0)
        D[k] = dk
    return ScenarioSet(W, D, gen, fp, meta)


def saa_objective(spec: ModelSpec, a: Assignment, scen: ScenarioSet, instance=None) -> float:
    """Average of the model objective over the scenarios, assignment held fixed.

    Demand-weighted models use each scenario's own demand draw.
    """
    if len(scen) == 0:
        raise ValidationError("scenario set is empty")
    if instance is not None:
        a.validate(instance.n, instance.p)
    z = scenario_outcomes(spec, a.assign, scen.demand, scen.distance)
    return key_value(average_key(spec, z))


def saa_key(spec: ModelSpec, a: Assignment, scen: ScenarioSet):
    z = scenario_outcomes(spec, a.assign, scen.demand, scen.distance)
    return average_key(spec, z)


# --- CSV bundle -----------------------------------------------------------------

MANIFEST = "manifest.json"


def _scenario_file(k: int) -> str:
    return f"scenario_{k:04d}.csv"


def save_scenarios(scen: ScenarioSet, directory) -> Path:
    """Write one CSV per scenario plus ``manifest.json`` with the content hash.

    Scenario files have a header ``demand,d_0,...`` and one row per node.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = scen.n_nodes
    header = ["demand"] + [f"d_{j}" for j in range(n)]
    for k, (w, d) in enumerate(scen):
        with (directory / _scenario_file(k)).open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for i in range(n):
                wr.writerow([repr(float(w[i]))] + [repr(float(x)) for x in d[i]])
    manifest = {
        "n_scenarios": len(scen),
        "n_nodes": n,
        "generator": None if scen.generator is None else scen.generator.to_dict(),
        "instance_fingerprint": scen.instance_fingerprint,
        "metadata": scen.metadata,
        "content_hash": scen.content_hash(),
        "files": [_scenario_file(k) for k in range(len(scen))],
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return directory


def load_scenarios(directory) -> ScenarioSet:
    """Read a bundle written by :func:`save_scenarios`; the hash must match."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{directory}: unreadable manifest ({exc})") from None
    n = manifest["n_nodes"]
    W, D = [], []
    for name in manifest["files"]:
        with (directory / name).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if len(rows) != n + 1:
            raise ParseError(f"{name}: expected {n} data rows, found {len(rows) - 1}")
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:]])
        except ValueError:
            raise ParseError(f"{name}: non-numeric entry") from None
        if data.shape != (n, n + 1):
            raise ParseError(f"{name}: expected {n + 1} columns per row")
        W.append(data[:, 0])
        D.append(data[:, 1:])
    gen = manifest.get("generator")
    scen = ScenarioSet(np.array(W), np.array(D),
                       None if gen is None else GeneratorSpec.from_dict(gen),
                       manifest.get("instance_fingerprint", ""), manifest.get("metadata", {}))
    if scen.content_hash() != manifest["content_hash"]:
        raise ValidationError(f"{directory}: scenario content does not match manifest hash")
    return scen
