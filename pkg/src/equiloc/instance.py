"""Location instances: nodes, demand and travel-time matrices.

An :class:`Instance` bundles the demand nodes (every node is also a candidate
facility site), a square matrix of travel times in minutes, the mean and
standard deviation of demand at each node, and the number of facilities ``p``.
Instances are immutable once built and can be shared freely between workers.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError

EARTH_RADIUS_KM = 6371.0

# Proxy used when no travel-time matrix is supplied.
DEFAULT_SPEED_KMH = 60.0
DEFAULT_CIRCUITY = 1.3

DEFAULT_TOTAL_DEMAND = 1000.0
DEFAULT_STD_FACTOR = 0.5

_UNIT_TO_MINUTES = {"minutes": 1.0, "min": 1.0, "seconds": 1.0 / 60.0, "s": 1.0 / 60.0,
                    "hours": 60.0, "h": 60.0}


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    population: int
    lat: Optional[float] = None
    lon: Optional[float] = None

    @property
    def has_coordinates(self) -> bool:
        return self.lat is not None and self.lon is not None


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """A discrete location problem on ``len(nodes)`` sites.

    Attributes:
        nodes: Demand nodes, ids contiguous from 0.
        distance: ``(n, n)`` travel times in minutes; row ``i`` is travel from node ``i``.
        demand_mean: Mean demand per node (service units).
        demand_std: Standard deviation of demand per node.
        p: Number of facilities to open.
    """

    nodes: tuple
    distance: np.ndarray
    demand_mean: np.ndarray
    demand_std: np.ndarray
    p: int = 1
    _fingerprint: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        n = len(nodes)
        if n == 0:
            raise ValidationError("instance has no nodes")
        ids = [nd.id for nd in nodes]
        if len(set(ids)) != n:
            raise ValidationError(f"duplicate node ids in {ids}")
        if ids != list(range(n)):
            raise ValidationError("node ids must be contiguous from 0 and listed in order")
        for nd in nodes:
            if nd.population < 0:
                raise ValidationError(f"node {nd.id} ({nd.name}) has negative population")

        d = _frozen(self.distance)
        if d.shape != (n, n):
            raise ValidationError(f"distance matrix has shape {d.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("distance matrix has non-finite entries")
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise ValidationError(f"negative travel time d[{i}][{j}] = {d[i, j]}")
        if np.any(np.diag(d) != 0):
            i = int(np.flatnonzero(np.diag(d) != 0)[0])
            raise ValidationError(f"diagonal entry d[{i}][{i}] must be 0")
        mu = _frozen(self.demand_mean)
        sd = _frozen(self.demand_std)
        for name, v in (("demand_mean", mu), ("demand_std", sd)):
            if v.shape != (n,):
                raise ValidationError(f"{name} has shape {v.shape}, expected {(n,)}")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValidationError(f"{name} must be finite and non-negative")
        if not (isinstance(self.p, (int, np.integer)) and 1 <= self.p <= n):
            raise ValidationError(f"p must be an integer in [1, {n}], got {self.p!r}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "demand_mean", mu)
        object.__setattr__(self, "demand_std", sd)
        object.__setattr__(self, "_fingerprint", self._compute_fingerprint())

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def names(self) -> list:
        return [nd.name for nd in self.nodes]

    @property
    def populations(self) -> np.ndarray:
        return np.array([nd.population for nd in self.nodes], dtype=np.int64)

    @property
    def fingerprint(self) -> str:
        """SHA-256 over the data that scenario sampling depends on (p excluded)."""
        return self._fingerprint

    def _compute_fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"n={self.n}".encode())
        for nd in self.nodes:
            h.update(f"|{nd.name}|{nd.population}".encode())
        for arr in (self.distance, self.demand_mean, self.demand_std):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def with_p(self, p: int) -> "Instance":
        return Instance(self.nodes, self.distance, self.demand_mean, self.demand_std, p)

    def with_distance(self, distance) -> "Instance":
        return Instance(self.nodes, distance, self.demand_mean, self.demand_std, self.p)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.nodes == other.nodes and self.p == other.p
                and np.array_equal(self.distance, other.distance)
                and np.array_equal(self.demand_mean, other.demand_mean)
                and np.array_equal(self.demand_std, other.demand_std))

    __hash__ = None

    def label(self, j: int) -> str:
        """Node name with its 1-based index, e.g. ``"Catasauqua (5)"``."""
        return f"{self.nodes[j].name} ({j + 1})"


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in km; broadcasts over array inputs."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def build_distance_matrix(nodes: Sequence[Node], speed: float = DEFAULT_SPEED_KMH,
                          circuity: float = DEFAULT_CIRCUITY) -> np.ndarray:
    """Travel-time proxy in minutes: haversine km x circuity / speed x 60."""
    if speed <= 0:
        raise ConfigurationError(f"speed must be positive, got {speed}")
    if circuity < 1:
        raise ConfigurationError(f"circuity must be >= 1, got {circuity}")
    missing = [nd.name for nd in nodes if not nd.has_coordinates]
    if missing:
        raise ConfigurationError(f"nodes without coordinates: {', '.join(missing)}")
    lat = np.array([nd.lat for nd in nodes], dtype=float)
    lon = np.array([nd.lon for nd in nodes], dtype=float)
    km = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    minutes = km * circuity / speed * 60.0
    np.fill_diagonal(minutes, 0.0)
    return minutes


def derive_demand(nodes: Sequence[Node], total_demand: float = DEFAULT_TOTAL_DEMAND,
                  std_factor: float = DEFAULT_STD_FACTOR):
    """Split ``total_demand`` across nodes in proportion to population.

    Returns ``(mean, std)`` with ``std = std_factor * mean``. Means keep full
    precision; use :func:`rounded_demand` for the integer display view.
    """
    pop = np.array([nd.population for nd in nodes], dtype=float)
    total_pop = pop.sum()
    if total_pop <= 0:
        raise ValidationError("total population is zero; cannot derive demand weights")
    if total_demand <= 0:
        raise ValidationError(f"total_demand must be positive, got {total_demand}")
    if std_factor < 0:
        raise ValidationError(f"std_factor must be non-negative, got {std_factor}")
    mean = pop / total_pop * total_demand
    return mean, std_factor * mean


def rounded_demand(mean) -> np.ndarray:
    return np.floor(np.asarray(mean, dtype=float) + 0.5).astype(np.int64)


# --- CSV ingestion -----------------------------------------------------------

def _opt_float(raw: str, row: int, col: str):
    raw = (raw or "").strip()
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"row {row}: column {col!r} is not a number: {raw!r}") from None


def read_nodes_csv(path):
    """Parse a nodes CSV; returns ``(nodes, demand_columns_or_None)``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file, header required")
        header = [h.strip() for h in reader.fieldnames]
        for col in ("id", "name", "population"):
            if col not in header:
                raise ParseError(f"{path}: header lacks required column {col!r}")
        has_demand = "demand_mean" in header and "demand_std" in header
        nodes, means, stds = [], [], []
        for row_no, row in enumerate(reader, start=2):
            row = {k.strip(): (v if v is not None else "") for k, v in row.items() if k}
            try:
                node_id = int(row["id"])
                pop = int(row["population"].replace(",", "").replace("_", ""))
            except (ValueError, AttributeError):
                raise ParseError(f"{path}: row {row_no}: id/population must be integers") from None
            if pop < 0:
                raise ValidationError(f"{path}: row {row_no}: negative population {pop}")
            lat = _opt_float(row.get("lat", ""), row_no, "lat")
            lon = _opt_float(row.get("lon", ""), row_no, "lon")
            if (lat is None) != (lon is None):
                raise ParseError(f"{path}: row {row_no}: lat and lon must be given together")
            nodes.append(Node(node_id, row["name"].strip(), pop, lat, lon))
            if has_demand:
                means.append(_opt_float(row["demand_mean"], row_no, "demand_mean"))
                stds.append(_opt_float(row["demand_std"], row_no, "demand_std"))
    if not nodes:
        raise ParseError(f"{path}: no data rows")
    ids = [nd.id for nd in nodes]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"{path}: duplicate node ids {dup}")
    nodes.sort(key=lambda nd: nd.id)
    demand = None
    if has_demand:
        if any(v is None for v in means + stds):
            raise ParseError(f"{path}: demand_mean/demand_std must be filled on every row")
        order = np.argsort(ids, kind="stable")
        demand = (np.array(means)[order], np.array(stds)[order])
    return nodes, demand


def read_distance_csv(path, n: Optional[int] = None, units: Optional[str] = None) -> np.ndarray:
    """Read a square headerless travel-time matrix.

    An optional first line ``# units=hours`` (or seconds/minutes) declares the
    unit; values are converted to minutes. ``units`` overrides the file flag.
    """
    path = Path(path)
    rows = []
    file_units = None
    with path.open(newline="", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                key, _, val = s.lstrip("#").partition("=")
                if key.strip() == "units":
                    file_units = val.strip()
                continue
            try:
                rows.append([float(x) for x in next(csv.reader([s]))])
            except ValueError:
                raise ParseError(f"{path}: row {line_no}: non-numeric entry") from None
    m = len(rows)
    if m == 0 or any(len(r) != m for r in rows):
        raise ParseError(f"{path}: distance matrix must be square, got {m} rows "
                         f"with lengths {sorted({len(r) for r in rows})}")
    if n is not None and m != n:
        raise ValidationError(f"{path}: matrix is {m}x{m} but there are {n} nodes")
    unit = (units or file_units or "minutes").lower()
    if unit not in _UNIT_TO_MINUTES:
        raise ConfigurationError(f"unknown distance unit {unit!r}")
    d = np.array(rows, dtype=float)
    if np.any(np.diag(d) != 0):
        raise ValidationError(f"{path}: diagonal of the distance matrix must read 0")
    factor = _UNIT_TO_MINUTES[unit]
    return d if factor == 1.0 else d * factor


def load_instance(path, distance_path=None, *, p: int = 1,
                  total_demand: float = DEFAULT_TOTAL_DEMAND,
                  std_factor: float = DEFAULT_STD_FACTOR,
                  speed: float = DEFAULT_SPEED_KMH, circuity: float = DEFAULT_CIRCUITY,
                  distance_units: Optional[str] = None) -> Instance:
    """Load an instance from a nodes CSV and an optional distance CSV.

    Without a distance file the matrix is built from coordinates. Demand comes
    from ``demand_mean``/``demand_std`` columns when present, otherwise it is
    derived from population.
    """
    nodes, demand = read_nodes_csv(path)
    if distance_path is not None:
        distance = read_distance_csv(distance_path, len(nodes), distance_units)
    elif all(nd.has_coordinates for nd in nodes):
        distance = build_distance_matrix(nodes, speed, circuity)
    else:
        raise ConfigurationError(
            f"{path}: no distance matrix supplied and some nodes lack coordinates")
    if demand is None:
        demand = derive_demand(nodes, total_demand, std_factor)
    return Instance(tuple(nodes), distance, demand[0], demand[1], p)


def save_instance(instance: Instance, path, distance_path=None) -> None:
    """Write ``instance`` so that :func:`load_instance` reproduces it exactly.

    Floats are written with ``repr`` (shortest round-tripping form).
    """
    path = Path(path)
    distance_path = Path(distance_path) if distance_path else path.with_name(
        path.stem + "_distance.csv")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "population", "lat", "lon", "demand_mean", "demand_std"])
        for nd, mu, sd in zip(instance.nodes, instance.demand_mean, instance.demand_std):
            w.writerow([nd.id, nd.name, nd.population,
                        "" if nd.lat is None else repr(float(nd.lat)),
                        "" if nd.lon is None else repr(float(nd.lon)),
                        repr(float(mu)), repr(float(sd))])
    write_matrix_csv(instance.distance, distance_path)
    return distance_path


def write_matrix_csv(matrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix, dtype=float):
            w.writerow([repr(float(x)) for x in row])


def lehigh_csv_path() -> Path:
    return Path(str(resources.files("equiloc") / "data" / "lehigh.csv"))


def load_lehigh(p: int = 1, distance_path=None, **kwargs) -> Instance:
    """The bundled 21-node Lehigh Valley instance (2010 census populations).

    Travel times default to the haversine proxy (x1.3 circuity at 60 km/h)
    since the original road-network times are not published.
    """
    return load_instance(lehigh_csv_path(), distance_path, p=p, **kwargs)


def from_arrays(distance, demand_mean=None, demand_std=None, p: int = 1,
                names=None, populations=None) -> Instance:
    """Build an instance directly from arrays (handy for tests and notebooks)."""
    d = np.asarray(distance, dtype=float)
    n = d.shape[0]
    mu = np.ones(n) if demand_mean is None else np.asarray(demand_mean, dtype=float)
    sd = np.zeros(n) if demand_std is None else np.asarray(demand_std, dtype=float)
    names = names or [f"n{i}" for i in range(n)]
    pops = populations if populations is not None else [0] * n
    nodes = tuple(Node(i, str(names[i]), int(pops[i])) for i in range(n))
    return Instance(nodes, d, mu, sd, p)


def total_population(instance: Instance) -> int:
    return sum(nd.population for nd in instance.nodes)
