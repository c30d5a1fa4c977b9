"""Batch study harness: models x scenario sets x sample sizes.

A run builds one :class:`~equiloc.scenarios.ScenarioSet` per (set, N)
column and solves every model against it, so all models in a column see
the same draws. Results are written as CSV/Markdown tables plus a JSON
manifest holding the config, seeds and content hashes; ``verify`` replays
a run directory from its manifest and re-evaluates every stored optimum.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import EquilocError, ValidationError
from .instance import (DEFAULT_CIRCUITY, DEFAULT_SPEED_KMH, DEFAULT_STD_FACTOR,
                       DEFAULT_TOTAL_DEMAND, load_instance, load_lehigh)
from .metrics import EquityReport, equity_report
from .models import (TABLE_MODELS, Assignment, ModelSpec, Objective, scenario_outcomes,
                     scenario_value)
from .scenarios import GeneratorSpec, ScenarioSet, saa_objective, sample
from .solver import SolveOptions, default_workers, solve

DET_DRAW = "det-draw"
DET_MEAN = "det-mean"

RESULTS_CSV = "results.csv"
RESULTS_MD = "results.md"
EQUITY_CSV = "equity_diagnostics.csv"
MANIFEST_JSON = "manifest.json"


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate a study.

    ``sets`` maps a column-group name to either ``"set1"``/``"set2"`` or a
    dict of :class:`GeneratorSpec` fields (``n_scenarios`` and ``seed`` are
    filled in per column).
    """

    instance: str = "lehigh"
    distance: Optional[str] = None
    p: int = 1
    models: list = field(default_factory=lambda: [m.value for m in TABLE_MODELS])
    sets: dict = field(default_factory=lambda: {"set1": "set1", "set2": "set2"})
    n_values: list = field(default_factory=lambda: [1, 50])
    seed: int = 20220101
    det_mode: str = DET_DRAW
    plot_n_values: list = field(default_factory=lambda: [1, 5, 10, 25, 50])
    assignment_rule: Optional[str] = None
    method: str = "enumerate_exact"
    total_demand: float = DEFAULT_TOTAL_DEMAND
    std_factor: float = DEFAULT_STD_FACTOR
    speed: float = DEFAULT_SPEED_KMH
    circuity: float = DEFAULT_CIRCUITY
    output_dir: Optional[str] = None
    base_dir: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.models:
            raise ValidationError("experiment needs at least one model")
        if not self.sets:
            raise ValidationError("experiment needs at least one scenario set")
        if not self.n_values:
            raise ValidationError("experiment needs at least one sample size")
        if any(int(n) < 1 for n in list(self.n_values) + list(self.plot_n_values)):
            raise ValidationError("sample sizes must be >= 1")
        if self.det_mode not in (DET_DRAW, DET_MEAN):
            raise ValidationError(f"det_mode must be {DET_DRAW!r} or {DET_MEAN!r}")
        for name in self.models:
            ModelSpec.parse(name)
        for name in self.sets:
            self.generator(name, 1)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d, base_dir=None if base_dir is None else str(base_dir))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def portable_dict(self) -> dict:
        """Config with absolute paths and inlined generators, for manifests."""
        d = self.to_dict()
        d.pop("output_dir", None)
        if d["instance"] != "lehigh":
            d["instance"] = str(self._resolve(d["instance"]).resolve())
        if d["distance"] is not None:
            d["distance"] = str(self._resolve(d["distance"]).resolve())
        sets = {}
        for name in self.sets:
            gen = self.generator(name, 1).to_dict()
            gen.pop("n_scenarios")
            gen.pop("seed")
            sets[name] = gen
        d["sets"] = sets
        return d

    def _resolve(self, p):
        if p is None:
            return None
        p = Path(p)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def load_instance(self):
        kw = dict(p=self.p, total_demand=self.total_demand, std_factor=self.std_factor,
                  speed=self.speed, circuity=self.circuity)
        dist = self._resolve(self.distance)
        if self.instance == "lehigh":
            return load_lehigh(distance_path=dist, **kw)
        return load_instance(self._resolve(self.instance), dist, **kw)

    def generator(self, set_name: str, n_scenarios: int) -> GeneratorSpec:
        raw = self.sets[set_name]
        if isinstance(raw, str):
            if raw.endswith(".json"):
                raw = json.loads(self._resolve(raw).read_text(encoding="utf-8"))
            else:
                return GeneratorSpec.named(raw, n_scenarios, self.seed)
        fields = {k: v for k, v in dict(raw).items() if k not in ("n_scenarios", "seed")}
        fields.setdefault("name", set_name)
        return GeneratorSpec(n_scenarios=n_scenarios, seed=self.seed, **fields)

    def model_specs(self) -> list:
        return [ModelSpec.parse(m, assignment_rule=self.assignment_rule) for m in self.models]


def column_label(n: int) -> str:
    return "DET" if n == 1 else f"SAA-{n}"


def build_scenarios(cfg: ExperimentConfig, instance, set_name: str, n: int) -> ScenarioSet:
    if n == 1 and cfg.det_mode == DET_MEAN:
        return ScenarioSet.deterministic(instance)
    return sample(instance, cfg.generator(set_name, n))


@dataclass
class Cell:
    model: str
    set_name: str
    n_scenarios: int
    open_set: tuple = ()
    locations: tuple = ()
    objective: float = math.nan
    assign: tuple = ()
    status: str = ""
    error: str = ""
    scenario_hash: str = ""
    equity: Optional[EquityReport] = None
    wall_time: float = 0.0

    @property
    def column(self) -> str:
        return column_label(self.n_scenarios)

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class PlotPoint:
    model: str
    set_name: str
    n_scenarios: int
    mean_objective: float
    sample_std: float
    open_set: tuple


@dataclass
class ResultTable:
    config: ExperimentConfig
    instance_fingerprint: str
    cells: list
    scenario_hashes: dict
    plot: list = field(default_factory=list)
    names: list = field(default_factory=list)
    wall_time: float = 0.0

    def cell(self, model: str, set_name: str, n: int) -> Cell:
        for c in self.cells:
            if (c.model, c.set_name, c.n_scenarios) == (model, set_name, n):
                return c
        raise KeyError((model, set_name, n))

    @property
    def models(self) -> list:
        return list(dict.fromkeys(c.model for c in self.cells))

    @property
    def columns(self) -> list:
        return list(dict.fromkeys((c.set_name, c.n_scenarios) for c in self.cells))


def _solve_cell(spec, instance, scen, set_name, n, opts) -> Cell:
    cell = Cell(spec.name, set_name, n, scenario_hash=scen.content_hash())
    t0 = time.perf_counter()
    try:
        sol = solve(spec, instance, scen, opts)
    except EquilocError as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.status = "error"
    else:
        cell.open_set = sol.open_set
        cell.locations = tuple(instance.label(j) for j in sol.open_set)
        cell.objective = sol.objective
        cell.assign = sol.assignment.assign
        cell.status = sol.status
        cell.equity = equity_report(sol.per_node_outcomes)
    cell.wall_time = time.perf_counter() - t0
    return cell


def _plot_point(spec, instance, scen, set_name, opts) -> PlotPoint:
    n = len(scen)
    try:
        sol = solve(spec, instance, scen, opts)
    except EquilocError:
        return PlotPoint(spec.name, set_name, n, math.nan, math.nan, ())
    z = scenario_outcomes(spec, sol.assignment.assign, scen.demand, scen.distance)
    per = np.array([scenario_value(spec, row) for row in z])
    std = float(np.std(per, ddof=1)) if n > 1 else math.nan
    return PlotPoint(spec.name, set_name, n, sol.objective, std, sol.open_set)


def ensure_writable(directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    probe = directory / ".equiloc_write_probe"
    probe.write_text("", encoding="utf-8")
    probe.unlink()
    return directory


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ResultTable:
    """Solve every (model, set, N) cell; cell failures are recorded, not raised."""
    cfg.validate()
    if cfg.output_dir is not None:
        ensure_writable(cfg._resolve(cfg.output_dir))
    t0 = time.perf_counter()
    instance = cfg.load_instance()
    specs = cfg.model_specs()
    opts = SolveOptions(method=cfg.method)
    workers = workers or default_workers()

    jobs, hashes = [], {}
    for set_name in cfg.sets:
        for n in cfg.n_values:
            scen = build_scenarios(cfg, instance, set_name, int(n))
            hashes[f"{set_name}/{column_label(int(n))}"] = scen.content_hash()
            for spec in specs:
                jobs.append((spec, instance, scen, set_name, int(n), opts))

    plot_jobs = []
    if cfg.plot_n_values:
        top = max(int(n) for n in cfg.plot_n_values)
        for set_name in cfg.sets:
            full = sample(instance, cfg.generator(set_name, top))
            for spec in specs:
                for n in cfg.plot_n_values:
                    plot_jobs.append((spec, instance, full.head(int(n)), set_name, opts))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        cells = list(pool.map(lambda j: _solve_cell(*j), jobs))
        plot = list(pool.map(lambda j: _plot_point(*j), plot_jobs))

    set_rank = {s: k for k, s in enumerate(cfg.sets)}
    model_rank = {s.name: k for k, s in enumerate(specs)}
    cells.sort(key=lambda c: (model_rank[c.model], set_rank[c.set_name], c.n_scenarios))
    plot.sort(key=lambda q: (set_rank[q.set_name], model_rank[q.model], q.n_scenarios))
    return ResultTable(cfg, instance.fingerprint, cells, hashes, plot, instance.names,
                       time.perf_counter() - t0)


# --- divergence --------------------------------------------------------------------

def divergence_report(t: ResultTable) -> dict:
    """Where do optima move when uncertainty, equity or the distribution changes?"""
    ns = sorted({c.n_scenarios for c in t.cells})
    det_n, saa_n = ns[0], ns[-1]
    sets = list(dict.fromkeys(c.set_name for c in t.cells))
    models = t.models

    def loc(m, s, n):
        try:
            c = t.cell(m, s, n)
        except KeyError:
            return None
        return c.open_set if c.ok else None

    det_vs_saa = {}
    if det_n != saa_n:
        for m in models:
            det_vs_saa[m] = {s: loc(m, s, det_n) != loc(m, s, saa_n) for s in sets}
    cross_set = {}
    if len(sets) > 1:
        for m in models:
            cross_set[m] = {n: len({loc(m, s, n) for s in sets}) > 1 for n in ns}
    classical = [m for m in models if m in (Objective.P_MEDIAN.value, Objective.P_CENTER.value)]
    equity_vs_classical = {}
    for m in models:
        if not m.startswith("equity-"):
            continue
        equity_vs_classical[m] = {
            f"{s}/{column_label(n)}": {c: loc(m, s, n) != loc(c, s, n) for c in classical}
            for s in sets for n in ns}
    differing_pairs = {}
    for s in sets:
        for n in ns:
            pairs = [(a, b) for i, a in enumerate(models) for b in models[i + 1:]
                     if loc(a, s, n) != loc(b, s, n)]
            differing_pairs[f"{s}/{column_label(n)}"] = len(pairs)
    return {
        "det_vs_saa": det_vs_saa,
        "det_vs_saa_count": sum(v for d in det_vs_saa.values() for v in d.values()),
        "cross_set": cross_set,
        "cross_set_count": sum(v for d in cross_set.values() for v in d.values()),
        "equity_vs_classical": equity_vs_classical,
        "equity_vs_classical_count": sum(
            v for d in equity_vs_classical.values() for e in d.values() for v in e.values()),
        "differing_model_pairs": differing_pairs,
    }


# --- report emission -------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _join(seq) -> str:
    return ";".join(str(int(v)) for v in seq)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


RESULT_HEADER = ["model", "set", "n_scenarios", "column", "open_set", "locations", "objective",
                 "assign", "status", "error", "scenario_hash"]
EQUITY_FIELDS = list(EquityReport.__dataclass_fields__)


def render_results_csv(t: ResultTable) -> str:
    rows = [[c.model, c.set_name, c.n_scenarios, c.column, _join(c.open_set),
             ";".join(c.locations), _fmt(c.objective) if c.ok else "", _join(c.assign),
             c.status, c.error, c.scenario_hash] for c in t.cells]
    return _csv_text(RESULT_HEADER, rows)


def render_equity_csv(t: ResultTable) -> str:
    rows = []
    for c in t.cells:
        vals = c.equity.as_dict() if c.equity else {}
        rows.append([c.model, c.set_name, c.n_scenarios, _join(c.open_set)]
                    + [_fmt(vals.get(k)) for k in EQUITY_FIELDS])
    return _csv_text(["model", "set", "n_scenarios", "open_set"] + EQUITY_FIELDS, rows)


def render_plot_csv(t: ResultTable, set_name: str) -> str:
    rows = [[q.model, q.n_scenarios, _fmt(q.mean_objective), _fmt(q.sample_std),
             _join(q.open_set)] for q in t.plot if q.set_name == set_name]
    return _csv_text(["model", "n_scenarios", "mean_objective", "sample_std", "open_set"], rows)


def render_markdown(t: ResultTable) -> str:
    lines = []
    ns = sorted({c.n_scenarios for c in t.cells})
    for s in dict.fromkeys(c.set_name for c in t.cells):
        lines.append(f"## Optimal locations under {s}\n")
        lines.append("| Model | " + " | ".join(column_label(n) for n in ns) + " |")
        lines.append("|---" * (len(ns) + 1) + "|")
        for m in t.models:
            row = []
            for n in ns:
                c = t.cell(m, s, n)
                row.append(", ".join(c.locations) if c.ok else f"error: {c.error}")
            lines.append(f"| {Objective(m).display_name} | " + " | ".join(row) + " |")
        lines.append("")
    div = divergence_report(t)
    lines.append("## Divergence\n")
    lines.append(f"- models whose DET and SAA optima differ (per set): {div['det_vs_saa_count']}")
    lines.append(f"- models whose optimum changes across sets (per N): {div['cross_set_count']}")
    lines.append(f"- equity optima differing from p-median/p-center: "
                 f"{div['equity_vs_classical_count']}")
    lines.append("")
    lines.append(f"Total wall time: {t.wall_time:.2f} s")
    return "\n".join(lines) + "\n"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def render_manifest(t: ResultTable, files: dict) -> str:
    cfg = t.config.portable_dict()
    manifest = {
        "equiloc_version": __version__,
        "config": cfg,
        "instance_fingerprint": t.instance_fingerprint,
        "scenario_hashes": t.scenario_hashes,
        "file_hashes": {name: _sha(text) for name, text in sorted(files.items())
                        if name.endswith(".csv")},
    }
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def emit_reports(t: ResultTable, directory) -> list:
    """Write all report files; content is rendered in memory before touching disk."""
    files = {
        RESULTS_CSV: render_results_csv(t),
        EQUITY_CSV: render_equity_csv(t),
        RESULTS_MD: render_markdown(t),
    }
    for s in dict.fromkeys(q.set_name for q in t.plot):
        files[f"plotdata_{s}.csv"] = render_plot_csv(t, s)
    files[MANIFEST_JSON] = render_manifest(t, files)
    directory = ensure_writable(directory)
    written = []
    for name, text in files.items():
        path = directory / name
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)
    return written


# --- verification ----------------------------------------------------------------------

@dataclass
class VerifyReport:
    rows_checked: int = 0
    max_discrepancy: float = 0.0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def verify_run(directory) -> VerifyReport:
    """Rebuild the scenarios of a run and re-evaluate each stored assignment."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_JSON).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(manifest["config"], base_dir=None)
    instance = cfg.load_instance()
    report = VerifyReport()
    if instance.fingerprint != manifest["instance_fingerprint"]:
        report.mismatches.append("instance fingerprint differs from manifest")
        return report
    results_text = (directory / RESULTS_CSV).read_text(encoding="utf-8")
    expected = manifest.get("file_hashes", {}).get(RESULTS_CSV)
    if expected is not None and _sha(results_text) != expected:
        report.mismatches.append("results.csv hash differs from manifest")
    cache = {}
    for row in csv.DictReader(io.StringIO(results_text)):
        if row["error"]:
            continue
        key = (row["set"], int(row["n_scenarios"]))
        if key not in cache:
            scen = build_scenarios(cfg, instance, *key)
            want = manifest["scenario_hashes"].get(f"{key[0]}/{column_label(key[1])}")
            if scen.content_hash() != want:
                report.mismatches.append(f"scenario hash mismatch for {key}")
            cache[key] = scen
        spec = ModelSpec.parse(row["model"], assignment_rule=cfg.assignment_rule)
        a = Assignment([int(v) for v in row["open_set"].split(";")],
                       [int(v) for v in row["assign"].split(";")])
        value = saa_objective(spec, a, cache[key], instance)
        stored = float(row["objective"])
        gap = abs(value - stored)
        report.rows_checked += 1
        report.max_discrepancy = max(report.max_discrepancy, gap)
        if gap != 0.0:
            report.mismatches.append(f"{row['model']} {key}: stored {stored!r}, "
                                     f"re-evaluated {value!r}")
    return report
