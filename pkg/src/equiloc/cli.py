"""``equiloc`` command line: solve, experiment, verify, metrics.

Exit codes: 0 success, 1 verification mismatch, 2 validation error,
3 infeasible, 4 time limit reached (incumbent still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InfeasibleError, ValidationError
from .experiment import ExperimentConfig, divergence_report, emit_reports, run_experiment
from .experiment import verify_run
from .instance import load_instance, load_lehigh
from .metrics import deviation_from_target, equity_report
from .models import ModelSpec
from .scenarios import GeneratorSpec, ScenarioSet, sample
from .solver import TIME_LIMIT, SolveOptions, TimeLimitError, solve

EXIT_OK, EXIT_MISMATCH, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_TIME_LIMIT = 0, 1, 2, 3, 4


def _instance(args):
    if args.instance == "lehigh":
        return load_lehigh(p=args.p, distance_path=args.distance)
    return load_instance(args.instance, args.distance, p=args.p)


def _generator(args):
    if args.set is None:
        return None
    n = args.n if args.n is not None else 50
    if args.set in ("set1", "set2"):
        return GeneratorSpec.named(args.set, n, args.seed)
    data = json.loads(Path(args.set).read_text(encoding="utf-8"))
    data.update(n_scenarios=n, seed=args.seed)
    return GeneratorSpec.from_dict(data)


def cmd_solve(args) -> int:
    inst = _instance(args)
    kwargs = {"assignment_rule": args.rule, "beta": args.beta}
    if args.weights:
        kwargs["ordered_weights"] = tuple(float(x) for x in args.weights.split(","))
    spec = ModelSpec.parse(args.model, **kwargs)
    gen = _generator(args)
    scen = ScenarioSet.deterministic(inst) if gen is None else sample(inst, gen)
    opts = SolveOptions(method=args.method, time_limit=args.time_limit)
    sol = solve(spec, inst, scen, opts)
    text = json.dumps(sol.to_dict(inst), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_TIME_LIMIT if sol.status == TIME_LIMIT else EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.output:
        cfg.output_dir = str(Path(args.output).resolve())
    out = cfg._resolve(cfg.output_dir or "equiloc_results")
    table = run_experiment(cfg, workers=args.workers)
    emit_reports(table, out)
    div = divergence_report(table)
    print(f"wrote {out} ({len(table.cells)} cells, {table.wall_time:.2f} s); "
          f"DET != SAA in {div['det_vs_saa_count']} model/set pairs")
    return EXIT_OK


def cmd_verify(args) -> int:
    rep = verify_run(args.run)
    print(f"checked {rep.rows_checked} rows, max discrepancy {rep.max_discrepancy!r}")
    for m in rep.mismatches:
        print(f"MISMATCH {m}")
    return EXIT_OK if rep.ok else EXIT_MISMATCH


def read_outcomes(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    tokens = text.replace(",", " ").split()
    try:
        return np.array([float(t) for t in tokens])
    except ValueError:
        raise ValidationError(f"{path}: outcomes must be numbers") from None


def cmd_metrics(args) -> int:
    x = read_outcomes(args.outcomes)
    out = equity_report(x).as_dict()
    if args.target is not None:
        out["deviation_sum_abs"] = deviation_from_target(x, args.target, "sum_abs")
        out["deviation_max_abs"] = deviation_from_target(x, args.target, "max_abs")
    print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="equiloc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one model")
    s.add_argument("--instance", required=True, help="nodes CSV, or 'lehigh'")
    s.add_argument("--distance", help="travel-time matrix CSV (minutes)")
    s.add_argument("--model", required=True)
    s.add_argument("--p", type=int, default=1)
    s.add_argument("--set", help="set1, set2 or a generator JSON file; omit for means")
    s.add_argument("--n", type=int, help="number of scenarios (default 50)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rule", choices=["closest", "free"])
    s.add_argument("--beta", type=float)
    s.add_argument("--weights", help="comma-separated ordered-median weights")
    s.add_argument("--method", default="enumerate_exact",
                   choices=["enumerate_exact", "local_search"])
    s.add_argument("--time-limit", type=float)
    s.add_argument("--out", help="write the solution JSON here instead of stdout")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a full study from a config JSON")
    e.add_argument("--config", required=True)
    e.add_argument("--output", help="override the config's output_dir")
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_experiment)

    v = sub.add_parser("verify", help="re-evaluate every objective of a run directory")
    v.add_argument("--run", required=True)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("metrics", help="inequity indices of an outcome vector")
    m.add_argument("--outcomes", required=True, help="file of numbers (comma/space separated)")
    m.add_argument("--target", type=float)
    m.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TimeLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIME_LIMIT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValidationError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
