"""Run a reduced study, write the reports and re-verify them."""

import sys
import tempfile

from equiloc.experiment import (ExperimentConfig, divergence_report, emit_reports,
                                run_experiment, verify_run)

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="equiloc_")
cfg = ExperimentConfig(models=["p-median", "p-center", "equity-1", "equity-2"],
                       n_values=[1, 10], plot_n_values=[1, 5, 10])
table = run_experiment(cfg)
emit_reports(table, out)
div = divergence_report(table)
print(f"reports in {out}")
print("DET differs from SAA in", div["det_vs_saa_count"], "model/set pairs")
rep = verify_run(out)
print(f"verify: {rep.rows_checked} rows, max discrepancy {rep.max_discrepancy}")
