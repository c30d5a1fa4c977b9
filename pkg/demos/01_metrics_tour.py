"""Inequity indices on a few outcome vectors, plus a Pigou-Dalton transfer."""

import numpy as np

import equiloc as eq

vectors = {
    "equal": [4, 4, 4, 4],
    "one outlier": [1, 1, 1, 9],
    "spread": [1, 3, 5, 7],
}
for name, z in vectors.items():
    r = eq.equity_report(z)
    print(f"{name:12s} range={r.range:5.2f} mad={r.mad:6.2f} var={r.variance:6.2f} "
          f"gini={r.gini:.4f} min/max={r.ratio_min_max:.3f}")

# a regressive transfer (1 unit from the smallest entry to the largest) must not lower the Gini index
z = np.array([1.0, 3.0, 5.0, 7.0])
print("transfer respects Pigou-Dalton:", eq.check_pigou_dalton(eq.gini, z, 0, 3, 1.0))
print("deviation from 4 (sum of |z-4|):", eq.deviation_from_target(z, 4.0, "sum_abs"))
