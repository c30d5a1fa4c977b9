"""Sample-average approximation: how the p-median site shifts as N grows."""

import equiloc as eq

inst = eq.load_lehigh()
spec = eq.ModelSpec.parse("p-median")
for set_name in ("set1", "set2"):
    full = eq.sample(inst, eq.GeneratorSpec.named(set_name, 50, seed=0))
    for n in (1, 5, 10, 25, 50):
        sol = eq.solve(spec, inst, full.head(n))
        print(f"{set_name} N={n:2d}  {inst.label(sol.open_set[0]):28s} {sol.objective:14.2f}")
