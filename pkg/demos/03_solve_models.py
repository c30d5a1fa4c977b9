"""Solve every table model on the deterministic Lehigh instance, p = 1 and p = 2."""

import equiloc as eq

for p in (1, 2):
    inst = eq.load_lehigh(p=p)
    print(f"--- p = {p}")
    for name in eq.TABLE_MODELS:
        sol = eq.solve(eq.ModelSpec.parse(name), inst)
        sites = ", ".join(inst.label(j) for j in sol.open_set)
        print(f"{name:14s} {sol.objective:14.3f}  {sites}")

inst = eq.load_lehigh()
lex = eq.solve(eq.ModelSpec.parse("lex-center"), inst)
print("lex-center key (largest times first):", [round(v, 2) for v in lex.key[:5]], "...")
