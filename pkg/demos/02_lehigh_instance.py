"""Load the bundled 21-node Lehigh Valley instance and show its demand."""

import equiloc as eq

inst = eq.load_lehigh()
print(f"{inst.n} nodes, p={inst.p}, fingerprint {inst.fingerprint[:12]}")
print("rounded average demand:", eq.rounded_demand(inst.demand_mean).tolist())
top = sorted(range(inst.n), key=lambda j: -inst.demand_mean[j])[:5]
for j in top:
    print(f"  {inst.label(j):28s} mean={inst.demand_mean[j]:8.2f} std={inst.demand_std[j]:7.2f}")
