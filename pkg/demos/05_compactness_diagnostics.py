"""Walkthrough: evidence for (or against) well-behaved descent at infinity.

Global inversion needs more than pointwise rank: descent sequences must
not sneak off to infinity with vanishing subgradients.  Two finite-run
diagnostics approximate that: a coercivity scan (||f|| growing along all
sampled rays) and far-start descent traces extended by a doubling-step
walk.  Verdicts are deliberately "evidence"/"suspected", never "verified".
"""

import numpy as np

from lipinv import coercivity_scan, parse_map, ps_sequence_probe

kinked = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")
expmap = parse_map("f(x, y) = (exp(x)*cos(y), exp(x)*sin(y))")

print("coercivity of the kinked bijection:")
rep = coercivity_scan(kinked, seed=0)
print("  verdict:", rep.verdict)
print("  min ||f|| at radius 1000:", rep.min_growth)
print("  monotone fraction:", rep.monotone_fraction)

print("\ncoercivity of the complex exponential (||f|| = e^x):")
rep = coercivity_scan(expmap, seed=0)
print("  verdict:", rep.verdict)
print("  witness direction:", rep.witness_direction.tolist(),
      " bounded by:", rep.witness_bound)

print("\ndescent probes toward target (0, 0):")
for name, m in (("kinked", kinked), ("expmap", expmap)):
    tr = ps_sequence_probe(m, [0, 0], seed=0)
    print(f"  {name}: {tr.verdict}")
    worst = max(tr.traces, key=lambda s: s.iterate_norms.max())
    print(f"    largest iterate norm {worst.iterate_norms.max():.3g}, "
          f"final phi {worst.phi_values[-1]:.3g}, "
          f"final subgradient measure {worst.subgrad_measures[-1]:.3g}")
