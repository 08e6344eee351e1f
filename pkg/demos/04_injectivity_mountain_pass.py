"""Walkthrough: probing injectivity with a discretized saddle search.

Two preimages x1, x2 of the same target turn into zeros of the shifted
map g(x) = f(x + x2) - a.  If psi = 0.5 ||g||^2 is provably higher on a
sphere separating them (ring condition), a path between the zeros must
climb over a pass, and the pass level is a critical value.  The search
relaxes a discretized path (string method), refines the crest node, and
classifies what it found.
"""

import numpy as np

from lipinv import (
    MPOptions,
    ProbeOptions,
    injectivity_probe,
    mountain_pass_search,
    parse_map,
    psi_value,
    ring_infimum,
    shift_map,
)

csq = parse_map("f(x, y) = (x^2 - y^2, 2*x*y)")

# end to end: find preimages of (1, 0), then search between them
probe = injectivity_probe(csq, [1, 0], ProbeOptions(seed=0))
print("outcome:   ", probe.outcome)
print("preimages: ", [p.round(9).tolist() for p in probe.preimages])
mp = probe.mp
print("classified:", mp.classification)
print("level c ~= ", mp.level_c, "  ring infimum:", round(mp.ring_infimum, 6))
print("saddle (original coordinates):", (mp.v + probe.preimages[0]).round(9).tolist())

# the pieces, step by step
x2, x1 = probe.preimages[0], probe.preimages[1]
sh = shift_map(csq, x2, [1, 0])
e = x1 - x2
print("\ng(0) =", psi_value(sh, np.zeros(2)), "  g(e) =", psi_value(sh, e))
rho = np.linalg.norm(e) / 4
print(f"ring infimum on |x| = {rho:.2f}:", round(ring_infimum(sh, rho, seed=0), 6))

rep = mountain_pass_search(sh, e, MPOptions(seed=0, record_history=True))
print("level history (first 5):", [round(v, 6) for v in rep.level_history[:5]])

# an injective map yields no counterexample, just the single preimage
kinked = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")
probe2 = injectivity_probe(kinked, [1, -1], ProbeOptions(seed=0, starts=24))
print("\nkinked bijection:", probe2.outcome,
      " preimages:", [p.round(6).tolist() for p in probe2.preimages])
