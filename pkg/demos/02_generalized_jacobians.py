"""Walkthrough: limiting Jacobian sets, directional derivatives and
maximal-rank certificates.

The generalized Jacobian at a kink is the convex hull of the smooth
pieces' Jacobians.  The certificate checks every generator exactly and
probes the hull interior with random convex combinations; it refuses to
claim more than the sampling supports (three-valued verdict).
"""

import numpy as np

from lipinv import (
    certificate_report,
    gen_dir_derivative,
    limiting_jacobians,
    max_rank_certificate,
    parse_map,
)

kinked = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")

gj = limiting_jacobians(kinked, [0, 0])
print("limiting Jacobians at the origin:")
for pat, J in zip(gj.patterns, gj.elements):
    print(f"  {pat.assignments}: {J.tolist()}")

cert = max_rank_certificate(gj, seed=0)
print("\ncertificate:", cert.status, " min singular value:", cert.min_singular_value)
print("JSON report:", certificate_report(gj, cert))

# the complex square has a genuinely singular generalized Jacobian at 0
csq = parse_map("f(x, y) = (x^2 - y^2, 2*x*y)")
gj0 = limiting_jacobians(csq, [0, 0])
cert0 = max_rank_certificate(gj0, seed=0)
print("\ncomplex square at origin:", cert0.status)
print("witness:", cert0.witness.tolist())

# one-dimensional sanity: the upper directional derivative of |.| at 0
absmap = parse_map("f(x) = (abs(x))")
for z in (0.5, 1.0, -2.0):
    est = gen_dir_derivative(absmap, [0.0], [z], seed=0)
    print(f"f0(0; {z:+.1f}) ~= {est.value:.6f}   "
          f"(samples {est.samples_used}, spread {est.spread:.1e})")

# scaling the map scales every singular value; rescaling the threshold
# keeps the verdict stable
scaled = parse_map("f(x, y) = (10*(2*x - abs(x)), 10*(abs(y) - 2*y))")
cs = max_rank_certificate(limiting_jacobians(scaled, [0, 0]), sigma_min=1e-7, seed=0)
print("\nscaled map:", cs.status, " min singular value:", cs.min_singular_value)
