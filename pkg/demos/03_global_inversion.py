"""Walkthrough: solving f(x) = y globally by nonsmooth descent plus a
semismooth Newton polish.

The driver minimizes phi(x) = 0.5 ||f(x) - y||^2 with gradient sampling
(robust through kinks), hands over to Newton steps on limiting Jacobian
elements once the residual is small, and reports stalls at positive
residual as genuine critical-point witnesses.
"""

import numpy as np

from lipinv import (
    SolveOptions,
    eval_map,
    invert,
    minimize_phi,
    parse_map,
    semismooth_newton_polish,
)

kinked = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")

# descent alone, from far away, with the iterate trace recorded
rep = minimize_phi(kinked, [1, -1], SolveOptions(x0=[5, 5], record_trace=True))
print("descent:", rep.status, "x* =", rep.x_star, "residual", rep.residual,
      "in", rep.iterations, "iterations")
print("first trace rows (iter, phi, residual, subgrad, x, y):")
for row in rep.trace[:4]:
    print("  ", tuple(round(v, 6) if isinstance(v, float) else v for v in row))

# Newton on a piecewise-linear map is exact once the pattern settles
rep = semismooth_newton_polish(kinked, [-3, 3], [-0.9, -1.2])
print("\nnewton:", rep.status, "x* =", rep.x_star, "in", rep.iterations, "steps")

# the composed driver: multi-start descent + polish, best report wins
rng = np.random.default_rng(0)
print("\ncomposed inversion on random targets:")
for _ in range(5):
    y = rng.uniform(-5, 5, 2)
    rep = invert(kinked, y, SolveOptions(seed=3))
    back = eval_map(kinked, rep.x_star)
    print(f"  y = {y.round(3)}  ->  x* = {rep.x_star.round(6)}  "
          f"round-trip error {np.linalg.norm(back - y):.1e}")

# a stall with vanishing subgradient at positive residual flags a point
# where the rank hypothesis breaks (here: the complex square at 0)
csq = parse_map("f(x, y) = (x^2 - y^2, 2*x*y)")
rep = minimize_phi(csq, [1, 0], SolveOptions(x0=[0, 0]))
print("\nrank-degenerate stall:", rep.status,
      " phi =", rep.phi_value, " subgradient norm =", rep.subgradient_norm_est)
