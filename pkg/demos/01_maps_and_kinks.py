"""Walkthrough: writing piecewise-smooth maps in the DSL and inspecting kinks.

A map is plain text.  Nonsmoothness lives only in abs/relu/max/min nodes,
so at any point we can enumerate the smooth pieces that meet there and
differentiate each piece exactly.
"""

import numpy as np

from lipinv import (
    active_patterns,
    eval_map,
    eval_piece_jacobian,
    parse_map,
    pretty_print,
    switching_values,
)

src = "f(x, y) = (2*x - abs(x), abs(y) - 2*y)"
m = parse_map(src)
print("map:        ", pretty_print(m))
print("dimensions: ", m.n_in, "->", m.n_out)
print("kink nodes: ", m.nonsmooth_nodes)

# values at a few points; the second component flips slope at y = 0
for p in ([1.0, 1.0], [0.0, 0.0], [-1.0, -1.0]):
    print(f"f({p}) = {eval_map(m, p)}")

# away from the kinks exactly one smooth piece is active
print("\npatterns at (1, 1):  ", [p.assignments for p in active_patterns(m, [1, 1])])

# at the origin both abs arguments vanish: 2 kinks -> 2^2 pieces
pats = active_patterns(m, [0, 0])
print("patterns at (0, 0):  ", [p.assignments for p in pats])
print("switching quantities:", switching_values(m, [0, 0]))

# each piece is a linear map here; its Jacobian is exact
print("\npiece Jacobians at the origin:")
for p in pats:
    J = eval_piece_jacobian(m, [0, 0], p)
    print(f"  {p.assignments}: diag({J[0, 0]:+.0f}, {J[1, 1]:+.0f})")

# a richer map: shared subexpressions collapse into one DAG node
rich = parse_map("g(x, y, z) = (max(x, y, z), relu(x - y)^2, sin(z)/(x^2 + 1))")
print("\nrich map reprints as:", pretty_print(rich))
print("node count:", len(rich.nodes), " kinks:", len(rich.nonsmooth_nodes))
x = np.array([0.3, -0.7, 1.2])
print("g(x) =", eval_map(rich, x))
