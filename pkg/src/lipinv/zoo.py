"""Built-in demonstration maps with machine-checkable known facts.

Every entry parses, and the facts recorded here (analytic inverses,
singular points, coercivity, injectivity) are re-derivable by the toolkit
itself; the test suite enforces that self-consistency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .map_model import MapDefinition, MapValidationError, parse_map


@dataclass(frozen=True)
class MapZooEntry:
    name: str
    source: str
    note: str
    analytic_inverse: Callable[[np.ndarray], np.ndarray] | None = None
    singular_points: tuple[tuple[float, ...], ...] = ()
    coercive: bool | None = None
    injective: bool | None = None

    def load(self) -> MapDefinition:
        return _parse_cached(self.source)


@lru_cache(maxsize=None)
def _parse_cached(source: str) -> MapDefinition:
    return parse_map(source)


def _kink_inverse(y) -> np.ndarray:
    u, v = float(y[0]), float(y[1])
    x = u if u >= 0 else u / 3.0
    w = -v if v <= 0 else -v / 3.0
    return np.array([x, w])


def _kink_inverse_scaled(y) -> np.ndarray:
    return _kink_inverse(np.asarray(y, dtype=float) / 10.0)


ZOO: dict[str, MapZooEntry] = {
    e.name: e
    for e in [
        MapZooEntry(
            name="paper",
            source="f(x, y) = (2*x - abs(x), abs(y) - 2*y)",
            note="piecewise-linear bijection with branch gains {1,3} x {-1,-3}; "
                 "every generalized Jacobian is nonsingular",
            analytic_inverse=_kink_inverse,
            coercive=True,
            injective=True,
        ),
        MapZooEntry(
            name="identity2",
            source="f(x, y) = (x, y)",
            note="identity on the plane",
            analytic_inverse=lambda y: np.asarray(y, dtype=float).copy(),
            coercive=True,
            injective=True,
        ),
        MapZooEntry(
            name="complexsq",
            source="f(x, y) = (x^2 - y^2, 2*x*y)",
            note="complex squaring z -> z^2; two preimages away from zero and "
                 "a rank-degenerate point at the origin",
            singular_points=((0.0, 0.0),),
            coercive=True,
            injective=False,
        ),
        MapZooEntry(
            name="expmap",
            source="f(x, y) = (exp(x)*cos(y), exp(x)*sin(y))",
            note="complex exponential; nonsingular everywhere but not "
                 "coercive (||f|| = e^x) and 2*pi-periodic in y",
            coercive=False,
            injective=False,
        ),
        MapZooEntry(
            name="scaled_paper",
            source="f(x, y) = (10*(2*x - abs(x)), 10*(abs(y) - 2*y))",
            note="the kinked bijection scaled by 10; exercises threshold "
                 "scaling in rank certificates",
            analytic_inverse=_kink_inverse_scaled,
            coercive=True,
            injective=True,
        ),
    ]
}


def zoo_names() -> tuple[str, ...]:
    return tuple(ZOO)


def get_entry(name: str) -> MapZooEntry:
    if name not in ZOO:
        raise MapValidationError(
            f"unknown builtin map '{name}'; available: {', '.join(ZOO)}")
    return ZOO[name]


def load_zoo_map(name: str) -> MapDefinition:
    return get_entry(name).load()
