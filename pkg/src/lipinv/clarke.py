"""Generalized-derivative calculus for piecewise-smooth maps.

For the expression-DAG class every smooth piece meeting at a point is
enumerable, so the limiting Jacobian set is finite and exact: one matrix
per active sign pattern.  The generalized Jacobian is the convex hull of
those matrices; it is never materialized, only probed.

Certificates are three-valued on purpose: deciding singularity of a whole
matrix hull is NP-hard in general, so besides the exact per-element check
we only sample random convex combinations.  That refutes soundly and
certifies honestly ("no near-singular combination found"), with an
explicit in-between verdict when a probe lands close to the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .map_model import (
    KINK_TOL,
    PATTERN_CAP,
    EvaluationError,
    MapDefinition,
    MapValidationError,
    SignPattern,
    active_patterns,
    eval_map,
    eval_piece_jacobian,
)

ELEMENT_DEDUP_TOL = 1e-12   # max-abs matrix distance under which elements merge
SIGMA_MIN_DEFAULT = 1e-8    # smallest-singular-value threshold on unit-scaled maps
HULL_PROBES_DEFAULT = 256
INCONCLUSIVE_BAND = 10.0    # probes within this multiple of sigma_min are "too close"

CERTIFIED = "certified_maximal_rank"
SINGULAR = "singular_element_found"
INCONCLUSIVE = "hull_test_inconclusive"


@dataclass(frozen=True, eq=False)
class GeneralizedJacobian:
    """Finite generator set of the generalized Jacobian at ``point``:
    deduplicated limiting Jacobians, one per active pattern, together with
    the patterns that produced them."""

    point: np.ndarray
    elements: tuple[np.ndarray, ...]
    tol_used: float
    patterns: tuple[SignPattern, ...]


@dataclass(frozen=True, eq=False)
class RankCertificate:
    status: str
    min_singular_value: float
    witness: np.ndarray | None = None          # singular (or near-singular) matrix
    witness_weights: np.ndarray | None = None  # convex weights when a probe found it


@dataclass(frozen=True)
class DirDerivEstimate:
    """Sampled lower bound for the generalized directional derivative.
    ``spread`` is the gap between the maximum quotient and the mean of the
    top decile, a rough sharpness indicator."""

    value: float
    samples_used: int
    spread: float


def limiting_jacobians(m: MapDefinition, x, tol: float = KINK_TOL, *,
                       cap: int = PATTERN_CAP) -> GeneralizedJacobian:
    """One Jacobian per active sign pattern at ``x``, deduplicated within
    ``ELEMENT_DEDUP_TOL``, in lexicographic pattern order."""
    patterns = active_patterns(m, x, tol, cap=cap)
    elements: list[np.ndarray] = []
    kept: list[SignPattern] = []
    for p in patterns:
        J = eval_piece_jacobian(m, x, p)
        if not any(np.max(np.abs(J - E)) <= ELEMENT_DEDUP_TOL for E in elements):
            elements.append(J)
            kept.append(p)
    return GeneralizedJacobian(
        point=np.array([float(v) for v in x]),
        elements=tuple(elements),
        tol_used=float(tol),
        patterns=tuple(kept),
    )


def _ball_point(rng: np.random.Generator, n: int) -> np.ndarray:
    d = rng.standard_normal(n)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        return np.zeros(n)
    return d / nrm * rng.random() ** (1.0 / n)


def gen_dir_derivative(m: MapDefinition, u, z, *,
                       radii: tuple[float, ...] = (1e-2, 1e-3, 1e-4),
                       t_schedule: tuple[float, ...] = (1e-2, 1e-4, 1e-6),
                       samples: int = 64,
                       seed: int = 0) -> DirDerivEstimate:
    """Estimate the limsup of difference quotients (f(w + t z) - f(w)) / t
    over w near ``u`` and t decreasing to 0.

    Base points w are drawn uniformly from balls of the given radii around
    ``u`` (plus ``u`` itself), t runs over ``t_schedule``.  The estimate is
    the maximum quotient seen, hence a lower bound of the true limsup, and
    is nondecreasing in ``samples`` for a fixed seed because sample i is
    generated independently of the total count.
    """
    if m.n_out != 1:
        raise MapValidationError("directional derivative estimation needs a scalar map")
    u = np.array([float(v) for v in u])
    z = np.array([float(v) for v in z])
    if np.linalg.norm(z) == 0.0:
        raise MapValidationError("direction must be nonzero")
    n = m.n_in
    quotients: list[float] = []
    for ri, r in enumerate(radii):
        for ti, t in enumerate(t_schedule):
            for si in range(samples + 1):
                if si == 0:
                    w = u
                else:
                    rng = np.random.default_rng((seed, ri, ti, si))
                    w = u + r * _ball_point(rng, n)
                q = (eval_map(m, w + t * z)[0] - eval_map(m, w)[0]) / t
                if not np.isfinite(q):
                    raise EvaluationError(
                        f"non-finite difference quotient at w={w.tolist()}, t={t:g}")
                quotients.append(q)
    qs = np.sort(np.array(quotients))[::-1]
    top = qs[: max(1, len(qs) // 10)]
    return DirDerivEstimate(
        value=float(qs[0]),
        samples_used=len(qs),
        spread=float(qs[0] - top.mean()),
    )


def phi_subgradient_set(m: MapDefinition, x, y, tol: float = KINK_TOL) -> tuple[np.ndarray, ...]:
    """Generators of the subgradient set of phi(x) = 0.5 * ||f(x) - y||^2:
    one vector J^T (f(x) - y) per limiting Jacobian element.  The usable
    subgradient set downstream is the convex hull of these."""
    y = np.asarray(y, dtype=float)
    if y.shape != (m.n_out,):
        raise MapValidationError(
            f"target has shape {y.shape}, map '{m.name}' has {m.n_out} outputs")
    r = eval_map(m, x) - y
    gj = limiting_jacobians(m, x, tol)
    return tuple(J.T @ r for J in gj.elements)


def max_rank_certificate(gj: GeneralizedJacobian, sigma_min: float = SIGMA_MIN_DEFAULT,
                         hull_probes: int = HULL_PROBES_DEFAULT,
                         seed: int = 0) -> RankCertificate:
    """Certify (or refute) that every matrix in the hull of ``gj.elements``
    is nonsingular.

    Every element gets an exact smallest-singular-value check; the hull
    interior is probed with ``hull_probes`` Dirichlet-weighted convex
    combinations.  A probe at or below ``sigma_min`` refutes; probes within
    ``INCONCLUSIVE_BAND * sigma_min`` above the threshold downgrade the
    verdict to inconclusive.
    """
    if not gj.elements:
        raise MapValidationError("empty generalized Jacobian")
    k = len(gj.elements)
    rows, cols = gj.elements[0].shape
    if rows != cols:
        raise MapValidationError("rank certificate needs square Jacobians (m = n)")

    elem_sigmas = [float(np.linalg.svd(E, compute_uv=False)[-1]) for E in gj.elements]
    min_sv = min(elem_sigmas)
    worst = int(np.argmin(elem_sigmas))
    if min_sv <= sigma_min:
        return RankCertificate(SINGULAR, min_sv, witness=gj.elements[worst].copy())

    rng = np.random.default_rng(seed)
    stack = np.stack(gj.elements)
    singular_witness = None
    near_threshold = False
    for _ in range(hull_probes):
        w = rng.dirichlet(np.ones(k))
        M = np.tensordot(w, stack, axes=1)
        s = float(np.linalg.svd(M, compute_uv=False)[-1])
        min_sv = min(min_sv, s)
        if s <= sigma_min and singular_witness is None:
            singular_witness = (M, w)
        elif s <= (1.0 + INCONCLUSIVE_BAND) * sigma_min:
            near_threshold = True
    if singular_witness is not None:
        M, w = singular_witness
        return RankCertificate(SINGULAR, min_sv, witness=M, witness_weights=w)
    if near_threshold:
        return RankCertificate(INCONCLUSIVE, min_sv)
    return RankCertificate(CERTIFIED, min_sv)


def certificate_report(gj: GeneralizedJacobian, cert: RankCertificate) -> dict:
    """JSON-ready report with the fixed field layout
    {point, status, min_singular_value, elements_count, witness?}."""
    report = {
        "point": [float(v) for v in gj.point],
        "status": cert.status,
        "min_singular_value": cert.min_singular_value,
        "elements_count": len(gj.elements),
    }
    if cert.witness is not None:
        report["witness"] = [[float(v) for v in row] for row in cert.witness]
    if cert.witness_weights is not None:
        report["witness_weights"] = [float(v) for v in cert.witness_weights]
    return report
