"""Numerical evidence for or against compactness of the descent landscape.

Two independent diagnostics:

* a coercivity scan (does ||f|| grow along every sampled ray?), and
* descent-sequence probes from far-out starts (do iterates with bounded
  objective and vanishing subgradient measure stay in a bounded set?).

Finite sampling cannot verify either property, so verdicts are phrased as
"evidence" or "suspected", never "verified".  The two signals are
reported separately and no implication between them is drawn.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .map_model import (
    EvaluationError,
    MapDefinition,
    MapValidationError,
    PatternExplosionError,
    eval_map,
)
from .clarke import phi_subgradient_set
from .inversion import (
    CONVERGED,
    STALLED,
    SolveOptions,
    min_norm_hull_element,
    minimize_phi,
)

COERCIVE = "coercive_evidence"
NON_COERCIVE = "non_coercive_witness"
CONVERGENT = "convergent_subsequence_evidence"
PS_FAILURE = "ps_failure_suspected"

DEFAULT_RADII = (1.0, 10.0, 100.0, 1000.0)
DIVERGENCE_BALL = 1e6
CLUSTER_TOL = 1e-4


@dataclass(eq=False)
class CoercivityReport:
    directions: np.ndarray            # (k, n) unit vectors
    radii: tuple[float, ...]
    values: np.ndarray                # (k, len(radii)) ||f(r d)||, nan when skipped
    min_growth: float                 # min over directions of ||f|| at the largest radius
    monotone_fraction: float
    verdict: str
    witness_direction: np.ndarray | None = None
    witness_bound: float | None = None
    skipped: list[tuple[int, str]] | None = None
    growth_factor: float = 10.0


def coercivity_report_dict(rep: CoercivityReport) -> dict:
    d = {
        "verdict": rep.verdict,
        "radii": list(rep.radii),
        "n_directions": int(rep.directions.shape[0]),
        "min_growth": rep.min_growth,
        "monotone_fraction": rep.monotone_fraction,
        "growth_factor": rep.growth_factor,
    }
    if rep.witness_direction is not None:
        d["witness_direction"] = [float(v) for v in rep.witness_direction]
        d["witness_bound"] = rep.witness_bound
    if rep.skipped:
        d["skipped_directions"] = len(rep.skipped)
    return d


def _direction_set(n: int, n_directions: int, seed: int) -> np.ndarray:
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    extra = max(0, n_directions - len(axes))
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((extra, n))
    rand /= np.maximum(np.linalg.norm(rand, axis=1, keepdims=True), 1e-300)
    return np.concatenate([axes, rand])[:max(n_directions, len(axes))]


def coercivity_scan(m: MapDefinition, n_directions: int | None = None,
                    radii: tuple[float, ...] = DEFAULT_RADII, seed: int = 0, *,
                    growth_factor: float = 10.0,
                    directions: np.ndarray | None = None) -> CoercivityReport:
    """Evaluate ||f(r d)|| over a seeded direction set (signed axes first)
    across increasing radii.

    Coercive evidence requires the value at the largest radius to exceed
    the value at the smallest by ``growth_factor`` along every direction;
    otherwise the direction with the worst growth ratio is returned as a
    non-coercivity witness together with the bound it stayed under.
    """
    radii = tuple(float(r) for r in radii)
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise MapValidationError("radii must be strictly increasing with at least 3 values")
    if directions is None:
        if n_directions is None:
            n_directions = 64 if m.n_in <= 3 else 32 * m.n_in
        directions = _direction_set(m.n_in, n_directions, seed)
    else:
        directions = np.asarray(directions, dtype=float)

    k = directions.shape[0]
    values = np.full((k, len(radii)), np.nan)
    skipped: list[tuple[int, str]] = []
    for i, d in enumerate(directions):
        try:
            for j, r in enumerate(radii):
                values[i, j] = float(np.linalg.norm(eval_map(m, r * d)))
        except (EvaluationError, PatternExplosionError) as exc:
            values[i, :] = np.nan
            skipped.append((i, str(exc)))

    ok_rows = ~np.isnan(values[:, 0])
    if not ok_rows.any():
        raise EvaluationError("every sampled direction failed to evaluate")
    vals = values[ok_rows]
    dirs = directions[ok_rows]

    grew = (vals[:, -1] >= growth_factor * vals[:, 0]) & (vals[:, -1] > 0.0)
    ratios = vals[:, -1] / np.maximum(vals[:, 0], 1e-300)
    monotone = np.all(np.diff(vals, axis=1) >= -1e-12 * np.maximum(vals[:, :-1], 1.0), axis=1)

    min_growth = float(vals[:, -1].min())
    monotone_fraction = float(monotone.mean())
    if bool(grew.all()):
        return CoercivityReport(dirs, radii, vals, min_growth, monotone_fraction,
                                COERCIVE, skipped=skipped, growth_factor=growth_factor)
    # worst ratio, ties broken lexicographically so the aggregate is
    # independent of direction order
    worst_ratio = ratios.min()
    cand = np.nonzero(ratios <= worst_ratio * (1 + 1e-12))[0]
    widx = min(cand, key=lambda i: tuple(dirs[i]))
    return CoercivityReport(
        dirs, radii, vals, min_growth, monotone_fraction, NON_COERCIVE,
        witness_direction=dirs[widx].copy(),
        witness_bound=float(np.nanmax(vals[widx])),
        skipped=skipped, growth_factor=growth_factor)


@dataclass(eq=False)
class StartTrace:
    start: np.ndarray
    iterate_norms: np.ndarray
    phi_values: np.ndarray
    subgrad_measures: np.ndarray
    status: str
    escaped: bool
    final_x: np.ndarray
    clustered: bool


@dataclass(eq=False)
class PSTrace:
    traces: list[StartTrace]
    verdict: str
    divergence_ball: float
    cluster_tol: float


def ps_trace_dict(tr: PSTrace) -> dict:
    return {
        "verdict": tr.verdict,
        "divergence_ball": tr.divergence_ball,
        "cluster_tol": tr.cluster_tol,
        "starts": [
            {
                "start": [float(v) for v in s.start],
                "status": s.status,
                "escaped": s.escaped,
                "clustered": s.clustered,
                "final_x": [float(v) for v in s.final_x],
                "final_phi": float(s.phi_values[-1]),
                "final_subgrad": float(s.subgrad_measures[-1]),
                "max_norm": float(s.iterate_norms.max()),
            }
            for s in tr.traces
        ],
    }


def _point_subgrad_norm(m: MapDefinition, y: np.ndarray, x: np.ndarray,
                        kink_tol: float) -> float:
    try:
        g, _ = min_norm_hull_element(list(phi_subgradient_set(m, x, y, kink_tol)))
        return float(np.linalg.norm(g))
    except (EvaluationError, PatternExplosionError):
        return float("nan")


def _subgrad_direction(m, y, x, kink_tol):
    try:
        g, _ = min_norm_hull_element(list(phi_subgradient_set(m, x, y, kink_tol)))
    except (EvaluationError, PatternExplosionError):
        return None
    gnorm = float(np.linalg.norm(g))
    if gnorm <= 1e-300:
        return None
    return -g / gnorm


def _drift_walk(m: MapDefinition, y: np.ndarray, x: np.ndarray, phi: float,
                kink_tol: float, ball: float,
                fallback_dir: np.ndarray | None, max_steps: int = 200):
    """Doubling-step continuation from a descent endpoint: march along the
    steepest (or last-motion) direction for as long as the objective does
    not increase.

    Descent steps proportional to the subgradient shrink exponentially in
    flat valleys, so they can never reach the divergence ball in finite
    time; a geometric walk can.  Non-strict acceptance matters: once the
    objective underflows to a flat floor, strict decrease is impossible,
    yet a flat escape ray is exactly the compactness-failure signature.
    From an isolated zero every direction increases the objective and the
    walk dies immediately.
    """
    rows = []
    d = _subgrad_direction(m, y, x, kink_tol)
    if d is None:
        d = fallback_dir
    if d is None:
        return x, phi, rows, False
    step = 1.0
    for _ in range(max_steps):
        if np.linalg.norm(x) > ball:
            return x, phi, rows, True
        cand = x + step * d
        try:
            r = eval_map(m, cand) - y
            cphi = 0.5 * float(r @ r)
        except (EvaluationError, PatternExplosionError):
            cphi = float("inf")
        if np.isfinite(cphi) and cphi <= phi:
            x, phi = cand, cphi
            rows.append((float(np.linalg.norm(x)), phi,
                         _point_subgrad_norm(m, y, x, kink_tol)))
            step *= 2.0
            d_new = _subgrad_direction(m, y, x, kink_tol)
            if d_new is not None:
                d = d_new
        else:
            step *= 0.5
            if step < 1e-6:
                break
    return x, phi, rows, bool(np.linalg.norm(x) > ball)


def ps_sequence_probe(m: MapDefinition, y, starts: np.ndarray | None = None, *,
                      n_starts: int = 8, start_radius: float = 100.0, seed: int = 0,
                      opts: SolveOptions | None = None,
                      divergence_ball: float = DIVERGENCE_BALL,
                      cluster_tol: float = CLUSTER_TOL) -> PSTrace:
    """Run capped descent traces from far-out seeded starts and classify.

    A start witnesses compactness failure when the objective stays bounded
    and the subgradient measure falls below the stall threshold while the
    iterates (extended by the doubling-step walk) leave the divergence
    ball.  With no such witness the probe reports convergent-subsequence
    evidence; the two verdicts are mutually exclusive by construction.
    """
    y = np.asarray(y, dtype=float)
    if starts is None:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_starts, m.n_in))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
        starts = start_radius * dirs
    else:
        starts = np.asarray(starts, dtype=float)
        if starts.size == 0:
            raise MapValidationError("starts must be nonempty")

    base = opts if opts is not None else SolveOptions(max_iters=2000)
    traces: list[StartTrace] = []
    failure_seen = False
    for i, x0 in enumerate(starts):
        run = dataclasses.replace(base, x0=x0, seed=seed + i, record_trace=True)
        rep = minimize_phi(m, y, run)
        rows = rep.trace or []
        norms = [float(np.linalg.norm(np.array(r[4:]))) for r in rows]
        phis = [float(r[1]) for r in rows]
        subgs = [float(r[3]) if r[3] is not None else float("nan") for r in rows]

        escaped = False
        x_final = rep.x_star
        if rep.status in (STALLED, CONVERGED):
            fallback = None
            if len(rows) >= 2:
                motion = np.array(rows[-1][4:]) - np.array(rows[max(0, len(rows) - 6)][4:])
                mn = float(np.linalg.norm(motion))
                if mn > 1e-300:
                    fallback = motion / mn
            x_final, _, walk_rows, escaped = _drift_walk(
                m, y, rep.x_star, rep.phi_value, base.kink_tol, divergence_ball,
                fallback)
            for nrm, ph, sg in walk_rows:
                norms.append(nrm)
                phis.append(ph)
                subgs.append(sg)

        tail = np.array([np.array(r[4:]) for r in rows[-5:]]) if rows else np.zeros((0, m.n_in))
        clustered = True
        if len(tail) >= 2:
            diam = max(float(np.linalg.norm(a - b)) for a in tail for b in tail)
            clustered = diam <= cluster_tol
        clustered = clustered or rep.status == CONVERGED

        bounded_phi = np.all(np.isfinite(np.asarray(phis))) if phis else True
        last_subg = next((s for s in reversed(subgs) if np.isfinite(s)), float("nan"))
        subg_small = np.isfinite(last_subg) and last_subg <= base.stall_threshold * 10.0
        is_failure = bool(escaped and bounded_phi and subg_small)
        failure_seen = failure_seen or is_failure
        traces.append(StartTrace(
            start=np.asarray(x0, dtype=float),
            iterate_norms=np.asarray(norms),
            phi_values=np.asarray(phis),
            subgrad_measures=np.asarray(subgs),
            status=rep.status,
            escaped=escaped,
            final_x=x_final,
            clustered=clustered,
        ))

    verdict = PS_FAILURE if failure_seen else CONVERGENT
    return PSTrace(traces, verdict, divergence_ball, cluster_tol)
