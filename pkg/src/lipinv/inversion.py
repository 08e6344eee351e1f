"""Global inversion of square piecewise-smooth maps.

Solving f(x) = y is cast as minimization of phi(x) = 0.5 * ||f(x) - y||^2.
A gradient-sampling descent handles the nonsmooth landscape (the convex
hull of subgradients collected at the iterate and at nearby sampled
points gives a stabilized steepest-descent direction), and a semismooth
Newton polish using limiting Jacobian elements takes over once the
residual is small.  A stall with a vanishing minimum-norm subgradient at
positive residual is reported as such: it is a genuine witness of a
critical point that is not a preimage.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .map_model import (
    KINK_TOL,
    EvaluationError,
    MapDefinition,
    MapValidationError,
    PatternExplosionError,
    eval_map,
)
from .clarke import limiting_jacobians, phi_subgradient_set

CONVERGED = "converged"
STALLED = "stalled_at_nonzero_residual"
DIVERGED = "diverged"
ITERATION_CAP = "iteration_cap"


@dataclass
class SolveOptions:
    """Start specification and tolerances.

    ``x0`` selects a single start; when it is None, ``multi_start`` points
    are drawn uniformly from ``start_box`` with the given seed.
    """

    x0: object | None = None
    multi_start: int = 8
    start_box: tuple[float, float] = (-10.0, 10.0)
    seed: int = 0
    tol_residual: float = 1e-8
    max_iters: int = 10_000
    sampling_radius: float = 1e-2
    armijo_c1: float = 1e-4
    armijo_backtrack: float = 0.5
    armijo_max_backtracks: int = 25
    newton_switch_residual: float = 1e-2
    stall_threshold: float = 1e-9
    kink_tol: float = KINK_TOL
    record_trace: bool = False

    def validate(self):
        if self.tol_residual <= 0:
            raise MapValidationError("tol_residual must be positive")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise MapValidationError("armijo_c1 must lie in (0, 1)")
        if not 0.0 < self.armijo_backtrack < 1.0:
            raise MapValidationError("armijo_backtrack must lie in (0, 1)")
        if self.multi_start < 1:
            raise MapValidationError("multi_start must be at least 1")


@dataclass(eq=False)
class SolveReport:
    status: str
    x_star: np.ndarray
    residual: float
    phi_value: float
    iterations: int
    subgradient_norm_est: float
    trace: list[tuple] | None = None
    context: str | None = None


def solve_report_dict(rep: SolveReport) -> dict:
    """JSON-ready report; the iterate trace is streamed separately as CSV."""
    return {
        "status": rep.status,
        "x_star": [float(v) for v in rep.x_star],
        "residual": rep.residual,
        "phi_value": rep.phi_value,
        "iterations": rep.iterations,
        "subgradient_norm_est": rep.subgradient_norm_est,
    }


TRACE_COLUMNS = ("iter", "phi", "residual", "subgrad_norm")  # then x coordinates


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = v.size
    if n <= 64:  # plain-Python path; numpy call overhead dominates at this size
        u = sorted(v.tolist(), reverse=True)
        css = 0.0
        theta = 0.0
        for i, ui in enumerate(u):
            css += ui
            t = (css - 1.0) / (i + 1)
            if ui - t > 0.0:
                theta = t
        return np.array([vi - theta if vi > theta else 0.0 for vi in v.tolist()])
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, n + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.clip(v - theta, 0.0, None)


def min_norm_hull_element(vectors, max_iter: int = 500, tol: float = 1e-10):
    """Minimum-norm element of the convex hull of ``vectors``.

    Solves min ||G^T lam||^2 over the simplex by projected gradient
    (generators normalized to unit scale first; Barzilai-Borwein step with
    a monotone 1/L safeguard).  Dimension-free and deterministic.  Returns
    the element and the convex weights.
    """
    G0 = np.asarray(vectors, dtype=float)
    k = G0.shape[0]
    if k == 0:
        raise MapValidationError("min-norm element of an empty set")
    if k == 1:
        return G0[0].copy(), np.ones(1)
    scale = float(np.max(np.linalg.norm(G0, axis=1)))
    if scale == 0.0:  # all generators are exactly zero
        return np.zeros(G0.shape[1]), np.full(k, 1.0 / k)
    G = G0 / scale
    Q = G @ G.T
    lipschitz = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    lam = np.zeros(k)
    lam[int(np.argmin(np.diag(Q)))] = 1.0  # start at the shortest generator
    step0 = 1.0 / lipschitz
    t = step0
    q = Q @ lam
    val = float(lam @ q)
    lam_prev = q_prev = None
    for _ in range(max_iter):
        # KKT gap: at the optimum, min_i <g_i, g> equals ||g||^2
        if val - float(q.min()) <= tol * max(1.0, val):
            break
        if lam_prev is not None:
            s = lam - lam_prev
            sy = 2.0 * float(s @ (q - q_prev))
            t = min(max(float(s @ s) / sy, step0), 1e12) if sy > 1e-300 else step0
        new = project_simplex(lam - t * 2.0 * q)
        q_new = Q @ new
        val_new = float(new @ q_new)
        if val_new > val and t > step0:  # BB overshoot: retreat to the safe step
            new = project_simplex(lam - step0 * 2.0 * q)
            q_new = Q @ new
            val_new = float(new @ q_new)
        converged = float(np.max(np.abs(new - lam))) <= tol
        lam_prev, q_prev = lam, q
        lam, q, val = new, q_new, val_new
        if converged:
            break
    return scale * (G.T @ lam), lam


def _ball_point(rng: np.random.Generator, n: int) -> np.ndarray:
    d = rng.standard_normal(n)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        return np.zeros(n)
    return d / nrm * rng.random() ** (1.0 / n)


def _phi_residual(m: MapDefinition, y: np.ndarray, x: np.ndarray):
    r = eval_map(m, x) - y
    res = float(np.linalg.norm(r))
    return 0.5 * res * res, res


def _seeded_starts(m: MapDefinition, opts: SolveOptions) -> list[np.ndarray]:
    lo, hi = opts.start_box
    rng = np.random.default_rng(opts.seed)
    return [rng.uniform(lo, hi, m.n_in) for _ in range(opts.multi_start)]


def _require_square(m: MapDefinition):
    if m.n_in != m.n_out:
        raise MapValidationError(
            f"inversion needs a square map, got {m.n_in} inputs and {m.n_out} outputs")


def minimize_phi(m: MapDefinition, y, opts: SolveOptions, *,
                 stop_residual: float | None = None,
                 _rng: np.random.Generator | None = None) -> SolveReport:
    """Gradient-sampling descent on phi(x) = 0.5 * ||f(x) - y||^2.

    Per iterate the subgradient generators at the point and at 2n sampled
    nearby points (ball of ``sampling_radius``, halved whenever the line
    search fails) are pooled; the minimum-norm element of their hull gives
    the step direction, with Armijo backtracking plus greedy doubling on
    first acceptance.  Stops on residual <= tol_residual, hull min-norm
    <= stall_threshold, or the iteration cap.
    """
    opts.validate()
    _require_square(m)
    y = np.asarray(y, dtype=float)
    n = m.n_in
    if opts.x0 is not None:
        x = np.array([float(v) for v in opts.x0])
        if x.shape != (n,):
            raise MapValidationError("x0 dimension mismatch")
    else:
        x = _seeded_starts(m, opts)[0]
    rng = _rng if _rng is not None else np.random.default_rng((opts.seed, 0))
    stop = opts.tol_residual if stop_residual is None else max(stop_residual, opts.tol_residual)

    trace: list[tuple] | None = [] if opts.record_trace else None
    try:
        phi, res = _phi_residual(m, y, x)
    except (EvaluationError, PatternExplosionError):
        return SolveReport(DIVERGED, x, float("inf"), float("inf"), 0, float("nan"))
    if trace is not None:
        trace.append((0, phi, res, None) + tuple(x))

    radius = opts.sampling_radius
    gnorm = None
    iterations = 0
    status = ITERATION_CAP
    while True:
        if res <= stop:
            status = CONVERGED
            break
        if iterations >= opts.max_iters:
            status = ITERATION_CAP
            break
        iterations += 1

        point_vectors = list(phi_subgradient_set(m, x, y, opts.kink_tol))
        vectors = list(point_vectors)
        for _ in range(2 * n):
            w = x + radius * _ball_point(rng, n)
            try:
                vectors.extend(phi_subgradient_set(m, w, y, opts.kink_tol))
            except (EvaluationError, PatternExplosionError):
                continue
        g, _ = min_norm_hull_element(vectors)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.stall_threshold:
            # a small hull element only certifies a critical point within
            # the sampling radius; confirm at the point itself, else zoom in
            gp, _ = min_norm_hull_element(point_vectors)
            if float(np.linalg.norm(gp)) <= opts.stall_threshold:
                status = STALLED
                break
            radius *= 0.5
            if trace is not None:
                trace.append((iterations, phi, res, gnorm) + tuple(x))
            continue

        accepted = _line_search(m, y, x, g, gnorm, phi, opts)
        if accepted is None:
            radius *= 0.5
            if trace is not None:
                trace.append((iterations, phi, res, gnorm) + tuple(x))
            continue
        x, phi, res = accepted
        if trace is not None:
            trace.append((iterations, phi, res, gnorm) + tuple(x))

    if gnorm is None:
        try:
            g0, _ = min_norm_hull_element(list(phi_subgradient_set(m, x, y, opts.kink_tol)))
            gnorm = float(np.linalg.norm(g0))
        except (EvaluationError, PatternExplosionError):
            gnorm = float("nan")
    return SolveReport(status, x, res, phi, iterations, gnorm, trace=trace)


def _line_search(m, y, x, g, gnorm, phi, opts, max_expand: int = 30):
    t = 1.0 / max(1.0, gnorm)
    for _ in range(opts.armijo_max_backtracks + 1):
        cand = x - t * g
        try:
            phi_new, res_new = _phi_residual(m, y, cand)
        except (EvaluationError, PatternExplosionError):
            t *= opts.armijo_backtrack
            continue
        if phi_new <= phi - opts.armijo_c1 * t * gnorm * gnorm:
            # greedy doubling keeps far-from-solution progress from being
            # capped at unit steps
            for _ in range(max_expand):
                t2 = 2.0 * t
                cand2 = x - t2 * g
                try:
                    phi2, res2 = _phi_residual(m, y, cand2)
                except (EvaluationError, PatternExplosionError):
                    break
                if phi2 <= phi - opts.armijo_c1 * t2 * gnorm * gnorm and phi2 < phi_new:
                    t, cand, phi_new, res_new = t2, cand2, phi2, res2
                else:
                    break
            return cand, phi_new, res_new
        t *= opts.armijo_backtrack
    return None


def semismooth_newton_polish(m: MapDefinition, y, x0, max_steps: int = 30,
                             tol: float = 1e-12, *, kink_tol: float = KINK_TOL,
                             record_trace: bool = False) -> SolveReport:
    """Newton iteration x <- x - J^{-1} (f(x) - y) with J the first
    nonsingular limiting Jacobian element in deterministic order.

    On piecewise-linear maps a step inside the correct pattern region is
    exact.  Falls back with a stall report when the residual increases
    twice in a row; if every element at an iterate is singular the report
    carries context ``singular_element_found``.
    """
    _require_square(m)
    y = np.asarray(y, dtype=float)
    x = np.array([float(v) for v in x0])
    trace: list[tuple] | None = [] if record_trace else None

    def finish(status, x, res, steps, context=None):
        try:
            g, _ = min_norm_hull_element(list(phi_subgradient_set(m, x, y, kink_tol)))
            est = float(np.linalg.norm(g))
        except (EvaluationError, PatternExplosionError):
            est = float("nan")
        return SolveReport(status, x, res, 0.5 * res * res, steps, est,
                           trace=trace, context=context)

    try:
        fx = eval_map(m, x)
    except (EvaluationError, PatternExplosionError):
        return SolveReport(DIVERGED, x, float("inf"), float("inf"), 0, float("nan"))
    res = float(np.linalg.norm(fx - y))
    if trace is not None:
        trace.append((0, 0.5 * res * res, res, None) + tuple(x))
    best_x, best_res = x.copy(), res
    increases = 0
    for step in range(1, max_steps + 1):
        if res <= tol:
            return finish(CONVERGED, x, res, step - 1)
        gj = limiting_jacobians(m, x, kink_tol)
        d = None
        for E in gj.elements:
            sv = np.linalg.svd(E, compute_uv=False)
            if sv[-1] > 1e-12 * max(1.0, sv[0]):
                d = np.linalg.solve(E, fx - y)
                break
        if d is None:
            return finish(STALLED, best_x, best_res, step - 1,
                          context="singular_element_found")
        x_new = x - d
        try:
            fx_new = eval_map(m, x_new)
        except (EvaluationError, PatternExplosionError):
            return finish(STALLED, best_x, best_res, step - 1, context="evaluation_error")
        res_new = float(np.linalg.norm(fx_new - y))
        increases = increases + 1 if res_new > res else 0
        x, fx, res = x_new, fx_new, res_new
        if trace is not None:
            trace.append((step, 0.5 * res * res, res, None) + tuple(x))
        if res < best_res:
            best_x, best_res = x.copy(), res
        if increases >= 2:
            return finish(STALLED, best_x, best_res, step, context="residual_increase")
    if res <= tol:
        return finish(CONVERGED, x, res, max_steps)
    return finish(ITERATION_CAP, best_x, best_res, max_steps)


def _merge_reports(parts: list[SolveReport]) -> SolveReport:
    final = parts[-1]
    iterations = sum(p.iterations for p in parts)
    trace = None
    if any(p.trace for p in parts):
        trace = []
        offset = 0
        for p in parts:
            rows = p.trace or []
            for row in rows:
                trace.append((row[0] + offset,) + row[1:])
            if rows:
                offset = trace[-1][0]
    return SolveReport(final.status, final.x_star, final.residual, final.phi_value,
                       iterations, final.subgradient_norm_est, trace=trace,
                       context=final.context)


def _invert_single(m: MapDefinition, y, x0, opts: SolveOptions,
                   rng: np.random.Generator) -> SolveReport:
    run_opts = dataclasses.replace(opts, x0=x0)
    coarse = minimize_phi(m, y, run_opts,
                          stop_residual=opts.newton_switch_residual, _rng=rng)
    if coarse.status != CONVERGED:
        return coarse
    if coarse.residual <= opts.tol_residual:
        return coarse
    parts = [coarse]
    newton = semismooth_newton_polish(m, y, coarse.x_star, max_steps=40,
                                      tol=opts.tol_residual, kink_tol=opts.kink_tol,
                                      record_trace=opts.record_trace)
    parts.append(newton)
    if newton.status != CONVERGED:
        fine_opts = dataclasses.replace(opts, x0=newton.x_star)
        fine = minimize_phi(m, y, fine_opts, _rng=rng)
        parts.append(fine)
    return _merge_reports(parts)


def invert(m: MapDefinition, y, opts: SolveOptions | None = None) -> SolveReport:
    """Solve f(x) = y: gradient-sampling descent from every start, handing
    over to the semismooth Newton polish once the residual drops below
    ``newton_switch_residual``.  Returns the best report (lowest residual,
    ties broken by iteration count, then lexicographically by solution)."""
    opts = opts if opts is not None else SolveOptions()
    opts.validate()
    _require_square(m)
    y = np.asarray(y, dtype=float)
    if opts.x0 is not None:
        starts = [np.array([float(v) for v in opts.x0])]
    else:
        starts = _seeded_starts(m, opts)
    reports = []
    for i, s in enumerate(starts):
        rng = np.random.default_rng((opts.seed, 1, i))
        reports.append(_invert_single(m, y, s, opts, rng))
    return min(reports, key=lambda r: (r.residual, r.iterations, tuple(r.x_star)))
