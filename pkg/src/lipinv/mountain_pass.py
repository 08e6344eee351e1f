"""Saddle search between two preimages of the same target.

Given f(x1) = f(x2) = a, the shifted map g(x) = f(x + x2) - a has zeros at
0 and e = x1 - x2, and psi(x) = 0.5 * ||g(x)||^2 has the mountain-pass
geometry whenever psi on a separating sphere stays above the endpoint
values (the ring condition, checked here by sampling).  A discretized
path (string method: node-wise subgradient descent plus equal-arc-length
reparametrization) estimates the minimax level and delivers a candidate
critical point, which is then classified:

* it polishes down to a zero of g       -> another preimage exists,
* the subgradient vanishes at psi > 0   -> rank of the generalized
  Jacobian degenerates there (singular saddle),
* the string escapes every bounded ball
  while the level plateaus              -> compactness (Palais-Smale)
                                           failure suspected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .map_model import (
    KINK_TOL,
    DagBuilder,
    EvaluationError,
    MapDefinition,
    MapValidationError,
    PatternExplosionError,
    eval_map,
)
from .clarke import (
    SIGMA_MIN_DEFAULT,
    HULL_PROBES_DEFAULT,
    SINGULAR,
    limiting_jacobians,
    max_rank_certificate,
    phi_subgradient_set,
)
from .inversion import (
    CONVERGED,
    SolveOptions,
    invert,
    min_norm_hull_element,
    minimize_phi,
)
from .ps_probe import _drift_walk

SECOND_PREIMAGE = "second_preimage_found"
SINGULAR_SADDLE = "singular_saddle"
PS_FAILURE = "ps_failure_suspected"
RING_FAILED = "ring_condition_failed"
ITERATION_CAP = "iteration_cap"

PROBE_MP = "mp_analysis"
PROBE_NO_COUNTEREXAMPLE = "no_counterexample_found"
PROBE_NO_PREIMAGE = "no_preimage_found"


@dataclass(frozen=True, eq=False)
class ShiftedMap:
    """g(x) = f(x + x2) - a, materialized as a rewritten DAG so the whole
    pattern/Jacobian machinery applies unchanged (the kink nodes and their
    order are preserved)."""

    base: MapDefinition
    x2: np.ndarray
    a: np.ndarray
    map: MapDefinition


def shift_map(m: MapDefinition, x2, a) -> ShiftedMap:
    """Build the shifted map.  Exact: evaluating the rewritten DAG performs
    the same float operations as eval_map(m, x + x2) - a."""
    x2 = np.array([float(v) for v in x2])
    a = np.array([float(v) for v in a])
    if x2.shape != (m.n_in,):
        raise MapValidationError("shift point dimension mismatch")
    if a.shape != (m.n_out,):
        raise MapValidationError("shift value dimension mismatch")
    b = DagBuilder()

    def shifted_by(c: float, nid: int) -> int:
        if c == 0.0:
            return nid
        if c > 0.0:
            return b.add("add", (nid, b.const(c)))
        return b.add("sub", (nid, b.const(-c)))

    var_repl: dict[int, int] = {}

    def replace_var(idx: int) -> int:
        # lazy creation keeps node order aligned with the original arena, so
        # a zero shift rebuilds the base DAG verbatim
        if idx not in var_repl:
            var_repl[idx] = shifted_by(x2[idx], b.var(idx))
        return var_repl[idx]

    remap: dict[int, int] = {}
    for i, node in enumerate(m.nodes):
        if node.kind == "var":
            remap[i] = replace_var(node.payload)
        else:
            children = tuple(remap[c] for c in node.children)
            remap[i] = b.add(node.kind, children, node.payload)
    outputs = [shifted_by(-a[j], remap[o]) for j, o in enumerate(m.outputs)]
    shifted = b.finish(m.name + "_shifted", m.var_names, outputs)
    return ShiftedMap(base=m, x2=x2, a=a, map=shifted)


def psi_value(shifted: ShiftedMap, x) -> float:
    """psi(x) = 0.5 * ||g(x)||^2; nonnegative, zero exactly at preimages."""
    g = eval_map(shifted.map, x)
    return 0.5 * float(g @ g)


def _min_norm_subgrad(m: MapDefinition, x, kink_tol: float):
    vectors = list(phi_subgradient_set(m, x, np.zeros(m.n_out), kink_tol))
    g, _ = min_norm_hull_element(vectors)
    return g, float(np.linalg.norm(g))


def ring_infimum(shifted: ShiftedMap, rho: float, n_samples: int = 256,
                 seed: int = 0, refine_iters: int = 40, *,
                 kink_tol: float = KINK_TOL) -> float:
    """Estimate inf of psi over the sphere ||x|| = rho.

    Seeded uniform sphere samples, then projected subgradient descent
    (renormalize after each step) from the best few candidates.  The
    estimate is an upper bound on the true infimum that tightens with
    sampling density and refinement.
    """
    n = shifted.map.n_in
    if not rho > 0.0:
        raise MapValidationError("sphere radius must be positive")
    if n_samples < 2 * n:
        raise MapValidationError(f"need at least {2 * n} sphere samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_samples, n))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    pts = rho * dirs

    values = []
    for p in pts:
        try:
            values.append(psi_value(shifted, p))
        except (EvaluationError, PatternExplosionError):
            values.append(float("inf"))
    values = np.asarray(values)
    best = float(values.min())

    order = np.argsort(values)
    for idx in order[: min(8, n_samples)]:
        if not np.isfinite(values[idx]):
            continue
        x = pts[idx].copy()
        val = float(values[idx])
        for _ in range(refine_iters):
            try:
                g, gnorm = _min_norm_subgrad(shifted.map, x, kink_tol)
            except (EvaluationError, PatternExplosionError):
                break
            if gnorm <= 1e-14:
                break
            t = 0.2 * rho / max(gnorm, 1e-300)
            improved = False
            for _ in range(10):
                cand = x - t * g
                nrm = np.linalg.norm(cand)
                if nrm > 0.0:
                    cand = cand / nrm * rho
                    try:
                        cval = psi_value(shifted, cand)
                    except (EvaluationError, PatternExplosionError):
                        cval = float("inf")
                    if cval < val:
                        x, val = cand, cval
                        improved = True
                        break
                t *= 0.5
            if not improved:
                break
        best = min(best, val)
    return best


@dataclass(eq=False)
class PathPolyline:
    """Discretized path: m >= 3 nodes with both endpoints pinned."""

    nodes: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[0] < 3:
            raise MapValidationError("a path needs at least 3 nodes")

    @property
    def u1(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def u2(self) -> np.ndarray:
        return self.nodes[-1]

    def reparametrized(self, max_passes: int = 16) -> "PathPolyline":
        """Resample to equal arc length along the current polyline.

        Chord gaps after one pass still vary where the path bends, so the
        resampling iterates until consecutive gaps agree within 1 percent
        (or the pass cap, for pathologically kinked inputs).
        """
        nodes = self.nodes.copy()
        for _ in range(max_passes):
            seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
            total = float(seg.sum())
            if total <= 0.0:
                return PathPolyline(nodes)
            mean_gap = total / (len(nodes) - 1)
            if float(np.max(np.abs(seg - mean_gap))) <= 0.01 * mean_gap:
                return PathPolyline(nodes)
            cum = np.concatenate(([0.0], np.cumsum(seg)))
            targets = np.linspace(0.0, total, len(nodes))
            out = np.empty_like(nodes)
            out[0] = nodes[0]
            out[-1] = nodes[-1]
            for i, t in enumerate(targets[1:-1], start=1):
                j = int(np.searchsorted(cum, t, side="right") - 1)
                j = min(j, len(seg) - 1)
                w = (t - cum[j]) / seg[j] if seg[j] > 0.0 else 0.0
                out[i] = nodes[j] + w * (nodes[j + 1] - nodes[j])
            nodes = out
        return PathPolyline(nodes)


@dataclass
class MPOptions:
    n_nodes: int = 33
    max_outer: int = 400
    step: float = 0.1
    tol: float = 1e-6
    seed: int = 0
    ring_rho: float | None = None        # default ||e|| / 4
    ring_samples: int = 256
    ring_refine_iters: int = 40
    ring_margin: float = 1e-9
    kink_tol: float = KINK_TOL
    divergence_ball: float = 1e6
    plateau_window: int = 50
    plateau_rtol: float = 1e-3
    preimage_tol: float = 1e-6
    separation_tol: float = 1e-4
    sigma_min: float = SIGMA_MIN_DEFAULT
    hull_probes: int = HULL_PROBES_DEFAULT
    record_history: bool = False


@dataclass(eq=False)
class MPReport:
    classification: str
    level_c: float | None
    v: np.ndarray | None
    ring_infimum: float
    endpoint_max: float
    outer_iters: int = 0
    psi_at_v: float | None = None
    subgrad_at_v: float | None = None
    preimage: np.ndarray | None = None
    distinct_from_endpoints: bool | None = None
    level_history: list[float] | None = None
    path: np.ndarray | None = None
    path_history: list[tuple] | None = None  # (outer_iter, node_index, psi, *coords)


def mp_report_dict(rep: MPReport) -> dict:
    d = {
        "classification": rep.classification,
        "level_c": rep.level_c,
        "v": None if rep.v is None else [float(w) for w in rep.v],
        "ring_infimum": rep.ring_infimum,
        "endpoint_max": rep.endpoint_max,
        "outer_iters": rep.outer_iters,
        "psi_at_v": rep.psi_at_v,
        "subgrad_at_v": rep.subgrad_at_v,
    }
    if rep.preimage is not None:
        d["preimage"] = [float(w) for w in rep.preimage]
    if rep.distinct_from_endpoints is not None:
        d["distinct_from_endpoints"] = rep.distinct_from_endpoints
    return d


def _subgrad_measure(shifted: ShiftedMap, x: np.ndarray, kink_tol: float) -> float:
    try:
        _, gnorm = _min_norm_subgrad(shifted.map, x, kink_tol)
        return gnorm
    except (EvaluationError, PatternExplosionError):
        return float("inf")


def _refine_critical(shifted: ShiftedMap, x0: np.ndarray, step0: float,
                     kink_tol: float, ball: float, max_evals: int = 400):
    """Compass search minimizing the subgradient measure h(x).

    h vanishes exactly at critical points of psi and is measurable far
    below the sqrt(eps) floor that value-based localization hits, so this
    pins the candidate to certificate-grade accuracy.  First-improvement
    steps double, failed sweeps halve; excursions are capped at the
    divergence ball (a valley escaping to infinity drives h to zero while
    the iterate norm blows up, which the caller then classifies).
    """
    n = x0.size
    x = x0.copy()
    hx = _subgrad_measure(shifted, x, kink_tol)
    step = step0
    evals = 0
    dirs = [s * e for e in np.eye(n) for s in (1.0, -1.0)]
    while step > 1e-13 and evals < max_evals and hx > 0.0:
        improved = False
        for d in dirs:
            cand = x + step * d
            if np.linalg.norm(cand) > ball:
                continue
            hc = _subgrad_measure(shifted, cand, kink_tol)
            evals += 1
            if hc < hx:
                x, hx = cand, hc
                improved = True
                break
        step = step * 2.0 if improved else step * 0.5
    return x, hx


def _descend_node(shifted: ShiftedMap, x: np.ndarray, step: float,
                  kink_tol: float) -> np.ndarray:
    try:
        val = psi_value(shifted, x)
        g, gnorm = _min_norm_subgrad(shifted.map, x, kink_tol)
    except (EvaluationError, PatternExplosionError):
        return x
    if gnorm <= 1e-300:
        return x
    # full step-length trial along the normalized direction: drift through
    # flat valleys must not slow down as the subgradient decays
    t = step / gnorm
    for _ in range(12):
        cand = x - t * g
        try:
            cval = psi_value(shifted, cand)
        except (EvaluationError, PatternExplosionError):
            t *= 0.5
            continue
        if cval <= val - 1e-4 * t * gnorm * gnorm:
            return cand
        t *= 0.5
    return x


def _initial_path(shifted: ShiftedMap, e: np.ndarray, opts: MPOptions) -> PathPolyline:
    m_nodes = opts.n_nodes
    s = np.linspace(0.0, 1.0, m_nodes)[:, None]
    segment = s * e[None, :]

    rng = np.random.default_rng((opts.seed, 7))
    perp = rng.standard_normal(e.size)
    ee = e / np.linalg.norm(e)
    perp -= (perp @ ee) * ee
    nrm = np.linalg.norm(perp)
    if nrm > 1e-12:
        perp = perp / nrm * 0.25 * np.linalg.norm(e)
        bent = segment + np.sin(np.pi * s) * perp[None, :]
    else:
        bent = segment

    def path_max(nodes):
        worst = -np.inf
        for p in nodes:
            try:
                worst = max(worst, psi_value(shifted, p))
            except (EvaluationError, PatternExplosionError):
                return float("inf")
        return worst

    return PathPolyline(segment if path_max(segment) <= path_max(bent) else bent)


def _classify(shifted: ShiftedMap, e: np.ndarray, v: np.ndarray,
              came_from: np.ndarray, opts: MPOptions,
              base_report: MPReport) -> MPReport:
    """Resolve a converged critical-point candidate.

    Order: a successful polish to a zero of g away from both endpoints is
    another preimage; otherwise an escaping flat valley (walked out to the
    divergence ball with the objective never increasing) points at a
    compactness failure; otherwise a singular rank certificate at v + x2
    explains the positive-level critical point.  Anything else stays
    unresolved as iteration_cap.  The escape test runs before the
    certificate because a candidate drifting to infinity makes the local
    Jacobian arbitrarily ill-conditioned, which would read as a spurious
    singular point.
    """
    polish_opts = SolveOptions(x0=v, seed=opts.seed, tol_residual=opts.preimage_tol,
                               max_iters=300, sampling_radius=1e-3,
                               kink_tol=opts.kink_tol)
    polish = minimize_phi(shifted.map, np.zeros(shifted.map.n_out), polish_opts)
    if polish.residual <= opts.preimage_tol:
        vp = polish.x_star
        sep = min(float(np.linalg.norm(vp)), float(np.linalg.norm(vp - e)))
        if sep > opts.separation_tol:
            return dataclasses.replace(
                base_report,
                classification=SECOND_PREIMAGE,
                v=vp,
                psi_at_v=polish.phi_value,
                subgrad_at_v=polish.subgradient_norm_est,
                preimage=vp + shifted.x2,
                distinct_from_endpoints=True,
            )
        # the polish slid into a known endpoint; keep analyzing the candidate
    psi_v = base_report.psi_at_v if base_report.psi_at_v is not None else psi_value(shifted, v)
    fallback = None
    drift = v - came_from
    drift_norm = float(np.linalg.norm(drift))
    if drift_norm > 1e-300:  # direction the refinement traveled; the local
        fallback = drift / drift_norm  # subgradient may have underflowed to zero
    _, _, _, escaped = _drift_walk(shifted.map, np.zeros(shifted.map.n_out), v,
                                   psi_v, opts.kink_tol, opts.divergence_ball, fallback)
    if escaped:
        return dataclasses.replace(base_report, classification=PS_FAILURE)
    saddle_base_point = v + shifted.x2
    gj = limiting_jacobians(shifted.base, saddle_base_point, opts.kink_tol)
    cert = max_rank_certificate(gj, opts.sigma_min, opts.hull_probes, opts.seed)
    if cert.status == SINGULAR:
        return dataclasses.replace(base_report, classification=SINGULAR_SADDLE)
    return dataclasses.replace(base_report, classification=ITERATION_CAP)


def mountain_pass_search(shifted: ShiftedMap, e, opts: MPOptions | None = None) -> MPReport:
    """String-method minimax search for psi between the zeros 0 and ``e``.

    The ring condition is certified first (sampled infimum on the sphere
    of radius ``ring_rho`` must exceed both endpoint values); without it
    the minimax level is meaningless and the report says so.  The reported
    level is the best (lowest) path maximum seen, which makes it
    nonincreasing across outer iterations by construction.
    """
    opts = opts if opts is not None else MPOptions()
    e = np.array([float(w) for w in e])
    if e.shape != (shifted.map.n_in,):
        raise MapValidationError("endpoint dimension mismatch")
    e_norm = float(np.linalg.norm(e))
    if e_norm == 0.0:
        raise MapValidationError("endpoints coincide; the search needs u1 != u2")

    psi0 = psi_value(shifted, np.zeros_like(e))
    psie = psi_value(shifted, e)
    endpoint_max = max(psi0, psie)
    rho = opts.ring_rho if opts.ring_rho is not None else e_norm / 4.0
    if not 0.0 < rho < e_norm:
        raise MapValidationError("ring radius must lie strictly between 0 and ||e||")
    ring_inf = ring_infimum(shifted, rho, opts.ring_samples, opts.seed,
                            opts.ring_refine_iters, kink_tol=opts.kink_tol)

    report = MPReport(classification=RING_FAILED, level_c=None, v=None,
                      ring_infimum=ring_inf, endpoint_max=endpoint_max)
    if not ring_inf > endpoint_max + opts.ring_margin:
        return report

    path = _initial_path(shifted, e, opts)
    history: list[float] = []
    path_history: list[tuple] | None = [] if opts.record_history else None
    best_level = float("inf")
    best_v: np.ndarray | None = None

    for outer in range(1, opts.max_outer + 1):
        nodes = path.nodes
        for i in range(1, len(nodes) - 1):
            nodes[i] = _descend_node(shifted, nodes[i], opts.step, opts.kink_tol)
        path = PathPolyline(nodes).reparametrized()

        psis = np.array([psi_value(shifted, p) for p in path.nodes])
        j = int(np.argmax(psis))
        level = float(psis[j])
        if level < best_level:
            best_level, best_v = level, path.nodes[j].copy()
        history.append(best_level)
        if path_history is not None:
            for idx, p in enumerate(path.nodes):
                path_history.append((outer, idx, float(psis[idx])) + tuple(p))

        report = dataclasses.replace(
            report, level_c=best_level, v=best_v, outer_iters=outer,
            level_history=history, path=path.nodes.copy(), path_history=path_history)

        gnorm = _subgrad_measure(shifted, path.nodes[j], opts.kink_tol)
        if gnorm <= 100.0 * opts.tol or outer % 10 == 0 or outer == opts.max_outer:
            # the raw max node only tracks the crest to node-spacing
            # accuracy; pin the candidate before judging convergence
            v_ref, h_ref = _refine_critical(shifted, path.nodes[j], opts.step,
                                            opts.kink_tol, opts.divergence_ball)
            if h_ref <= opts.tol:
                converged = dataclasses.replace(
                    report, v=v_ref, psi_at_v=psi_value(shifted, v_ref),
                    subgrad_at_v=h_ref)
                return _classify(shifted, e, v_ref, path.nodes[j].copy(), opts, converged)

        node_norms = np.linalg.norm(path.nodes, axis=1)
        if float(node_norms.max()) > opts.divergence_ball and len(history) > opts.plateau_window:
            recent = history[-opts.plateau_window:]
            if abs(recent[0] - recent[-1]) <= opts.plateau_rtol * max(1.0, abs(recent[-1])):
                return dataclasses.replace(report, classification=PS_FAILURE,
                                           psi_at_v=best_level, subgrad_at_v=gnorm)

    return dataclasses.replace(report, classification=ITERATION_CAP,
                               psi_at_v=best_level)


@dataclass
class ProbeOptions:
    starts: int = 16
    start_box: tuple[float, float] = (-10.0, 10.0)
    seed: int = 0
    dedup_tol: float = 1e-6
    solve: SolveOptions | None = None
    mp: MPOptions | None = None


@dataclass(eq=False)
class InjectivityReport:
    outcome: str
    preimages: list[np.ndarray]
    starts_used: int
    mp: MPReport | None = None


def injectivity_report_dict(rep: InjectivityReport) -> dict:
    return {
        "outcome": rep.outcome,
        "preimages": [[float(v) for v in p] for p in rep.preimages],
        "starts_used": rep.starts_used,
        "mp": None if rep.mp is None else mp_report_dict(rep.mp),
    }


def injectivity_probe(m: MapDefinition, a, opts: ProbeOptions | None = None) -> InjectivityReport:
    """Hunt for distinct preimages of ``a`` by seeded multi-start inversion
    and, when at least two are found, run the mountain-pass search between
    the lexicographically first pair.

    One preimage across all starts yields a "no counterexample found"
    report; none at all yields a surjectivity-failure report instead.
    """
    opts = opts if opts is not None else ProbeOptions()
    a = np.asarray(a, dtype=float)
    solve_template = opts.solve if opts.solve is not None else SolveOptions()
    rng = np.random.default_rng(opts.seed)
    lo, hi = opts.start_box

    found: list[np.ndarray] = []
    for i in range(opts.starts):
        x0 = rng.uniform(lo, hi, m.n_in)
        run = dataclasses.replace(solve_template, x0=x0, seed=opts.seed + i)
        rep = invert(m, a, run)
        if rep.status == CONVERGED:
            if not any(np.linalg.norm(rep.x_star - q) <= opts.dedup_tol for q in found):
                found.append(rep.x_star)
    found.sort(key=lambda p: tuple(p))

    if not found:
        return InjectivityReport(PROBE_NO_PREIMAGE, [], opts.starts)
    if len(found) == 1:
        return InjectivityReport(PROBE_NO_COUNTEREXAMPLE, found, opts.starts)

    x2, x1 = found[0], found[1]
    shifted = shift_map(m, x2, a)
    e = x1 - x2
    mp_opts = opts.mp if opts.mp is not None else MPOptions(seed=opts.seed)
    mp = mountain_pass_search(shifted, e, mp_opts)
    return InjectivityReport(PROBE_MP, found, opts.starts, mp=mp)
