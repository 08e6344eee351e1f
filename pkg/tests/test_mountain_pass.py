"""Shifted maps, ring certificates and the saddle search."""

import numpy as np
import pytest

from lipinv import (
    MapValidationError,
    MPOptions,
    MPReport,
    PathPolyline,
    ProbeOptions,
    active_patterns,
    eval_map,
    injectivity_probe,
    mountain_pass_search,
    parse_map,
    psi_value,
    ring_infimum,
    shift_map,
)
from lipinv.mountain_pass import _classify

KINKED = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")
SMOOTH = parse_map("f(x, y) = (x^2 - y^2, 2*x*y)")
IDENTITY = parse_map("f(x, y) = (x, y)")
EXPMAP = parse_map("f(x, y) = (exp(x)*cos(y), exp(x)*sin(y))")


# ---------------------------------------------------------------------------
# shifted maps
# ---------------------------------------------------------------------------

def test_zero_shift_is_identity_rewrite():
    sh = shift_map(KINKED, [0, 0], [0, 0])
    assert sh.map.nodes == KINKED.nodes
    assert sh.map.outputs == KINKED.outputs


def test_shift_hand_example():
    # f(-1, 0) = (1, 0), so shifting by x2 = (-1, 0), a = (1, 0) zeroes both
    # endpoints; e = x1 - x2 = (2, 0)
    sh = shift_map(SMOOTH, [-1, 0], [1, 0])
    assert np.array_equal(eval_map(sh.map, [0, 0]), [0.0, 0.0])
    assert np.array_equal(eval_map(sh.map, [2, 0]), [0.0, 0.0])


def test_shift_evaluates_exactly_like_composition():
    rng = np.random.default_rng(5)
    x2 = np.array([0.3, -1.7])
    a = np.array([2.5, -0.25])
    sh = shift_map(KINKED, x2, a)
    for _ in range(25):
        x = rng.uniform(-3, 3, 2)
        direct = eval_map(KINKED, x + x2) - a
        assert np.array_equal(eval_map(sh.map, x), direct)


def test_shift_preserves_kink_structure():
    sh = shift_map(KINKED, [0.5, -0.5], [0, 0])
    assert len(sh.map.nonsmooth_nodes) == len(KINKED.nonsmooth_nodes)
    # patterns at shifted input match the base map at x + x2
    x = np.array([-0.5, 0.5])
    assert len(active_patterns(sh.map, x)) == len(active_patterns(KINKED, x + sh.x2))


def test_shift_dimension_checks():
    with pytest.raises(MapValidationError):
        shift_map(KINKED, [1.0], [0, 0])
    with pytest.raises(MapValidationError):
        shift_map(KINKED, [1.0, 2.0], [0.0])


def test_psi_nonnegative_zero_only_at_preimages():
    sh = shift_map(SMOOTH, [-1, 0], [1, 0])
    rng = np.random.default_rng(11)
    for _ in range(30):
        x = rng.uniform(-2, 2, 2)
        assert psi_value(sh, x) >= 0.0
    assert psi_value(sh, [0, 0]) == 0.0
    assert psi_value(sh, [2, 0]) == 0.0


# ---------------------------------------------------------------------------
# ring infimum
# ---------------------------------------------------------------------------

def test_ring_infimum_identity_exact():
    sh = shift_map(IDENTITY, [0, 0], [0, 0])
    assert ring_infimum(sh, 0.7, seed=0) == pytest.approx(0.5 * 0.7 ** 2, abs=1e-9)


def test_ring_infimum_kinked_dense_sweep_oracle():
    sh = shift_map(KINKED, [0, 0], [0, 0])
    angles = np.linspace(0, 2 * np.pi, 4001)
    sweep = min(psi_value(sh, [np.cos(t), np.sin(t)]) for t in angles)
    est = ring_infimum(sh, 1.0, seed=0)
    assert est == pytest.approx(0.5, abs=1e-3)
    assert est <= sweep + 1e-9


def test_ring_infimum_smooth_dense_sweep_oracle():
    sh = shift_map(SMOOTH, [-1, 0], [1, 0])
    rho = 0.5
    angles = np.linspace(0, 2 * np.pi, 10_000)
    sweep = min(psi_value(sh, [rho * np.cos(t), rho * np.sin(t)]) for t in angles)
    est = ring_infimum(sh, rho, seed=0)
    assert est <= sweep + 1e-9
    assert est >= sweep - 5e-3


def test_ring_infimum_rejects_small_sample_count():
    sh = shift_map(IDENTITY, [0, 0], [0, 0])
    with pytest.raises(MapValidationError):
        ring_infimum(sh, 1.0, n_samples=3)
    with pytest.raises(MapValidationError):
        ring_infimum(sh, -1.0)


# ---------------------------------------------------------------------------
# path polyline
# ---------------------------------------------------------------------------

def test_polyline_reparametrizes_to_equal_gaps():
    rng = np.random.default_rng(3)
    nodes = np.cumsum(rng.uniform(0.1, 2.0, (12, 1)) * rng.standard_normal((12, 2)), axis=0)
    path = PathPolyline(nodes).reparametrized()
    gaps = np.linalg.norm(np.diff(path.nodes, axis=0), axis=1)
    assert np.max(np.abs(gaps - gaps.mean())) <= 0.01 * gaps.mean()
    assert np.array_equal(path.nodes[0], nodes[0])
    assert np.array_equal(path.nodes[-1], nodes[-1])


def test_polyline_needs_three_nodes():
    with pytest.raises(MapValidationError):
        PathPolyline(np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# mountain-pass search
# ---------------------------------------------------------------------------

def test_search_rejects_coincident_endpoints():
    sh = shift_map(KINKED, [0, 0], [0, 0])
    with pytest.raises(MapValidationError):
        mountain_pass_search(sh, [0, 0])


def test_ring_condition_failure_reported():
    # endpoints of the identity functional are not both low points
    sh = shift_map(IDENTITY, [0, 0], [0, 0])
    rep = mountain_pass_search(sh, [1.0, 0.0])
    assert rep.classification == "ring_condition_failed"
    assert rep.ring_infimum < rep.endpoint_max
    assert rep.level_c is None


def test_singular_saddle_between_square_roots():
    sh = shift_map(SMOOTH, [-1, 0], [1, 0])
    rep = mountain_pass_search(sh, [2, 0], MPOptions(seed=0))
    assert rep.classification == "singular_saddle"
    assert rep.level_c == pytest.approx(0.5, abs=1e-3)
    assert np.linalg.norm(rep.v + sh.x2) <= 1e-3
    assert rep.level_c >= rep.ring_infimum - 1e-6
    # reported level history never increases
    hist = rep.level_history
    assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_ps_failure_suspected_on_periodic_exponential():
    sh = shift_map(EXPMAP, [0.0, 2 * np.pi], [1.0, 0.0])
    rep = mountain_pass_search(sh, [0.0, -2 * np.pi], MPOptions(step=0.5, seed=0))
    assert rep.classification == "ps_failure_suspected"
    assert rep.level_c >= rep.ring_infimum - 1e-6


def test_ps_failure_via_in_loop_divergence_ball():
    sh = shift_map(EXPMAP, [0.0, 2 * np.pi], [1.0, 0.0])
    opts = MPOptions(step=0.5, seed=0, divergence_ball=12.0, plateau_window=10,
                     max_outer=250)
    rep = mountain_pass_search(sh, [0.0, -2 * np.pi], opts)
    assert rep.classification == "ps_failure_suspected"


def test_second_preimage_classification_branch():
    # cubic with zeros at x = 0, 1, 4; pretend only 0 and 4 were known and
    # hand the classifier a candidate inside the middle zero's basin
    cubic = parse_map("f(x, y) = (x*(x - 1)*(x - 4), y)")
    sh = shift_map(cubic, [0, 0], [0, 0])
    e = np.array([4.0, 0.0])
    base = MPReport(classification="iteration_cap", level_c=1.0,
                    v=None, ring_infimum=0.1, endpoint_max=0.0)
    out = _classify(sh, e, np.array([0.8, 0.0]), np.array([0.8, 0.0]),
                    MPOptions(seed=0), base)
    assert out.classification == "second_preimage_found"
    assert out.distinct_from_endpoints is True
    assert np.linalg.norm(out.preimage - np.array([1.0, 0.0])) <= 1e-6
    assert np.linalg.norm(eval_map(cubic, out.preimage)) <= 1e-6
    assert out.psi_at_v <= 1e-6


# ---------------------------------------------------------------------------
# injectivity probe
# ---------------------------------------------------------------------------

def test_probe_finds_both_square_roots_and_saddle():
    rep = injectivity_probe(SMOOTH, [1, 0], ProbeOptions(seed=5))
    assert rep.outcome == "mp_analysis"
    assert len(rep.preimages) == 2
    assert np.linalg.norm(rep.preimages[0] - np.array([-1.0, 0.0])) <= 1e-6
    assert np.linalg.norm(rep.preimages[1] - np.array([1.0, 0.0])) <= 1e-6
    assert rep.mp.classification == "singular_saddle"
    assert rep.mp.level_c == pytest.approx(0.5, abs=1e-3)


def test_probe_injective_map_reports_no_counterexample():
    rep = injectivity_probe(KINKED, [1, -1], ProbeOptions(seed=5, starts=32))
    assert rep.outcome == "no_counterexample_found"
    assert len(rep.preimages) == 1
    assert np.allclose(rep.preimages[0], [1.0, 1.0], atol=1e-6)
    assert rep.starts_used == 32


def test_probe_identity_single_preimage():
    rep = injectivity_probe(IDENTITY, [0.25, -8.0], ProbeOptions(seed=2, starts=6))
    assert rep.outcome == "no_counterexample_found"
    assert np.allclose(rep.preimages[0], [0.25, -8.0], atol=1e-8)


def test_probe_reports_missing_preimage_separately():
    # exp(x) never reaches -1, so the target has no preimage at all
    m = parse_map("f(x, y) = (exp(x), y)")
    rep = injectivity_probe(m, [-1.0, 0.0], ProbeOptions(seed=4, starts=6))
    assert rep.outcome == "no_preimage_found"
    assert rep.preimages == []
    assert rep.mp is None


def test_probe_three_zero_cubic():
    cubic = parse_map("f(x, y) = (x*(x - 1)*(x - 4), y)")
    rep = injectivity_probe(cubic, [0, 0], ProbeOptions(seed=3))
    assert rep.outcome == "mp_analysis"
    assert len(rep.preimages) == 3
    assert rep.mp.classification == "singular_saddle"
    assert rep.mp.level_c >= rep.mp.ring_infimum - 1e-6
