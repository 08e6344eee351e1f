"""Descent, Newton polish and the composed global inversion driver."""

import numpy as np
import pytest

from lipinv import (
    MapValidationError,
    SolveOptions,
    eval_map,
    invert,
    min_norm_hull_element,
    minimize_phi,
    parse_map,
    project_simplex,
    semismooth_newton_polish,
)

KINKED = parse_map("f(x, y) = (2*x - abs(x), abs(y) - 2*y)")
SMOOTH = parse_map("f(x, y) = (x^2 - y^2, 2*x*y)")
IDENTITY = parse_map("f(x, y) = (x, y)")


def kink_inverse(u, v):
    return np.array([u if u >= 0 else u / 3.0, -v if v <= 0 else -v / 3.0])


# ---------------------------------------------------------------------------
# simplex projection and the min-norm QP
# ---------------------------------------------------------------------------

def test_project_simplex_basic():
    assert np.allclose(project_simplex(np.array([0.5, 0.5])), [0.5, 0.5])
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.standard_normal(rng.integers(1, 12)) * 3
        w = project_simplex(v)
        assert np.all(w >= 0) and np.isclose(w.sum(), 1.0)
        assert np.allclose(project_simplex(w), w, atol=1e-12)


def test_min_norm_element_known_cases():
    g, lam = min_norm_hull_element([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.allclose(g, [0.5, 0.5]) and np.allclose(lam, [0.5, 0.5])
    g, _ = min_norm_hull_element([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
    assert np.linalg.norm(g) <= 1e-9
    g, lam = min_norm_hull_element([np.array([2.0, -1.0])])
    assert np.array_equal(g, [2.0, -1.0]) and lam.tolist() == [1.0]


def test_min_norm_element_vs_dense_sampling():
    rng = np.random.default_rng(42)
    for _ in range(20):
        G = rng.standard_normal((rng.integers(2, 7), 3))
        g, lam = min_norm_hull_element(G)
        assert np.all(lam >= -1e-12) and np.isclose(lam.sum(), 1.0)
        sampled = min(
            float(np.linalg.norm(G.T @ w))
            for w in rng.dirichlet(np.ones(len(G)), size=3000))
        assert np.linalg.norm(g) <= sampled + 1e-6


# ---------------------------------------------------------------------------
# gradient-sampling descent
# ---------------------------------------------------------------------------

def test_descent_on_kinked_bowl():
    rep = minimize_phi(KINKED, [1, -1], SolveOptions(x0=[5, 5]))
    assert rep.status == "converged"
    assert rep.residual <= 1e-8
    assert np.allclose(rep.x_star, [1.0, 1.0], atol=1e-7)


def test_descent_zero_iterations_at_preimage():
    x0 = [2.0, -3.0]
    rep = minimize_phi(KINKED, eval_map(KINKED, x0), SolveOptions(x0=x0))
    assert rep.status == "converged" and rep.iterations == 0
    assert np.array_equal(rep.x_star, x0)


def test_descent_stalls_at_rank_degenerate_point():
    rep = minimize_phi(SMOOTH, [1, 0], SolveOptions(x0=[0, 0]))
    assert rep.status == "stalled_at_nonzero_residual"
    assert rep.phi_value == pytest.approx(0.5, abs=1e-12)
    assert rep.subgradient_norm_est <= 1e-9
    assert rep.residual > 1e-8


def test_descent_trace_is_monotone():
    opts = SolveOptions(x0=[7, -6], record_trace=True)
    rep = minimize_phi(KINKED, [2, 2], opts)
    phis = [row[1] for row in rep.trace]
    assert all(b <= a + 1e-15 for a, b in zip(phis, phis[1:]))
    assert rep.trace[0][0] == 0


def test_options_validation():
    with pytest.raises(MapValidationError):
        minimize_phi(KINKED, [0, 0], SolveOptions(x0=[1, 1], tol_residual=0.0))
    with pytest.raises(MapValidationError):
        minimize_phi(KINKED, [0, 0], SolveOptions(x0=[1, 1], armijo_c1=1.5))
    with pytest.raises(MapValidationError):
        minimize_phi(parse_map("f(x, y) = (x + y)"), [0.0], SolveOptions(x0=[1, 1]))


# ---------------------------------------------------------------------------
# semismooth Newton
# ---------------------------------------------------------------------------

def test_newton_exact_on_negative_orthant():
    rep = semismooth_newton_polish(KINKED, [-3, 3], [-0.9, -1.2])
    assert rep.status == "converged"
    assert rep.residual <= 1e-12
    assert rep.iterations <= 3
    assert np.allclose(rep.x_star, [-1.0, -1.0], atol=1e-12)


def test_newton_identity_single_step():
    rep = semismooth_newton_polish(IDENTITY, [4.2, -3.3], [100.0, 100.0])
    assert rep.status == "converged" and rep.iterations == 1
    assert np.allclose(rep.x_star, [4.2, -3.3], atol=1e-12)


def test_newton_from_wrong_orthant():
    rep = semismooth_newton_polish(KINKED, [1, -1], [-2.0, 3.0])
    assert rep.status == "converged"
    assert rep.iterations <= 4
    assert np.allclose(rep.x_star, [1.0, 1.0], atol=1e-12)


def test_newton_single_step_in_correct_region():
    # piecewise-linear map, start already in the solution's pattern region
    rep = semismooth_newton_polish(KINKED, [1, -1], [5.0, 4.0])
    assert rep.status == "converged" and rep.iterations == 1
    assert rep.residual <= 1e-12


def test_newton_all_singular_context():
    rep = semismooth_newton_polish(SMOOTH, [1, 0], [0.0, 0.0], max_steps=5)
    assert rep.status == "stalled_at_nonzero_residual"
    assert rep.context == "singular_element_found"


# ---------------------------------------------------------------------------
# composed inversion
# ---------------------------------------------------------------------------

def test_invert_trivial_zero():
    rep = invert(KINKED, [0, 0], SolveOptions(seed=1))
    assert rep.status == "converged"
    assert np.allclose(rep.x_star, [0.0, 0.0], atol=1e-8)


def test_invert_matches_analytic_branch_inverse():
    rep = invert(KINKED, [2.4, -0.6], SolveOptions(seed=1))
    assert rep.status == "converged"
    assert np.allclose(rep.x_star, kink_inverse(2.4, -0.6), atol=1e-6)
    assert np.allclose(rep.x_star, [2.4, 0.6], atol=1e-6)


def test_invert_smooth_two_preimages():
    rep = invert(SMOOTH, [1, 0], SolveOptions(seed=2))
    assert rep.status == "converged"
    assert min(np.linalg.norm(rep.x_star - np.array([1.0, 0.0])),
               np.linalg.norm(rep.x_star - np.array([-1.0, 0.0]))) <= 1e-6


def test_invert_round_trip_property():
    rng = np.random.default_rng(3)
    for _ in range(15):
        y = rng.uniform(-4, 4, 2)
        rep = invert(KINKED, y, SolveOptions(seed=5))
        assert rep.status == "converged"
        assert np.linalg.norm(eval_map(KINKED, rep.x_star) - y) <= 1e-8


def test_invert_surjectivity_grid_multiple_starts():
    # every target on a coarse grid from several far-apart starts
    grid = np.linspace(-5, 5, 7)
    rng = np.random.default_rng(17)
    for u in grid:
        for v in grid:
            for _ in range(2):
                x0 = rng.uniform(-10, 10, 2)
                rep = invert(KINKED, [u, v], SolveOptions(x0=x0))
                assert rep.status == "converged"
                assert np.allclose(rep.x_star, kink_inverse(u, v), atol=1e-6)


def test_invert_deterministic():
    a = invert(KINKED, [1.7, 0.3], SolveOptions(seed=7))
    b = invert(KINKED, [1.7, 0.3], SolveOptions(seed=7))
    assert np.array_equal(a.x_star, b.x_star)
    assert a.iterations == b.iterations and a.residual == b.residual


def test_invert_reports_stall_as_best_attempt():
    rep = invert(SMOOTH, [1, 0], SolveOptions(x0=[0.0, 0.0]))
    assert rep.status == "stalled_at_nonzero_residual"
    assert rep.subgradient_norm_est <= 1e-9
    assert rep.residual > 1e-8
