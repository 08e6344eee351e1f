"""Acceptance gate: one test per criterion, one printed line per pass.

Criteria at a glance: (1) grid inversion of the kinked bijection against
its branch-wise inverse under a runtime budget, (2) exact limiting
Jacobians and rank certification, (3) one-dimensional generalized-
derivative sanity, (4) rank-degeneracy witness via the saddle search,
(5) coercivity/compactness failure witness, (6) piece-Jacobian
correctness against central differences, (7) the minimax level never
drops below the certified ring bound, (8) byte-identical seeded CLI
reports.
"""

import json
import time

import numpy as np

from lipinv import (
    MPOptions,
    ProbeOptions,
    SolveOptions,
    ZOO,
    active_patterns,
    coercivity_scan,
    eval_map,
    eval_piece_jacobian,
    gen_dir_derivative,
    injectivity_probe,
    invert,
    limiting_jacobians,
    max_rank_certificate,
    mountain_pass_search,
    parse_map,
    ps_sequence_probe,
    shift_map,
    switching_values,
)
from lipinv.cli import main as cli_main

KINKED = ZOO["paper"].load()

# mountain-pass reports produced while the suite runs, consumed by criterion 7
MP_RUNS: list = []


def kink_inverse(u, v):
    return np.array([u if u >= 0 else u / 3.0, -v if v <= 0 else -v / 3.0])


def test_criterion_1_grid_inversion_against_branch_inverse():
    grid = np.linspace(-5.0, 5.0, 21)
    opts = SolveOptions(x0=[0.0, 0.0])
    t0 = time.perf_counter()
    worst_residual = 0.0
    worst_err = 0.0
    solved = 0
    for u in grid:
        for v in grid:
            rep = invert(KINKED, [u, v], opts)
            assert rep.status == "converged", (u, v)
            err = float(np.linalg.norm(rep.x_star - kink_inverse(u, v)))
            worst_residual = max(worst_residual, rep.residual)
            worst_err = max(worst_err, err)
            solved += 1
    elapsed = time.perf_counter() - t0
    assert solved == 441
    assert worst_residual <= 1e-8
    assert worst_err <= 1e-6
    assert elapsed < 5.0
    print(f"\nACCEPTANCE 1 PASS: 441/441 targets inverted, max residual "
          f"{worst_residual:.2e}, max inverse error {worst_err:.2e}, {elapsed:.2f}s")


def test_criterion_2_rank_certification_of_kinked_map():
    gj = limiting_jacobians(KINKED, [0, 0])
    expected = [np.diag([1.0, -1.0]), np.diag([1.0, -3.0]),
                np.diag([3.0, -1.0]), np.diag([3.0, -3.0])]
    assert len(gj.elements) == 4
    for got, want in zip(gj.elements, expected):
        assert np.array_equal(got, want)
    cert = max_rank_certificate(gj, seed=7)
    assert cert.status == "certified_maximal_rank"
    assert abs(cert.min_singular_value - 1.0) <= 1e-12

    certified = 0
    for u in np.linspace(-2, 2, 5):
        for v in np.linspace(-2, 2, 5):
            c = max_rank_certificate(limiting_jacobians(KINKED, [u, v]), seed=7)
            certified += c.status == "certified_maximal_rank"
    assert certified == 25
    print(f"\nACCEPTANCE 2 PASS: four exact limiting Jacobians, min singular "
          f"value {cert.min_singular_value}, 25/25 grid points certified")


def test_criterion_3_one_dimensional_generalized_calculus():
    absmap = parse_map("f(x) = (abs(x))")
    gj = limiting_jacobians(absmap, [0.0])
    assert sorted(float(e[0, 0]) for e in gj.elements) == [-1.0, 1.0]
    checked = []
    for z in (0.5, 1.0, 2.0, -0.5, -1.0, -2.0):
        est = gen_dir_derivative(absmap, [0.0], [z], seed=7)
        assert 0.95 * abs(z) <= est.value <= abs(z) + 1e-12
        checked.append(est.value)
    print(f"\nACCEPTANCE 3 PASS: abs has limiting elements {{-1, +1}}; "
          f"directional estimates {['%.3f' % c for c in checked]}")


def test_criterion_4_rank_degeneracy_witness():
    m = ZOO["complexsq"].load()
    probe = injectivity_probe(m, [1, 0], ProbeOptions(seed=7))
    assert probe.outcome == "mp_analysis"
    assert len(probe.preimages) == 2
    assert np.linalg.norm(probe.preimages[0] - np.array([-1.0, 0.0])) <= 1e-6
    assert np.linalg.norm(probe.preimages[1] - np.array([1.0, 0.0])) <= 1e-6
    mp = probe.mp
    MP_RUNS.append(mp)
    assert mp.classification == "singular_saddle"
    saddle = mp.v + np.asarray(probe.preimages[0])
    assert np.linalg.norm(saddle) <= 1e-3
    assert abs(mp.level_c - 0.5) <= 1e-3
    cert = max_rank_certificate(limiting_jacobians(m, saddle), seed=7)
    assert cert.status == "singular_element_found"
    print(f"\nACCEPTANCE 4 PASS: preimages near (+-1, 0), singular saddle at "
          f"{saddle.round(9).tolist()}, level {mp.level_c:.6f}, certificate "
          f"{cert.status}")


def test_criterion_5_compactness_failure_witness():
    m = ZOO["expmap"].load()
    scan = coercivity_scan(m, seed=7)
    assert scan.verdict == "non_coercive_witness"
    decayed = float(np.linalg.norm(eval_map(m, 10.0 * np.array([-1.0, 0.0]))))
    assert decayed < 1e-3
    tr = ps_sequence_probe(m, [0, 0], seed=7)
    assert tr.verdict == "ps_failure_suspected"
    witness = scan.witness_direction.tolist()
    print(f"\nACCEPTANCE 5 PASS: non-coercive witness ({witness}), ||f|| at "
          f"radius 10 along (-1,0) = {decayed:.2e}, probe verdict {tr.verdict}")


def test_criterion_6_piece_jacobians_match_central_differences():
    boxes = {"expmap": 3.0}
    total = 0
    worst = 0.0
    for name, entry in ZOO.items():
        m = entry.load()
        half = boxes.get(name, 4.0)
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 200:
            x = rng.uniform(-half, half, m.n_in)
            pats = active_patterns(m, x, 1e-7)
            sw = switching_values(m, x)
            if len(pats) != 1 or (sw and min(abs(s) for s in sw) < 1e-4):
                continue
            J = eval_piece_jacobian(m, x, pats[0])
            h = 1e-6
            cols = []
            for i in range(m.n_in):
                e = np.zeros(m.n_in)
                e[i] = h
                cols.append((eval_map(m, x + e) - eval_map(m, x - e)) / (2 * h))
            fd = np.stack(cols, axis=1)
            rel = float(np.linalg.norm(J - fd) / max(1.0, np.linalg.norm(J)))
            assert rel <= 1e-5, (name, x.tolist(), rel)
            worst = max(worst, rel)
            checked += 1
        total += checked
    assert total == 200 * len(ZOO)
    print(f"\nACCEPTANCE 6 PASS: {total} smooth points across {len(ZOO)} maps, "
          f"worst relative Jacobian error {worst:.2e}")


def test_criterion_7_level_respects_ring_bound():
    expmap = ZOO["expmap"].load()
    sh = shift_map(expmap, [0.0, 2 * np.pi], [1.0, 0.0])
    MP_RUNS.append(mountain_pass_search(sh, [0.0, -2 * np.pi],
                                        MPOptions(step=0.5, seed=7)))
    cubic = parse_map("f(x, y) = (x*(x - 1)*(x - 4), y)")
    probe = injectivity_probe(cubic, [0, 0], ProbeOptions(seed=7))
    if probe.mp is not None:
        MP_RUNS.append(probe.mp)
    ring_certified = [r for r in MP_RUNS
                      if r.classification != "ring_condition_failed"]
    assert ring_certified
    for rep in ring_certified:
        assert rep.level_c is not None
        assert rep.level_c >= rep.ring_infimum - 1e-6
    print(f"\nACCEPTANCE 7 PASS: {len(ring_certified)} saddle-search runs all "
          f"satisfy level_c >= ring infimum - 1e-6")


def test_criterion_8_cli_reports_byte_identical(capsys, tmp_path):
    suite = [
        ["eval", "--map", "zoo:paper", "--point", "0,0"],
        ["eval", "--map", "zoo:complexsq", "--point", "1,1"],
        ["invert", "--map", "zoo:paper", "--target", "1,-1"],
        ["invert", "--map", "zoo:scaled_paper", "--target", "24,-6"],
        ["certify", "--map", "zoo:paper", "--grid", "-2:2:5x-2:2:5"],
        ["certify", "--map", "zoo:complexsq", "--point", "0,0"],
        ["probe-injectivity", "--map", "zoo:complexsq", "--target", "1,0"],
        ["probe-injectivity", "--map", "zoo:paper", "--target", "1,-1"],
        ["ps-check", "--map", "zoo:expmap", "--target", "0,0"],
        ["zoo"],
    ]

    def run_suite():
        outputs = []
        for argv in suite:
            code = cli_main(argv + ["--seed", "7", "--no-timestamp"])
            outputs.append((code, capsys.readouterr().out))
        return outputs

    first = run_suite()
    second = run_suite()
    assert first == second
    for (code, out), argv in zip(first, suite):
        assert out, argv
        json.loads(out)  # every report is well-formed JSON
    print(f"\nACCEPTANCE 8 PASS: {len(suite)} seeded CLI invocations "
          f"byte-identical across two runs")
