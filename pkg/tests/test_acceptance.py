"""Acceptance criteria 1-13, each at its stated tolerance.

Every test records one PASS/FAIL line, collected into the "acceptance
criteria" section of the pytest summary.
"""
import math
import time

import numpy as np
import pytest

from fraclap.domains import Ball, HalfSpace, Interval
from fraclap.harness import (estimate_admissible_c, run_hardy_suite, sharpness_probe, to_json_lines,
                             verify_hsm_ball, verify_hsm_halfspace)
from fraclap.identities import (BoundVariant, W1FormulaVariant, adjudicate_w1, ball_laplacian_lower_bound,
                                ball_laplacian_pv, chord_pv, dyadic_bounds_many, dyadic_coefficients,
                                g_reduction, ground_state_terms, w1_laplacian_closed,
                                w1_laplacian_lower_bound)
from fraclap.quadrature import MonteCarlo, QuadratureSpec
from fraclap.specfun import beta_fn, c2_const, gamma_fn, kappa, sphere_moment
from fraclap.trialfns import PolyBump, TrialFunction, standard_suite

ALPHA_GRID = [round(1.1 + 0.1 * k, 1) for k in range(9)]
ALPHAS = (1.2, 1.5, 1.8)


def unit(n):
    return Interval(-1.0, 1.0) if n == 1 else Ball((0.0,) * n, 1.0)


def test_01_constants_consistency(criterion):
    worst, positive = 0.0, True
    for n in range(1, 6):
        for a in ALPHA_GRID:
            k = kappa(n, a)
            positive &= k > 0
            worst = max(worst, abs(k - kappa(1, a) * sphere_moment(n, a) / 2) / k)
    ok = worst <= 1e-10 and positive and c2_const(1.0) == 0.0
    criterion(1, ok, f"max rel mismatch {worst:.2e}, c2(1) = {c2_const(1.0)}")
    assert ok


def test_02_gamma_beta_sanity(criterion):
    errs = [abs(gamma_fn(0.5) - math.sqrt(math.pi)), abs(gamma_fn(5.0) - 24.0),
            abs(beta_fn(0.5, 0.5) - math.pi)]
    ok = max(errs) <= 1e-12
    criterion(2, ok, f"max error {max(errs):.1e}")
    assert ok


def test_03_closed_form_adjudication(criterion):
    adj = adjudicate_w1()
    ok = len(adj.matching) == 1 and adj.evenness[adj.matching[0]] <= 1e-12
    criterion(3, ok, f"matching {[v.value for v in adj.matching]}, "
                     f"errors { {k.value: f'{v:.1e}' for k, v in adj.max_rel_error.items()} }")
    assert ok


def test_04_interval_bound(criterion):
    xs = np.linspace(-0.999, 0.999, 1000)
    worst = min(float(np.min(w1_laplacian_closed(xs, a, W1FormulaVariant.SYMMETRIC)
                             - w1_laplacian_lower_bound(xs, a))) for a in ALPHA_GRID)
    ok = worst >= -1e-12
    criterion(4, ok, f"min slack {worst:.3e}")
    assert ok


def test_05_chord_reduction(criterion):
    worst, count = 0.0, 0
    for x in (0.0, 0.3, 0.6, 0.9):
        for hn in (-0.8, 0.1, 0.7):
            for a in ALPHAS:
                h = np.array([math.sqrt(1 - hn * hn), hn])
                g, c = g_reduction(x, h, a), chord_pv(x, h, a)
                worst = max(worst, abs(g - c) / abs(c))
                count += 1
    ok = count >= 27 and worst <= 1e-3
    criterion(5, ok, f"{count} triples, max rel error {worst:.2e}")
    assert ok


def _interior_points(n, m=12, seed=0):
    # |x| <= 0.8 keeps delta >= 0.2
    rng = np.random.default_rng(seed)
    pts = [np.zeros(n)]
    while len(pts) < m:
        p = rng.uniform(-0.8, 0.8, n)
        if np.linalg.norm(p) <= 0.8:
            pts.append(p)
    return pts


def _ball_bound_rows(variant):
    rows = []
    specs = {2: QuadratureSpec(grid_points_per_axis=128),
             3: QuadratureSpec(singular_mode=MonteCarlo(1_000_000, seed=0))}
    for n, spec in specs.items():
        for a in ALPHAS:
            for p in _interior_points(n):
                fv = ball_laplacian_pv(p, n, a, spec)
                bound = ball_laplacian_lower_bound(p, n, a, variant)
                rows.append((n, a, fv.value - bound, 3 * fv.est_error + 1e-9))
    return rows


def test_06_ball_bound(criterion):
    t0 = time.time()
    rows = _ball_bound_rows(BoundVariant.PRINTED)
    bad = sorted({(n, a) for n, a, slack, tol in rows if slack < -tol})
    ok = not bad
    criterion(6, ok, f"{len(rows)} evaluations in {time.time() - t0:.0f}s; "
                     f"violations at (n, alpha) {bad}" if bad else f"{len(rows)} evaluations")
    assert ok


def test_06_ball_bound_with_halved_second_coefficient():
    rows = _ball_bound_rows(BoundVariant.CORRECTED)
    assert all(slack >= -tol for _, _, slack, tol in rows)


def test_07_ground_state_decomposition(criterion):
    t0 = time.time()
    worst, fails = 0.0, []
    for n, method in ((1, "pv"), (2, "reduction")):
        spec = QuadratureSpec()
        for u in standard_suite(unit(n), 1.5):
            gs = ground_state_terms(u, 1.5, spec, potential_method=method)
            full = gs.full_energy.value
            allowed = max(2e-2 * abs(full), gs.error_budget)
            worst = max(worst, abs(gs.residual) / abs(full))
            if abs(gs.residual) > allowed:
                fails.append((n, u.label))
    ok = not fails
    criterion(7, ok, f"max rel residual {worst:.1e} in {time.time() - t0:.0f}s; failures {fails}")
    assert ok


def _hardy_sweep(grid, workers=1):
    spec = QuadratureSpec(grid_points_per_axis=grid)
    return [r for n in (1, 2, 3) for a in ALPHAS
            for r in run_hardy_suite(unit(n), a, spec, workers=workers)]


@pytest.fixture(scope="module")
def hardy_reports():
    return _hardy_sweep(16)


def test_08_hardy(criterion, hardy_reports):
    doubled = _hardy_sweep(32)
    bad = [r.trial for r in hardy_reports + doubled if not r.passed]
    min_rel = min(r.rel_slack for r in hardy_reports + doubled)
    ok = not bad and len(hardy_reports) == len(doubled) >= 9 * 20
    criterion(8, ok, f"{len(hardy_reports)} reports at grids 16 and 32, min rel slack {min_rel:.3f}")
    assert ok


def test_09_hsm_ball(criterion):
    n, a = 2, 1.5
    spec = QuadratureSpec()
    B1 = unit(2)
    suite = standard_suite(B1, a)
    c_est = estimate_admissible_c(B1, n, a, suite, spec)
    c_test = c_est / 2
    rel = {}
    passed = True
    for r in (1.0, 2.0):
        Br = Ball((0.0, 0.0), r)
        reports = [verify_hsm_ball(r, n, u.scaled(r, Br), a, c_test, spec) for u in suite]
        passed &= all(rep.passed for rep in reports)
        rel[r] = np.array([rep.rel_slack for rep in reports])
    spread = float(np.max(np.abs(rel[1.0] - rel[2.0])))
    ok = c_est > 0 and passed and spread <= 1e-3
    criterion(9, ok, f"c estimate {c_est:.4f}, rel slack spread {spread:.1e}")
    assert ok


def test_10_hsm_halfspace(criterion):
    n, a = 2, 1.5
    spec = QuadratureSpec()
    B1 = unit(2)
    c_test = estimate_admissible_c(B1, n, a, standard_suite(B1, a), spec) / 2
    u = TrialFunction(PolyBump((0.0, 1.0), 0.5, 2), HalfSpace(2), "bump")
    reports, summary = verify_hsm_halfspace(u, a, (4.0, 8.0, 16.0), spec, c_test)
    ok = all(r.passed for r in reports) and summary.hardy_spread < 1e-3
    criterion(10, ok, f"energies {[round(v, 5) for v in summary.energies.values()]}, "
                      f"extrapolated {summary.richardson:.5f} vs {summary.halfspace_energy.value:.5f}, "
                      f"Hardy spread {summary.hardy_spread:.1e}")
    assert ok


def test_11_dyadic(criterion):
    rng = np.random.default_rng(11)
    order_ok, dominated = True, True
    for a in ALPHA_GRID:
        c = dyadic_coefficients(a)
        order_ok &= c["first_display"] < c["follow_up_printed"] and c["first_display"] >= c["corrected"]
        r = np.sqrt(rng.random((2, 10_000)))
        t = 2 * np.pi * rng.random((2, 10_000))
        X = np.column_stack([r[0] * np.cos(t[0]), r[0] * np.sin(t[0])])
        Y = np.column_stack([r[1] * np.cos(t[1]), r[1] * np.sin(t[1])])
        b = dyadic_bounds_many(X, Y, a)
        dominated &= bool(np.all(b["bound_corrected"] <= b["weight_product"]))
    ok = order_ok and dominated
    criterion(11, ok, f"coefficient order {order_ok}, domination over 9 x 1e4 pairs {dominated}")
    assert ok


def test_12_sharpness(criterion):
    D = unit(1)
    k = kappa(1, 1.5)
    coarse = sharpness_probe(D, 1.5, 256)
    fine = sharpness_probe(D, 1.5, 512)
    ok = coarse.best_quotient >= 0.98 * k and fine.gap_ratio <= coarse.gap_ratio + 0.01
    criterion(12, ok, f"quotients {coarse.best_quotient:.5f}, {fine.best_quotient:.5f}; "
                      f"gap ratios {coarse.gap_ratio:.3f} -> {fine.gap_ratio:.3f}")
    assert ok


def test_13_determinism(criterion, hardy_reports):
    serial = to_json_lines(hardy_reports)
    parallel = to_json_lines(_hardy_sweep(16, workers=4))
    ok = serial.encode() == parallel.encode()
    criterion(13, ok, f"{len(serial.encode())} bytes, workers 1 vs 4 identical: {ok}")
    assert ok
