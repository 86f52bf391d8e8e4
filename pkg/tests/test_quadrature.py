"""Quadrature against independent oracles.

Energy references come from the closed-form whole-space seminorm of
(1 - |x|^2/rho^2)^p minus its exterior part (scipy quad); they were computed
once and frozen here.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fraclap.domains import Ball, HalfSpace, Interval
from fraclap.quadrature import (BoundaryPoint, DuffySplit, FormValue, GradedMesh, MonteCarlo,
                                NonConvergence, QuadratureSpec, UnsupportedDomain, energy_form,
                                halfspace_energy_form, hardy_functional, interval_pl_energy_matrix,
                                interval_pl_hardy_matrix, lp_norm, regional_laplacian)
from fraclap.trialfns import (Constant, PiecewiseLinear, PolyBump, TrialFunction, WeightedProfile,
                              standard_suite)

TIGHT = QuadratureSpec(target_rel_tol=1e-7, max_refinements=4)

# (n, alpha, rho, p) -> regional energy of the centred bump on the unit ball
ENERGY_ORACLE = {
    (1, 1.5, 0.6, 2): 6.211152688740718,
    (1, 1.2, 0.5, 2): 3.7329352415661194,
    (1, 1.8, 0.9, 2): 12.453010143786576,
    (1, 1.5, 0.3, 1): 10.054513109350976,
    (2, 1.5, 0.6, 2): 9.835765976699491,
    (2, 1.2, 0.5, 2): 4.8600136097084725,
    (2, 1.8, 0.9, 2): 29.969376419257244,
    (2, 1.5, 0.3, 1): 10.65084035653513,
    (3, 1.5, 0.6, 2): 9.400578161015432,
    (3, 1.2, 0.5, 2): 3.82359972958846,
    (3, 1.8, 0.9, 2): 43.4839072999452,
    (3, 1.5, 0.3, 1): 6.5536355941195685,
}
# bump (1 - |x - (0,1)|^2/0.25)^2 on the upper half-plane, alpha = 1.5
HALFSPACE_ORACLE = 9.7310898465


def unit(n):
    return Interval(-1.0, 1.0) if n == 1 else Ball((0.0,) * n, 1.0)


def bump(n, rho, p, D=None):
    D = D or unit(n)
    return TrialFunction(PolyBump((0.0,) * n, rho, p), D, "bump")


@pytest.mark.parametrize("key", sorted(ENERGY_ORACLE))
def test_energy_matches_fourier_oracle(key):
    n, alpha, rho, p = key
    fv = energy_form(unit(n), bump(n, rho, p), TIGHT, alpha)
    assert fv.value == pytest.approx(ENERGY_ORACLE[key], rel=2e-8)
    assert fv.est_error < 1e-5 * fv.value


@pytest.mark.parametrize("mode", [DuffySplit(), GradedMesh(2.0)])
def test_other_deterministic_modes_agree(mode):
    spec = QuadratureSpec(singular_mode=mode, target_rel_tol=1e-6, max_refinements=4)
    fv = energy_form(unit(2), bump(2, 0.6, 2), spec, 1.5)
    assert fv.value == pytest.approx(ENERGY_ORACLE[(2, 1.5, 0.6, 2)], rel=1e-5)


def test_monte_carlo_within_its_error_bar():
    spec = QuadratureSpec(singular_mode=MonteCarlo(200_000, seed=7))
    fv = energy_form(unit(2), bump(2, 0.6, 2), spec, 1.5)
    assert abs(fv.value - ENERGY_ORACLE[(2, 1.5, 0.6, 2)]) < 4 * fv.est_error
    assert fv.method.startswith("montecarlo")


def test_monte_carlo_is_seeded():
    def run(seed):
        spec = QuadratureSpec(singular_mode=MonteCarlo(20_000, seed=seed))
        return energy_form(unit(2), bump(2, 0.6, 2), spec, 1.5).value
    assert run(3) == run(3)
    assert run(3) != run(4)


def test_halfspace_energy_matches_oracle():
    H = HalfSpace(2)
    u = TrialFunction(PolyBump((0.0, 1.0), 0.5, 2), H, "bump")
    fv = halfspace_energy_form(H, u, TIGHT, 1.5)
    assert fv.value == pytest.approx(HALFSPACE_ORACLE, rel=1e-8)


def test_energy_form_refuses_halfspace():
    H = HalfSpace(2)
    u = TrialFunction(PolyBump((0.0, 1.0), 0.5, 2), H)
    with pytest.raises(UnsupportedDomain):
        energy_form(H, u, QuadratureSpec(), 1.5)


def test_nonconvergence_is_reported():
    spec = QuadratureSpec(target_rel_tol=1e-15, max_refinements=1)
    with pytest.raises(NonConvergence):
        energy_form(unit(2), bump(2, 0.3, 1), spec, 1.5)


@settings(max_examples=8, deadline=None)
@given(st.floats(min_value=0.3, max_value=4.0), st.sampled_from([1.2, 1.5, 1.8]))
def test_energy_scaling_law(r, alpha):
    B1, Br = unit(2), Ball((0.0, 0.0), r)
    u = bump(2, 0.6, 2, B1)
    e1 = energy_form(B1, u, TIGHT, alpha).value
    er = energy_form(Br, u.scaled(r, Br), TIGHT, alpha).value
    assert er == pytest.approx(r ** (2 - alpha) * e1, rel=1e-7)


@settings(max_examples=8, deadline=None)
@given(st.floats(min_value=-0.5, max_value=0.5))
def test_energy_reflection_symmetry(c):
    D = unit(1)
    left = TrialFunction(PolyBump((c,), 0.4, 2), D)
    right = TrialFunction(PolyBump((-c,), 0.4, 2), D)
    assert energy_form(D, left, TIGHT, 1.5).value == pytest.approx(
        energy_form(D, right, TIGHT, 1.5).value, rel=1e-9)


def test_energy_of_constant_times_bump_is_quadratic():
    D = unit(2)
    u = bump(2, 0.6, 2)
    v = TrialFunction(WeightedProfile(PolyBump((0.0, 0.0), 0.6, 2), 1.5), D)
    e_u = energy_form(D, u, TIGHT, 1.5).value
    assert e_u > 0 and energy_form(D, v, TIGHT, 1.5).value > 0


@pytest.mark.parametrize("N,alpha", [(4, 1.5), (6, 1.2), (8, 1.8)])
def test_piecewise_linear_matrices_against_scipy(N, alpha):
    a, b = -1.0, 1.0
    D = Interval(a, b)
    v = np.random.default_rng(N).standard_normal(N - 1)
    nodes = np.linspace(a, b, N + 1)
    full = np.r_[0.0, v, 0.0]

    def u(x):
        return np.interp(x, nodes, full)

    def shifted_sq(s):
        # ∫ (u(x+s) - u(x))^2 dx over x, x+s in D; quadratic between kinks, so Simpson is exact
        br = np.unique(np.r_[nodes, nodes - s])
        br = br[(br >= a) & (br <= b - s)]
        lo, hi = br[:-1], br[1:]
        f = lambda x: (u(x + s) - u(x)) ** 2
        return float(np.sum((hi - lo) / 6 * (f(lo) + 4 * f(0.5 * (lo + hi)) + f(hi))))

    h = (b - a) / N
    # on [0, h] the integrand is F(s) s^(-1-alpha) with F(s) ~ s^2
    ref = quad(lambda s: shifted_sq(max(s, 1e-8)) / max(s, 1e-8) ** 2, 0, h, weight="alg", wvar=(1 - alpha, 0),
               epsabs=1e-14, epsrel=1e-12)[0]
    for lo in np.arange(1, N) * h:
        ref += quad(lambda s: shifted_sq(s) * s ** (-1 - alpha), lo, lo + h,
                    epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    A = interval_pl_energy_matrix(D, N, alpha)
    assert v @ A @ v == pytest.approx(ref, rel=1e-9)

    dist = lambda x: min(x - a, b - x)
    hardy = sum(quad(lambda x: u(x) ** 2 * dist(x) ** (-alpha), lo, hi, epsabs=1e-14,
                     epsrel=1e-12, limit=200)[0] for lo, hi in zip(nodes[:-1], nodes[1:]))
    assert v @ interval_pl_hardy_matrix(D, N, alpha) @ v == pytest.approx(hardy, rel=1e-9)


def test_pl_energy_matches_generic_quadrature():
    D = unit(1)
    vals = tuple(np.sin(np.pi * np.arange(1, 16) / 16))
    u = TrialFunction(PiecewiseLinear(vals), D)
    exact = energy_form(D, u, TIGHT, 1.5, exact_pl=True)
    assert exact.est_error == 0.0
    A = interval_pl_energy_matrix(D, 16, 1.5)
    assert exact.value == pytest.approx(np.asarray(vals) @ A @ np.asarray(vals), rel=1e-13)


def test_hardy_functional_radial_oracle():
    alpha = 1.5
    u = bump(2, 0.8, 2)
    ref = quad(lambda r: 2 * math.pi * r * (1 - r * r / 0.64) ** 4 * (1 - r) ** (-alpha), 0, 0.8,
               epsabs=1e-14, epsrel=1e-12)[0]
    assert hardy_functional(unit(2), u, alpha, TIGHT).value == pytest.approx(ref, rel=1e-8)


def test_lp_norm_oracle():
    u = bump(1, 0.5, 2)
    ref = quad(lambda x: (1 - x * x / 0.25) ** 8, -0.5, 0.5, epsabs=1e-15)[0]
    assert lp_norm(unit(1), u, 4.0, TIGHT).value == pytest.approx(ref, rel=1e-10)


# -L w at points of (-1, 1) for w(x) = (1 - x^2)^((alpha-1)/2); mpmath principal value, 50 digits
PV_ORACLE = [(0.0, 1.5, 1.1387662364018), (0.9, 1.5, 5.6204443665914),
             (0.3, 1.2, 0.33216424262995), (-0.6, 1.8, 7.2661791775305)]


@pytest.mark.parametrize("x,alpha,ref", PV_ORACLE)
def test_principal_value_of_weight(x, alpha, ref):
    D = unit(1)
    w = TrialFunction(WeightedProfile(Constant(1.0), alpha), D)
    fv = regional_laplacian(D, w, [x], QuadratureSpec(target_rel_tol=1e-9, max_refinements=5), alpha)
    assert -fv.value == pytest.approx(ref, rel=1e-7)


def test_principal_value_monte_carlo():
    D = unit(1)
    w = TrialFunction(WeightedProfile(Constant(1.0), 1.5), D)
    fv = regional_laplacian(D, w, [0.0], QuadratureSpec(singular_mode=MonteCarlo(400_000, 1)), 1.5)
    assert abs(-fv.value - 1.1387662364018) < 4 * fv.est_error


def test_boundary_point_rejected():
    D = unit(2)
    w = TrialFunction(WeightedProfile(Constant(1.0), 1.5), D)
    with pytest.raises(BoundaryPoint):
        regional_laplacian(D, w, [1.0 - 1e-5, 0.0], QuadratureSpec(), 1.5)


@pytest.mark.parametrize("kwargs", [{"grid_points_per_axis": 8}, {"pv_cutoff": 0.0},
                                    {"singular_mode": MonteCarlo(100)}, {"max_refinements": 0}])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        QuadratureSpec(**kwargs)


def test_form_value_serializes():
    d = FormValue(1.5, 1e-6, "graded(q=3)", 2).to_dict()
    assert d == {"value": 1.5, "est_error": 1e-6, "method": "graded(q=3)"}


@pytest.mark.parametrize("label", ["poly(c=0,rho=0.6,p=1)", "cos(c=0.5,rho=0.475,p=1)",
                                   "w*poly(c=0,rho=0.95,p=2)"])
def test_error_estimate_shrinks_under_grid_doubling(label):
    D = unit(2)
    u = next(v for v in standard_suite(D, 1.5) if v.label == label)
    fvs = [energy_form(D, u, QuadratureSpec(grid_points_per_axis=g, target_rel_tol=1.0), 1.5)
           for g in (16, 32, 64)]
    # once at the roundoff floor the estimate only has to stay there
    floor = 1e-8 * fvs[0].value
    for coarse, fine in zip(fvs, fvs[1:]):
        assert fine.est_error < coarse.est_error or fine.est_error < floor


@pytest.mark.parametrize("label", ["poly(c=0,rho=0.3,p=2)", "cos(c=0,rho=0.9,p=2)",
                                   "poly(c=0.7,rho=0.275,p=2)", "w*poly(c=0,rho=0.9,p=2)"])
def test_graded_and_monte_carlo_agree_on_suite(label):
    D = unit(2)
    u = next(v for v in standard_suite(D, 1.5) if v.label == label)
    graded = energy_form(D, u, QuadratureSpec(), 1.5)
    mc = energy_form(D, u, QuadratureSpec(singular_mode=MonteCarlo(200_000, seed=2)), 1.5)
    assert abs(graded.value - mc.value) <= 3 * mc.est_error + graded.est_error


@settings(max_examples=6, deadline=None)
@given(st.floats(min_value=0.3, max_value=4.0))
def test_hardy_functional_scaling_law(r):
    B1, Br = unit(2), Ball((0.0, 0.0), r)
    u = TrialFunction(PolyBump((0.3, 0.0), 0.5, 2), B1)
    spec = QuadratureSpec(target_rel_tol=1e-6)
    h1 = hardy_functional(B1, u, 1.5, spec).value
    hr = hardy_functional(Br, u.scaled(r, Br), 1.5, spec).value
    assert hr == pytest.approx(r ** (2 - 1.5) * h1, rel=1e-3)
