"""Closed forms and lower bounds around the reference weight
w_n(x) = (1 - |x|^2)^((alpha-1)/2) on the unit ball, with numerical cross-checks."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domains import Ball, Interval, reference_weight
from .quadrature import (FormValue, QuadratureSpec, energy_form, hardy_functional,
                         pv_chord, regional_laplacian, regional_laplacian_many,
                         weighted_energy_form)
from .specfun import (DomainError, c1_const, c2_const, hardy_beta, kappa, sphere_area,
                      sphere_moment)
from .trialfns import Constant, TrialFunction, WeightedProfile, quotient_by_weight


class W1FormulaVariant(enum.Enum):
    """Sign pattern of the two power terms in the closed form of -L w_1."""

    SYMMETRIC = "symmetric"     # B - (1-x)^a - (1+x)^a
    AS_PRINTED = "as_printed"   # B - (1-x)^a + (1+x)^a

    @classmethod
    def parse(cls, text) -> "W1FormulaVariant":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for v in cls:
            if key in (v.value, v.name.lower(), v.value.replace("_", "")):
                return v
        raise ValueError(f"unknown formula variant {text!r}")


class BoundVariant(enum.Enum):
    PRINTED = "printed"
    CORRECTED = "corrected"


def _radius2(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x * x
    return np.sum(x * x, axis=-1)


def _check_inside(r2):
    if np.any(np.asarray(r2) >= 1.0):
        raise DomainError("point must lie in the open unit ball")


def wn_weight(x, alpha: float):
    """(1 - |x|^2)^((alpha-1)/2); x may be a scalar, a point or an array of points."""
    r2 = _radius2(x)
    _check_inside(r2)
    return (1.0 - r2) ** (0.5 * (alpha - 1.0))


def w1_laplacian_closed(x, alpha: float,
                        variant: W1FormulaVariant = W1FormulaVariant.SYMMETRIC):
    """-L_{(-1,1)} w_1 at x in (-1, 1)."""
    x = np.asarray(x, dtype=float)
    _check_inside(x * x)
    sign = -1.0 if W1FormulaVariant.parse(variant) is W1FormulaVariant.SYMMETRIC else 1.0
    out = ((1.0 - x * x) ** (-(alpha + 1.0) / 2.0) / alpha
           * (hardy_beta(alpha) - (1.0 - x) ** alpha + sign * (1.0 + x) ** alpha))
    return float(out) if out.ndim == 0 else out


def w1_laplacian_lower_bound(x, alpha: float):
    """c1 (1-x^2)^(-(alpha+1)/2) + c2 (1-x^2)^(-(alpha-1)/2)."""
    x = np.asarray(x, dtype=float)
    _check_inside(x * x)
    s = 1.0 - x * x
    out = c1_const(alpha) * s ** (-(alpha + 1.0) / 2.0) + c2_const(alpha) * s ** (-(alpha - 1.0) / 2.0)
    return float(out) if out.ndim == 0 else out


def g_reduction(x: float, h, alpha: float,
                variant: W1FormulaVariant = W1FormulaVariant.SYMMETRIC) -> float:
    """p.v. ∫ over the chord {x e_n + t h} of (w_n(x) - w_n(y)) |t|^(-1-alpha) dt, via the interval formula.

    The chord is an interval of half-length sqrt(1 - x^2 + x^2 h_n^2) on which w_n
    restricts to a rescaled w_1, so the chord integral is that radius^-1 times
    -L w_1 at the rescaled position.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if not abs(float(np.linalg.norm(h)) - 1.0) < 1e-9:
        raise DomainError("h must be a unit vector")
    if not 0.0 <= x < 1.0:
        raise DomainError("x must lie in [0, 1)")
    hn = float(h[-1])
    s = math.sqrt(1.0 - x * x + x * x * hn * hn)
    return w1_laplacian_closed(x * hn / s, alpha, variant) / s


def chord_pv(x: float, h, alpha: float, n_nodes: int = 128) -> float:
    """Direct principal-value quadrature of the same chord integral (independent of g_reduction)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    n = h.size
    p = np.zeros(n)
    p[-1] = x
    ph = float(p @ h)
    root = math.sqrt(ph * ph - x * x + 1.0)
    lo, hi = -ph - root, -ph + root

    def w_on_chord(t):
        t = np.asarray(t, dtype=float)
        y = p + t[:, None] * h
        r2 = np.sum(y * y, axis=-1)
        return np.where(r2 < 1.0, np.maximum(1.0 - r2, 0.0) ** (0.5 * (alpha - 1.0)), 0.0)

    return -pv_chord(w_on_chord, lo, hi, alpha, G=n_nodes, end_power=0.5 * (alpha - 1.0))


def ball_laplacian_lower_bound(x, n: int, alpha: float,
                               variant: BoundVariant = BoundVariant.CORRECTED):
    """Lower bound for -L_{B_1} w_n(x).

    (c1/2) ∫|h_n|^alpha dh (1-|x|^2)^(-(alpha+1)/2) + C |S^{n-1}| (1-|x|^2)^(-(alpha-1)/2)
    with C = c2/2 (CORRECTED, the value the chord average actually yields) or
    C = c2 (PRINTED).
    """
    if n < 1:
        raise DomainError("dimension must be >= 1")
    r2 = _radius2(x)
    _check_inside(r2)
    variant = BoundVariant(variant) if not isinstance(variant, BoundVariant) else variant
    s = 1.0 - r2
    second = c2_const(alpha) * sphere_area(n)
    if variant is BoundVariant.CORRECTED:
        second *= 0.5
    out = (0.5 * c1_const(alpha) * sphere_moment(n, alpha) * s ** (-(alpha + 1.0) / 2.0)
           + second * s ** (-(alpha - 1.0) / 2.0))
    return float(out) if np.ndim(out) == 0 else out


def ball_laplacian_reduced(x, n: int, alpha: float, n_dirs: int = 64,
                           variant: W1FormulaVariant = W1FormulaVariant.SYMMETRIC) -> float:
    """-L_{B_1} w_n(x) = 1/2 ∫_{S^{n-1}} g(|x|, h) dh, by a rule in the angle to x."""
    r = math.sqrt(float(_radius2(x)))
    _check_inside(r * r)
    if n == 1:
        return w1_laplacian_closed(r, alpha, variant)
    if n == 2:
        psi = np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
        vals = [g_reduction(r, np.array([math.sin(p), math.cos(p)]), alpha, variant) for p in psi]
        return 0.5 * 2.0 * (np.pi / n_dirs) * float(np.sum(vals))
    # n >= 3: dh = |S^{n-2}| (1 - c^2)^((n-3)/2) dc with c = h_n
    from scipy.special import roots_jacobi
    a = 0.5 * (n - 3)
    c, cw = roots_jacobi(n_dirs, a, a)
    vals = [g_reduction(r, np.array([math.sqrt(1 - ci * ci), ci]), alpha, variant) for ci in c]
    return 0.5 * sphere_area(n - 1) * float(np.dot(cw, vals))


def ball_laplacian_pv(x, n: int, alpha: float, spec: Optional[QuadratureSpec] = None) -> FormValue:
    """-L_{B_1} w_n(x) by principal-value quadrature of the weight itself."""
    spec = spec or QuadratureSpec()
    D = Interval(-1.0, 1.0) if n == 1 else Ball((0.0,) * n, 1.0)
    w = TrialFunction(WeightedProfile(Constant(1.0), alpha), D, "w")
    fv = regional_laplacian(D, w, np.atleast_1d(np.asarray(x, dtype=float)), spec, alpha)
    return FormValue(-fv.value, fv.est_error, fv.method, fv.refinements_used)


# ------------------------------------------------------------ adjudication

ADJUDICATION_POINTS = (0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9)
ADJUDICATION_ALPHAS = (1.2, 1.5, 1.8)


@dataclass(frozen=True)
class Adjudication:
    matching: tuple            # variants within tolerance at every grid point
    max_rel_error: dict        # variant -> worst relative mismatch
    evenness: dict             # variant -> worst |f(x) - f(-x)|
    rel_tol: float

    @property
    def winner(self) -> Optional[W1FormulaVariant]:
        return self.matching[0] if len(self.matching) == 1 else None

    def to_dict(self) -> dict:
        return {"matching": [v.value for v in self.matching],
                "winner": self.winner.value if self.winner else None,
                "max_rel_error": {k.value: v for k, v in self.max_rel_error.items()},
                "evenness": {k.value: v for k, v in self.evenness.items()},
                "rel_tol": self.rel_tol}


def adjudicate_w1(points: Sequence[float] = ADJUDICATION_POINTS,
                  alphas: Sequence[float] = ADJUDICATION_ALPHAS,
                  spec: Optional[QuadratureSpec] = None, rel_tol: float = 1e-3) -> Adjudication:
    """Compare each closed-form variant with PV quadrature of -L w_1."""
    spec = spec or QuadratureSpec(target_rel_tol=1e-8, max_refinements=5)
    worst = {v: 0.0 for v in W1FormulaVariant}
    even = {v: 0.0 for v in W1FormulaVariant}
    for a in alphas:
        for x in points:
            ref = ball_laplacian_pv([x], 1, a, spec).value
            for v in W1FormulaVariant:
                val = w1_laplacian_closed(x, a, v)
                worst[v] = max(worst[v], abs(val - ref) / abs(ref))
                even[v] = max(even[v], abs(val - w1_laplacian_closed(-x, a, v)))
    matching = tuple(v for v in W1FormulaVariant if worst[v] <= rel_tol)
    return Adjudication(matching, worst, even, rel_tol)


# ---------------------------------------------------------- ground state

@dataclass(frozen=True)
class GroundStateTerms:
    full_energy: FormValue
    weighted_energy: FormValue
    potential_term: FormValue

    @property
    def residual(self) -> float:
        return self.full_energy.value - self.weighted_energy.value - self.potential_term.value

    @property
    def error_budget(self) -> float:
        return (self.full_energy.est_error + self.weighted_energy.est_error
                + self.potential_term.est_error)

    def to_dict(self) -> dict:
        return {"full_energy": self.full_energy.to_dict(),
                "weighted_energy": self.weighted_energy.to_dict(),
                "potential_term": self.potential_term.to_dict(),
                "residual": self.residual}


def potential(D, alpha: float, pv_grid: int = 64, method: str = "pv"):
    """x -> -L_D w(x) / w(x) for the reference weight w of D, as a vectorized callable.

    ``method="pv"`` runs principal-value quadrature of w at every node;
    ``method="reduction"`` uses the chord reduction (unit ball/interval only).
    """
    if method == "pv":
        w = TrialFunction(WeightedProfile(Constant(1.0), alpha), D, "w")
        spec = QuadratureSpec(grid_points_per_axis=pv_grid)

        def pot(X):
            X = np.atleast_2d(X)
            return -regional_laplacian_many(D, w, X, spec, alpha) / reference_weight(D, X, alpha)
        return pot
    if method == "reduction":
        cen = np.asarray(D.center)
        R = D.inradius

        def pot(X):
            X = np.atleast_2d(X)
            xi = (X - cen) / R
            vals = np.array([ball_laplacian_reduced(p, D.dim, alpha) for p in xi])
            return vals * R ** (-alpha) / wn_weight(xi, alpha)
        return pot
    raise ValueError(f"unknown potential method {method!r}")


def ground_state_terms(u: TrialFunction, alpha: float, spec: QuadratureSpec,
                       potential_method: str = "pv") -> GroundStateTerms:
    """energy_form(u), the weighted form of u/w, and ∫ u^2 (-L w)/w."""
    D = u.domain
    if not isinstance(D, (Interval, Ball)):
        raise ValueError("ground-state terms need an interval or a ball")
    full = energy_form(D, u, spec, alpha)
    weighted = weighted_energy_form(D, quotient_by_weight(u, alpha), alpha, spec)
    pot = hardy_functional(D, u, alpha, spec, weight=potential(D, alpha, method=potential_method),
                           weight_radial=True)
    return GroundStateTerms(full, weighted, pot)


def potential_lower_bound(u: TrialFunction, alpha: float, spec: QuadratureSpec,
                          variant: BoundVariant = BoundVariant.CORRECTED) -> FormValue:
    """∫ u^2 [2^alpha kappa (1-|x|^2)^-alpha + c3 (1-|x|^2)^(1-alpha)] on the unit ball.

    The bracket is the lower bound for -L w / w; with the PRINTED variant
    the second coefficient doubles.
    """
    D = u.domain
    n = D.dim
    c3 = 0.5 * c2_const(alpha) * sphere_area(n)
    if BoundVariant(variant) is BoundVariant.PRINTED:
        c3 *= 2.0
    k = 2.0 ** alpha * kappa(n, alpha)
    cen = np.asarray(D.center)
    R = D.inradius

    def bracket(X):
        s = 1.0 - np.sum(((np.atleast_2d(X) - cen) / R) ** 2, axis=-1)
        return R ** (-alpha) * (k * s ** (-alpha) + c3 * s ** (1.0 - alpha))

    return hardy_functional(D, u, alpha, spec, weight=bracket, weight_radial=True)


# ----------------------------------------------------------------- dyadic

K_MAX = 60


@dataclass(frozen=True)
class DyadicBound:
    bound_printed: float
    bound_corrected: float
    weight_product: float

    def to_dict(self) -> dict:
        return {"bound_printed": self.bound_printed, "bound_corrected": self.bound_corrected,
                "weight_product": self.weight_product}


def dyadic_coefficients(alpha: float) -> dict:
    """The three candidate per-shell constants."""
    return {"first_display": 1.5 ** (alpha - 1.0) - 1.0,
            "follow_up_printed": 0.5 * (alpha - 1.0),
            "corrected": math.log(1.5) * (alpha - 1.0)}


def _shell_sums(x, y, alpha: float, K_max: int):
    """Σ_{k=1..K_max} 2^(-k(alpha-1)) 1[|x| < a_k] 1[|y| < a_k], a_k = 1 - 2^-k."""
    rx = np.sqrt(_radius2(x))
    ry = np.sqrt(_radius2(y))
    k = np.arange(1, K_max + 1)
    a = 1.0 - 2.0 ** (-k.astype(float))
    inside = (np.asarray(rx)[..., None] < a) & (np.asarray(ry)[..., None] < a)
    return np.sum(np.where(inside, 2.0 ** (-k * (alpha - 1.0)), 0.0), axis=-1)


def dyadic_bound(x, y, alpha: float, K_max: int = K_MAX) -> DyadicBound:
    """Dyadic shell lower bounds for w_n(x) w_n(y).

    bound_printed uses the first-display constant (3/2)^(alpha-1) - 1;
    bound_corrected uses ln(3/2)(alpha-1). Points on or outside the unit sphere
    have zero weight.
    """
    s = float(_shell_sums(x, y, alpha, K_max))
    c = dyadic_coefficients(alpha)
    rx2, ry2 = float(_radius2(x)), float(_radius2(y))
    wp = 0.0 if rx2 >= 1 or ry2 >= 1 else (1 - rx2) ** (0.5 * (alpha - 1)) * (1 - ry2) ** (0.5 * (alpha - 1))
    return DyadicBound(c["first_display"] * s, c["corrected"] * s, wp)


def dyadic_bounds_many(X, Y, alpha: float, K_max: int = K_MAX) -> dict:
    """Vectorized dyadic_bound over rows of X and Y."""
    s = _shell_sums(X, Y, alpha, K_max)
    c = dyadic_coefficients(alpha)
    wp = wn_weight(X, alpha) * wn_weight(Y, alpha)
    return {"bound_printed": c["first_display"] * s, "bound_corrected": c["corrected"] * s,
            "weight_product": wp}
