"""Quadrature for the regional fractional form, its weighted variant, the
principal-value regional Laplacian and the single weighted integrals.

Every double integral is written in polar coordinates about the first point,
y = x + t h, so the kernel singularity sits at t = 0 of a one-dimensional ray
integral. The form over D is split as

    1/2 ∫∫_{S x S} (v(x)-v(y))^2 w(x) w(y) k  +  ∫_S v(x)^2 w(x) ∫_{D \\ S} w(y) k dy dx

with S the support ball of v. For w = 1 the inner ray integral of the second
term is explicit, (t_S^-a - t_D^-a)/a.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .domains import Ball, HalfSpace, Interval, delta, reference_weight, weight_edge_power
from .specfun import sphere_area, sphere_moment
from .trialfns import PiecewiseLinear, TrialFunction


class QuadratureError(RuntimeError):
    pass


class NonConvergence(QuadratureError):
    pass


class UnsupportedDomain(QuadratureError):
    pass


class UnsupportedDimension(QuadratureError):
    pass


class BoundaryPoint(QuadratureError):
    pass


@dataclass(frozen=True)
class GradedMesh:
    """Composite Gauss rule on cells graded algebraically, (j/m)^q, toward singular ends."""

    q: float = 3.0


@dataclass(frozen=True)
class DuffySplit:
    """One Gauss-Jacobi rule per ray whose weight absorbs the endpoint powers."""


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 100_000
    seed: int = 0


SingularMode = Union[GradedMesh, DuffySplit, MonteCarlo]


@dataclass(frozen=True)
class QuadratureSpec:
    grid_points_per_axis: int = 16
    pv_cutoff: float = 1e-5
    singular_mode: SingularMode = field(default_factory=GradedMesh)
    target_rel_tol: float = 1e-4
    max_refinements: int = 3

    def __post_init__(self):
        if self.grid_points_per_axis < 16:
            raise ValueError("grid_points_per_axis must be >= 16")
        if not self.pv_cutoff > 0:
            raise ValueError("pv_cutoff must be positive")
        if isinstance(self.singular_mode, MonteCarlo) and self.singular_mode.samples < 10_000:
            raise ValueError("MonteCarlo needs at least 1e4 samples")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be >= 1")

    def to_dict(self) -> dict:
        m = self.singular_mode
        mode = {"kind": type(m).__name__}
        mode.update(m.__dict__)
        return {"grid_points_per_axis": self.grid_points_per_axis, "pv_cutoff": self.pv_cutoff,
                "singular_mode": mode, "target_rel_tol": self.target_rel_tol,
                "max_refinements": self.max_refinements}


@dataclass(frozen=True)
class FormValue:
    value: float
    est_error: float
    method: str
    refinements_used: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "est_error": self.est_error, "method": self.method}


# ---------------------------------------------------------------- 1D rules

_ORDER = 8


@lru_cache(maxsize=None)
def _gauss_01(k: int):
    x, w = roots_legendre(k)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _jacobi_01(k: int, left: float, right: float):
    """Nodes/weights on [0,1] exact for tau^left (1-tau)^right * poly.

    The returned weights already divide out the power factors, so the rule is
    applied to the full integrand.
    """
    x, w = roots_jacobi(k, right, left)
    tau = 0.5 * (x + 1.0)
    w = w * 0.5 ** (1.0 + left + right)
    return tau, w / (tau ** left * (1.0 - tau) ** right)


def _ok_power(beta):
    return beta is not None and beta > -1.0 and abs(beta) > 1e-14


def _rounded(beta):
    return None if not _ok_power(beta) else round(float(beta), 12)


_LAYER_RATIO = 0.3


@lru_cache(maxsize=None)
def _graded_half(n_nodes: int, q: float, beta):
    """Rule on [0,1] graded toward 0.

    Cells (j/m)^q. The first cell is replaced by 2m geometric layers and any
    cell [a, b] with b/a > 1/0.3 is split geometrically, which keeps every
    Gauss cell well separated from the endpoint singularity. The innermost
    layer is exact for tau^beta * poly when beta is given.
    """
    m = max(1, n_nodes // (2 * _ORDER))
    alg = (np.arange(1, m + 1) / m) ** q
    edges = [alg[0] * _LAYER_RATIO ** k for k in range(2 * m, 0, -1)]
    lo = alg[0]
    for hi in alg[1:]:
        pieces = max(1, math.ceil(math.log(hi / lo) / -math.log(_LAYER_RATIO) - 1e-9))
        edges.extend(lo * (hi / lo) ** (np.arange(pieces) / pieces))
        lo = hi
    edges = np.concatenate([[0.0], edges, [1.0]])
    g, gw = _gauss_01(_ORDER)
    if beta is not None:
        j, jw = _jacobi_01(_ORDER, beta, 0.0)
    else:
        j, jw = g, gw
    nodes = [edges[1] * j]
    weights = [edges[1] * jw]
    a, b = edges[1:-1], edges[2:]
    nodes.append((a[:, None] + (b - a)[:, None] * g[None, :]).ravel())
    weights.append(((b - a)[:, None] * gw[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=None)
def _rule(n_nodes: int, mode_key, left, right, grade_left: bool, grade_right: bool):
    """Reference rule on [0,1].

    ``left``/``right`` are known endpoint powers (or None); ``grade_*`` says
    whether the end needs grading at all.
    """
    if mode_key == "duffy":
        return _jacobi_01(n_nodes, left or 0.0, right or 0.0)
    q = mode_key
    if grade_left and grade_right:
        x0, w0 = _graded_half(n_nodes, q, left)
        x1, w1 = _graded_half(n_nodes, q, right)
        x = np.concatenate([0.5 * x0, 1.0 - 0.5 * x1[::-1]])
        w = np.concatenate([0.5 * w0, 0.5 * w1[::-1]])
        return x, w
    if grade_left:
        return _graded_half(n_nodes, q, left)
    if grade_right:
        x, w = _graded_half(n_nodes, q, right)
        return 1.0 - x[::-1], w[::-1]
    m = max(1, n_nodes // _ORDER)
    g, gw = _gauss_01(_ORDER)
    a = np.arange(m) / m
    return (a[:, None] + g[None, :] / m).ravel(), (np.ones(m)[:, None] * gw[None, :] / m).ravel()


def _mode_key(mode) -> object:
    if isinstance(mode, GradedMesh):
        return float(mode.q)
    if isinstance(mode, DuffySplit):
        return "duffy"
    raise ValueError(f"no deterministic rule for {mode!r}")


def ray_rule(n_nodes, mode, left=None, right=None, grade_left=False, grade_right=False):
    return _rule(int(n_nodes), _mode_key(mode), _rounded(left), _rounded(right),
                 bool(grade_left or _ok_power(left)), bool(grade_right or _ok_power(right)))


# ---------------------------------------------------------- sphere rules

@lru_cache(maxsize=None)
def sphere_rule(n: int, G: int):
    """Direction nodes/weights for S^{n-1}, symmetric under h -> -h."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    M = 2 * max(4, G // 2)
    phi = 2 * np.pi * (np.arange(M) + 0.5) / M
    if n == 2:
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.full(M, 2 * np.pi / M)
    if n == 3:
        c, cw = roots_legendre(max(4, G // 2))
        s = np.sqrt(1.0 - c * c)
        H = np.stack([np.outer(c, np.ones(M)), np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi))],
                     axis=-1).reshape(-1, 3)
        W = np.outer(cw, np.full(M, 2 * np.pi / M)).ravel()
        return H, W
    raise UnsupportedDimension(f"deterministic quadrature supports n <= 3, got n={n}")


@lru_cache(maxsize=None)
def axisym_sphere_rule(n: int, G: int):
    """Directions for integrands invariant under rotations fixing e_0."""
    if n == 1:
        return sphere_rule(1, G)
    if n == 2:
        M = max(4, G // 2)
        psi = np.pi * (np.arange(M) + 0.5) / M
        return np.stack([np.cos(psi), np.sin(psi)], axis=-1), np.full(M, 2 * np.pi / M)
    if n == 3:
        c, cw = roots_legendre(G)
        s = np.sqrt(1.0 - c * c)
        return np.stack([c, s, np.zeros_like(c)], axis=-1), 2 * np.pi * cw
    raise UnsupportedDimension(f"deterministic quadrature supports n <= 3, got n={n}")


def _frame(axis: np.ndarray) -> np.ndarray:
    """Orthonormal matrix whose first column is ``axis``."""
    n = axis.size
    a = np.zeros((n, n))
    a[:, 0] = axis
    # fill with the basis vectors least aligned with axis
    order = np.argsort(np.abs(axis))
    a[:, 1:] = np.eye(n)[:, order[: n - 1]]
    q, r = np.linalg.qr(a)
    return q * np.sign(r[0, 0])


def ball_rule(center, rho: float, n: int, G: int, mode, edge_beta=None, axis=None,
              radial_only=False):
    """Nodes and weights over the ball B(center, rho).

    ``edge_beta`` is the power of the integrand at the sphere; ``axis`` enables
    the reduction for integrands symmetric about that line through ``center``;
    ``radial_only`` for integrands depending only on |x - center|.
    """
    c = np.asarray(center, dtype=float)
    if n == 1:
        tau, w = ray_rule(G, mode, left=edge_beta, right=edge_beta, grade_left=True, grade_right=True)
        return (c[0] - rho + 2 * rho * tau)[:, None], 2 * rho * w
    r_tau, r_w = ray_rule(G, mode, right=edge_beta, grade_right=True)
    r = rho * r_tau
    wr = rho * r_w * r ** (n - 1)
    if radial_only:
        e = np.zeros(n)
        e[0] = 1.0
        return c + r[:, None] * e, wr * sphere_area(n)
    if axis is not None:
        if n == 2:
            M = max(4, G // 2)
            psi = np.pi * (np.arange(M) + 0.5) / M
            dirs = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
            dw = np.full(M, 2 * np.pi / M)
        else:
            cth, cw = roots_legendre(max(4, G // 2))
            dirs = np.stack([cth, np.sqrt(1 - cth * cth), np.zeros_like(cth)], axis=-1)
            dw = 2 * np.pi * cw
        dirs = dirs @ _frame(np.asarray(axis, dtype=float)).T
    else:
        dirs, dw = sphere_rule(n, G)
    X = c + (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    W = (wr[:, None] * dw[None, :]).ravel()
    return X, W


# ------------------------------------------------------------ the form

def _support_exit(c, rho, X, H):
    """Distance from points X (P,n) along directions H (..,n) to the sphere |y-c| = rho."""
    Xc = X - np.asarray(c)
    xh = Xc @ H.T if H.ndim == 2 else np.sum(Xc * H, axis=-1)
    disc = xh * xh - np.sum(Xc * Xc, axis=-1)[:, None] + rho * rho
    return np.maximum(-xh + np.sqrt(np.maximum(disc, 0.0)), 0.0)


def _chunks(P: int, per_point: int, budget: int = 1 << 21):
    step = max(1, budget // max(per_point, 1))
    for s in range(0, P, step):
        yield slice(s, min(P, s + step))


def _domain_exit(D, X, H):
    """Exit distance for every (point, direction) pair, shape (P, Q)."""
    P, Q = X.shape[0], H.shape[0]
    return D.exit_distance(np.repeat(X[:, None, :], Q, axis=1), np.broadcast_to(H, (P, Q, H.shape[1])))


def _inner_term(v, omega, c, rho, alpha, X, WX, H, WH, G, mode):
    """1/2 ∫∫ over S x S, as sum over x-nodes X and direction nodes H."""
    tau, tw = ray_rule(G, mode, left=1.0 - alpha, grade_left=True, grade_right=True)
    n = X.shape[1]
    total = 0.0
    R, Q = tau.size, H.shape[0]
    for sl in _chunks(X.shape[0], Q * R * n):
        Xs = X[sl]
        T = _support_exit(c, rho, Xs, H)                      # (P,Q)
        t = T[:, :, None] * tau                               # (P,Q,R)
        Y = Xs[:, None, None, :] + t[..., None] * H[None, :, None, :]
        vx = v(Xs)
        vy = v(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = (vy - vx[:, None, None]) ** 2 * np.where(t > 0, t, 1.0) ** (-1.0 - alpha)
        if omega is not None:
            f = f * omega(Y) * omega(Xs)[:, None, None]
        f = np.where(t > 0, f, 0.0)
        ray = np.einsum("pqr,r->pq", f, tw) * T
        total += float(WX[sl] @ (ray @ WH))
    return 0.5 * total


def _kill_term(D, v, omega, c, rho, alpha, X, WX, H, WH, G, mode, w_edge):
    """∫_S v(x)^2 w(x) ∫_{D\\S} w(y) k(x,y) dy dx."""
    total = 0.0
    Q, n = H.shape[0], X.shape[1]
    if omega is None:
        half = isinstance(D, HalfSpace)
        for sl in _chunks(X.shape[0], Q * n):
            Xs = X[sl]
            tS = _support_exit(c, rho, Xs, H)
            with np.errstate(divide="ignore"):
                K = np.where(tS > 0, tS, np.inf) ** -alpha / alpha
            if half:
                # ∫_S t_D^-alpha dh = x_n^-alpha ∫_{h_n<0} |h_n|^alpha dh, exactly
                far = Xs[:, -1] ** -alpha * sphere_moment(n, alpha) / (2 * alpha)
                Kh = K @ WH - far
            else:
                tD = _domain_exit(D, Xs, H)
                K = np.where(tD > tS * (1 + 1e-13), K - tD ** -alpha / alpha, 0.0)
                Kh = K @ WH
            vx = v(Xs)
            total += float(WX[sl] @ (vx * vx * Kh))
        return total
    tau, tw = ray_rule(G, mode, right=w_edge, grade_left=True, grade_right=True)
    R = tau.size
    for sl in _chunks(X.shape[0], Q * R * n):
        Xs = X[sl]
        tS = _support_exit(c, rho, Xs, H)
        tD = _domain_exit(D, Xs, H)
        L = np.maximum(tD - tS, 0.0)
        t = tS[..., None] + L[..., None] * tau
        Y = Xs[:, None, None, :] + t[..., None] * H[None, :, None, :]
        with np.errstate(divide="ignore"):
            f = omega(Y) * np.where(t > 0, t, np.inf) ** (-1.0 - alpha)
        K = np.einsum("pqr,r->pq", f, tw) * L
        vx = v(Xs)
        total += float(WX[sl] @ (vx * vx * omega(Xs) * (K @ WH)))
    return total


def _form_once(D, u: TrialFunction, alpha, G, mode, omega=None, w_edge=None):
    n = D.dim
    if n > 3:
        raise UnsupportedDimension("deterministic quadrature supports n <= 3; use MonteCarlo")
    c, rho = u.support()
    c = np.asarray(c)
    beta = 2.0 * u.edge_power - alpha
    rc = u.radial_center
    # symmetric reductions: u radial about c; D and the weight symmetric
    # about the line through c and the domain centre (vertical for a half-space)
    half = isinstance(D, HalfSpace)
    dom_c = c - np.eye(n)[-1] if half else np.asarray(D.center)
    radial_u = rc is not None and np.allclose(rc, c)
    omega_radial_about_c = omega is None or np.allclose(c, dom_c)
    # the inner x-integrand has a finite nonzero limit at the support edge, so
    # its x-rule is graded without an endpoint power; the killing integrand
    # behaves like u^2 * dist^-alpha
    if n == 1:
        H, WH = sphere_rule(1, G)
        X, WX = ball_rule(c, rho, 1, G, mode)
        inner = _inner_term(u, omega, c, rho, alpha, X, WX, H, WH, G, mode)
        X, WX = ball_rule(c, rho, 1, G, mode, edge_beta=beta)
        kill = _kill_term(D, u, omega, c, rho, alpha, X, WX, H, WH, G, mode, w_edge)
        return inner + kill
    axis = c - dom_c
    nrm = np.linalg.norm(axis)
    axis = axis / nrm if nrm > 0 else np.eye(n)[0]
    if radial_u and omega_radial_about_c:
        X, WX = ball_rule(c, rho, n, G, mode, radial_only=True)
        H, WH = axisym_sphere_rule(n, G)
    elif radial_u and isinstance(D, Ball):
        # u radial about c, weight radial about the domain centre: symmetric about their axis
        X, WX = ball_rule(c, rho, n, G, mode, axis=axis)
        H, WH = sphere_rule(n, G)
    else:
        X, WX = ball_rule(c, rho, n, G, mode)
        H, WH = sphere_rule(n, G)
    inner = _inner_term(u, omega, c, rho, alpha, X, WX, H, WH, G, mode)
    if not half and u.touches_boundary and np.allclose(c, dom_c):
        return inner
    if radial_u and isinstance(D, Ball) and nrm == 0:
        X, WX = ball_rule(c, rho, n, G, mode, edge_beta=beta, radial_only=True)
        H, WH = axisym_sphere_rule(n, G)
    elif radial_u and isinstance(D, (Ball, HalfSpace)):
        X, WX = ball_rule(c, rho, n, G, mode, edge_beta=beta, axis=axis)
        H, WH = sphere_rule(n, G)
    else:
        X, WX = ball_rule(c, rho, n, G, mode, edge_beta=beta)
        H, WH = sphere_rule(n, G)
    kill = _kill_term(D, u, omega, c, rho, alpha, X, WX, H, WH, G, mode, w_edge)
    return inner + kill


def _refine(fn, spec: QuadratureSpec, method: str, scale: float = 0.0) -> FormValue:
    G = spec.grid_points_per_axis
    prev = fn(G)
    for level in range(1, spec.max_refinements + 1):
        G *= 2
        cur = fn(G)
        err = abs(cur - prev)
        if err <= spec.target_rel_tol * max(abs(cur), scale) or err <= 1e-300:
            return FormValue(cur, err, method, level)
        prev = cur
    raise NonConvergence(f"{method}: change {err:.3e} exceeds tolerance after "
                         f"{spec.max_refinements} refinements (value {cur:.6e})")


def _method_name(mode) -> str:
    if isinstance(mode, GradedMesh):
        return f"graded(q={mode.q:g})"
    if isinstance(mode, DuffySplit):
        return "duffy"
    return f"montecarlo(n={mode.samples})"


def _check_form_inputs(D, u, alpha):
    if isinstance(D, HalfSpace):
        raise UnsupportedDomain("forms over the half-space are evaluated through inscribed balls")
    if u.domain != D:
        u = TrialFunction(u.family, D, u.label)
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    return u


def energy_form(D, u: TrialFunction, spec: QuadratureSpec, alpha: Optional[float] = None,
                exact_pl: bool = True) -> FormValue:
    """1/2 ∫_D∫_D (u(x)-u(y))^2 / |x-y|^(n+alpha) dx dy."""
    if alpha is None:
        raise TypeError("energy_form needs alpha")
    u = _check_form_inputs(D, u, alpha)
    if exact_pl and isinstance(u.family, PiecewiseLinear) and isinstance(D, Interval):
        vals = np.asarray(u.family.values)
        A = interval_pl_energy_matrix(D, vals.size + 1, alpha)
        return FormValue(float(vals @ A @ vals), 0.0, "exact-pl", 0)
    mode = spec.singular_mode
    if isinstance(mode, MonteCarlo):
        return _mc_form(D, u, alpha, mode, None, None, "energy")
    return _refine(lambda G: _form_once(D, u, alpha, G, mode), spec, _method_name(mode))


def halfspace_energy_form(D: HalfSpace, u: TrialFunction, spec: QuadratureSpec,
                          alpha: float) -> FormValue:
    """The form over the whole half-space for u with bounded support.

    No truncation is needed: along every ray the exterior part of the kernel
    integrates in closed form to the exit distance power, which is zero for
    rays that never leave the half-space.
    """
    if not isinstance(D, HalfSpace):
        raise UnsupportedDomain("halfspace_energy_form needs a HalfSpace")
    u = TrialFunction(u.family, D, u.label) if u.domain != D else u
    if u.support_margin() <= 0:
        raise ValueError("support must lie strictly inside the half-space")
    mode = spec.singular_mode
    if isinstance(mode, MonteCarlo):
        return _mc_form(D, u, alpha, mode, None, None, "energy")
    return _refine(lambda G: _form_once(D, u, alpha, G, mode), spec, _method_name(mode))


def weighted_energy_form(D, v: TrialFunction, alpha: float, spec: QuadratureSpec) -> FormValue:
    """1/2 ∫∫ (v(x)-v(y))^2 w(x) w(y) / |x-y|^(n+alpha), w the reference weight of D."""
    v = _check_form_inputs(D, v, alpha)

    def omega(Y):
        return reference_weight(D, Y, alpha)

    w_edge = weight_edge_power(alpha)
    mode = spec.singular_mode
    if isinstance(mode, MonteCarlo):
        return _mc_form(D, v, alpha, mode, omega, w_edge, "weighted")
    return _refine(lambda G: _form_once(D, v, alpha, G, mode, omega, w_edge), spec,
                   _method_name(mode))


# ----------------------------------------------------- regional Laplacian

def _second_difference(g, g0, h):
    """Coefficient of t^2 in g(t) + g(-t) - 2 g(0), Richardson-extrapolated from steps h, 2h."""
    def d(k):
        return (g(k * h) + g(-k * h) - 2 * g0) / (k * h) ** 2
    return (4 * d(1) - d(2)) / 3


def _pv_values(D, f, X, alpha, G, mode, eps, end_power):
    """L_D f at the rows of X (principal value), deterministic rule."""
    n = D.dim
    H, WH = sphere_rule(n, G)
    rho = np.minimum(delta(D, X) / 2, 0.25 * D.inradius)
    tau, tw = ray_rule(G, mode, left=1.0 - alpha, grade_left=True)
    sig, sw = ray_rule(G, mode, right=end_power, grade_left=True, grade_right=True)
    out = np.empty(X.shape[0])
    Q = H.shape[0]
    for sl in _chunks(X.shape[0], Q * (tau.size + sig.size) * n):
        Xs, rs = X[sl], rho[sl]
        fx = f(Xs)
        # paired part on |t| < rho: odd terms cancel
        t = rs[:, None] * tau                                           # (P,R)
        Yp = Xs[:, None, None, :] + t[:, None, :, None] * H[None, :, None, :]
        Ym = Xs[:, None, None, :] - t[:, None, :, None] * H[None, :, None, :]
        pair = f(Yp) + f(Ym) - 2 * fx[:, None, None]
        hd = np.maximum(eps, 1e-3 * rs)[:, None]
        d2 = _second_difference(lambda s: f(Xs[:, None, :] + s[..., None] * H[None, :, :]),
                                fx[:, None], hd)
        small = (t < eps)[:, None, :]
        pair = np.where(small, d2[:, :, None] * t[:, None, :] ** 2, pair)
        sym = 0.5 * np.einsum("pqr,pr,r->pq", pair, t ** (-1.0 - alpha), tw) * rs[:, None]
        # remainder rho < t < exit distance
        T = _domain_exit(D, Xs, H)
        L = np.maximum(T - rs[:, None], 0.0)
        s = rs[:, None, None] + L[..., None] * sig
        Y = Xs[:, None, None, :] + s[..., None] * H[None, :, None, :]
        rem = np.einsum("pqr,r->pq", (f(Y) - fx[:, None, None]) * s ** (-1.0 - alpha), sw) * L
        out[sl] = (sym + rem) @ WH
    return out


def _pv_checks(D, X, spec):
    if isinstance(D, HalfSpace):
        raise UnsupportedDomain("regional Laplacian is evaluated on intervals and balls")
    if spec.pv_cutoff >= D.inradius / 10:
        raise ValueError("pv_cutoff must be below inradius/10")
    rho = np.minimum(delta(D, X) / 2, 0.25 * D.inradius)
    if np.any(rho < 10 * spec.pv_cutoff):
        raise BoundaryPoint("point too close to the boundary for the symmetric PV ball")


def regional_laplacian(D, u: TrialFunction, x, spec: QuadratureSpec, alpha: float) -> FormValue:
    """p.v. ∫_D (u(y) - u(x)) / |x-y|^(n+alpha) dy at a single interior point."""
    X = np.atleast_2d(np.asarray(x, dtype=float).reshape(1, -1))
    if X.shape[1] != D.dim:
        raise ValueError(f"point dimension {X.shape[1]} != domain dimension {D.dim}")
    _pv_checks(D, X, spec)
    u = TrialFunction(u.family, D, u.label) if u.domain != D else u
    end = u.edge_power if u.touches_boundary else None
    mode = spec.singular_mode
    if isinstance(mode, MonteCarlo):
        return _mc_pv(D, u, X[0], alpha, mode, spec.pv_cutoff)
    return _refine(lambda G: float(_pv_values(D, u, X, alpha, G, mode, spec.pv_cutoff, end)[0]),
                   spec, _method_name(mode), scale=1e-12)


def regional_laplacian_many(D, u: TrialFunction, X, spec: QuadratureSpec, alpha: float,
                            G: Optional[int] = None) -> np.ndarray:
    """Vectorized L_D u at many points with a fixed rule (no refinement loop)."""
    X = np.asarray(X, dtype=float)
    _pv_checks(D, X, spec)
    end = u.edge_power if u.touches_boundary else None
    return _pv_values(D, u, X, alpha, G or spec.grid_points_per_axis,
                      spec.singular_mode, spec.pv_cutoff, end)


def pv_chord(f: Callable, lo: float, hi: float, alpha: float, G: int = 64, mode=None,
             end_power=None, eps: float = 1e-5) -> float:
    """p.v. ∫_lo^hi (f(t) - f(0)) / |t|^(1+alpha) dt for lo < 0 < hi."""
    mode = mode or GradedMesh()
    rho = 0.5 * min(-lo, hi)
    tau, tw = ray_rule(G, mode, left=1.0 - alpha, grade_left=True)
    sig, sw = ray_rule(G, mode, right=end_power, grade_left=True, grade_right=True)
    f0 = f(np.zeros(1))[0]
    t = rho * tau
    pair = f(t) + f(-t) - 2 * f0
    d2 = _second_difference(lambda s: f(np.atleast_1d(s)), f0, max(eps, 1e-3 * rho))[0]
    pair = np.where(t < eps, d2 * t * t, pair)
    total = rho * np.sum(tw * pair * t ** (-1.0 - alpha))
    for sign, end in ((1.0, hi), (-1.0, -lo)):
        L = end - rho
        s = rho + L * sig
        total += L * np.sum(sw * (f(sign * s) - f0) * s ** (-1.0 - alpha))
    return float(total)


# -------------------------------------------------------- single integrals

def _single_once(u, weight_fn, power, G, mode, weight_radial):
    D = u.domain
    c, rho = u.support()
    beta = power * u.edge_power
    rc = u.radial_center
    c_arr = np.asarray(c)
    if not isinstance(D, Ball):
        weight_radial = False
    axis = c_arr - np.asarray(D.center) if isinstance(D, Ball) else c_arr
    nrm = float(np.linalg.norm(axis))
    radial_u = rc is not None and np.allclose(rc, c_arr)
    if D.dim > 1 and radial_u and (weight_fn is None or (weight_radial and nrm == 0)):
        X, WX = ball_rule(c, rho, D.dim, G, mode, edge_beta=beta, radial_only=True)
    elif D.dim > 1 and radial_u and weight_radial:
        X, WX = ball_rule(c, rho, D.dim, G, mode, edge_beta=beta, axis=axis / nrm)
    else:
        X, WX = ball_rule(c, rho, D.dim, G, mode, edge_beta=beta)
    vals = np.abs(u(X)) ** power
    if weight_fn is not None:
        vals = vals * weight_fn(X)
    return float(WX @ vals)


def _single(u, weight_fn, power, spec, tag, weight_radial=False):
    if u.dim > 3 and not isinstance(spec.singular_mode, MonteCarlo):
        raise UnsupportedDimension("deterministic quadrature supports n <= 3; use MonteCarlo")
    mode = spec.singular_mode
    if isinstance(mode, MonteCarlo):
        return _mc_single(u, weight_fn, power, mode, tag)
    return _refine(lambda G: _single_once(u, weight_fn, power, G, mode, weight_radial), spec,
                   _method_name(mode), scale=1e-300)


def hardy_functional(D, u: TrialFunction, alpha: float, spec: QuadratureSpec,
                     weight: Optional[Callable] = None, weight_radial: bool = False) -> FormValue:
    """∫_D u^2 delta_D^-alpha, or ∫ u^2 * weight when a weight function is given.

    ``weight_radial`` declares that ``weight`` depends only on the distance to
    the centre of D, which enables the symmetric reductions.
    """
    u = TrialFunction(u.family, D, u.label) if u.domain != D else u
    if weight is None:
        def weight(X):
            return delta(D, X) ** (-alpha)
        weight_radial = isinstance(D, Ball)
    return _single(u, weight, 2.0, spec, "hardy", weight_radial)


def lp_norm(D, u: TrialFunction, p: float, spec: QuadratureSpec) -> FormValue:
    """∫_D |u|^p (not rooted)."""
    if p < 1:
        raise ValueError("lp_norm needs p >= 1")
    u = TrialFunction(u.family, D, u.label) if u.domain != D else u
    return _single(u, None, float(p), spec, f"lp{p:g}")


# -------------------------------------------------------------- Monte Carlo

_MC_CHUNK = 1 << 16


def task_key(*parts) -> int:
    """Stable 32-bit key for a computation, independent of execution order."""
    text = json.dumps(parts, sort_keys=True, default=str)
    return zlib.crc32(text.encode())


def _rng(seed: int, task: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(task, chunk))
    return np.random.Generator(np.random.PCG64(ss))


def _uniform_ball(rng, n, size):
    g = rng.standard_normal((size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(size) ** (1.0 / n)
    return g * r[:, None]


def _uniform_sphere(rng, n, size):
    g = rng.standard_normal((size, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _ball_volume(n, rho):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * rho ** n


def _mc_reduce(sample_fn, mode: MonteCarlo, task: int, method: str) -> FormValue:
    """Fixed-order chunked mean and standard error."""
    N = mode.samples
    s1 = 0.0
    s2 = 0.0
    for k, start in enumerate(range(0, N, _MC_CHUNK)):
        m = min(_MC_CHUNK, N - start)
        vals = sample_fn(_rng(mode.seed, task, k), m)
        s1 += math.fsum(vals)
        s2 += math.fsum(vals * vals)
    mean = s1 / N
    var = max(s2 / N - mean * mean, 0.0)
    return FormValue(mean, math.sqrt(var / max(N - 1, 1)), method, 0)


def _mc_form(D, u, alpha, mode, omega, w_edge, tag):
    n = D.dim
    c, rho = u.support()
    c = np.asarray(c)
    vol = _ball_volume(n, rho)
    area = sphere_area(n)

    def sample(rng, m):
        X = c + rho * _uniform_ball(rng, n, m)
        H = _uniform_sphere(rng, n, m) if n > 1 else np.where(rng.random((m, 1)) < 0.5, 1.0, -1.0)
        U = rng.random(m)
        T = _pair_exit(c, rho, X, H)
        t = T * U ** (1.0 / (2.0 - alpha))
        Y = X + t[:, None] * H
        vx, vy = u(X), u(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(t > 0, (vy - vx) ** 2 / (t * t), 0.0) * T ** (2 - alpha) / (2 - alpha)
        if omega is not None:
            inner = inner * omega(X) * omega(Y)
        tD = D.exit_distance(X, H)
        with np.errstate(divide="ignore"):
            a_s = np.where(T > 0, T, np.inf) ** -alpha
        a_d = tD ** -alpha
        span = np.maximum(a_s - a_d, 0.0) / alpha
        if omega is None:
            kill = vx * vx * span
        else:
            U2 = rng.random(m)
            with np.errstate(divide="ignore"):
                tt = np.where(span > 0, (a_s - U2 * (a_s - a_d)), 1.0) ** (-1.0 / alpha)
            Z = X + np.where(span > 0, tt, 0.0)[:, None] * H
            kill = vx * vx * omega(X) * np.where(span > 0, omega(Z), 0.0) * span
        return vol * area * (0.5 * inner + kill)

    key = task_key(tag, D.to_dict(), u.to_dict(), alpha)
    return _mc_reduce(sample, mode, key, _method_name(mode))


def _pair_exit(c, rho, X, H):
    Xc = X - c
    xh = np.sum(Xc * H, axis=-1)
    disc = xh * xh - np.sum(Xc * Xc, axis=-1) + rho * rho
    return np.maximum(-xh + np.sqrt(np.maximum(disc, 0.0)), 0.0)


def _mc_pv(D, u, x, alpha, mode, eps):
    n = D.dim
    area = sphere_area(n)
    rho = min(float(delta(D, x)) / 2, 0.25 * D.inradius)
    fx = float(u(x[None, :])[0])
    hd = max(eps, 1e-3 * rho)

    def sample(rng, m):
        H = _uniform_sphere(rng, n, m) if n > 1 else np.where(rng.random((m, 1)) < 0.5, 1.0, -1.0)
        t = rho * rng.random(m) ** (1.0 / (2.0 - alpha))
        pair = (u(x + t[:, None] * H) + u(x - t[:, None] * H) - 2 * fx) / (t * t)
        # below the cutoff the raw second difference is roundoff; use the Taylor model
        small = t < eps
        if np.any(small):
            Hs = H[small]
            pair[small] = _second_difference(lambda h: u(x + h * Hs), fx, hd)
        sym = 0.5 * pair * rho ** (2 - alpha) / (2 - alpha)
        T = D.exit_distance(np.broadcast_to(x, H.shape), H)
        # remainder: sample t with density ∝ t^(-1-alpha) on [rho, T]
        a0, a1 = rho ** -alpha, T ** -alpha
        s = (a0 - rng.random(m) * (a0 - a1)) ** (-1.0 / alpha)
        rem = (u(x + s[:, None] * H) - fx) * (a0 - a1) / alpha
        return area * (sym + rem)

    key = task_key("pv", D.to_dict(), u.to_dict(), list(x), alpha)
    return _mc_reduce(sample, mode, key, _method_name(mode))


def _mc_single(u, weight_fn, power, mode, tag):
    D = u.domain
    n = D.dim
    c, rho = u.support()
    vol = _ball_volume(n, rho)

    def sample(rng, m):
        X = np.asarray(c) + rho * _uniform_ball(rng, n, m)
        vals = np.abs(u(X)) ** power
        if weight_fn is not None:
            vals = vals * weight_fn(X)
        return vol * vals

    key = task_key(tag, D.to_dict(), u.to_dict(), power)
    return _mc_reduce(sample, mode, key, _method_name(mode))


# --------------------------------------------- exact piecewise-linear forms

def _bspline3(d):
    """Autocorrelation of the unit hat function (centred cubic B-spline)."""
    a = np.abs(d)
    return np.where(a <= 1, 2.0 / 3.0 - a * a + 0.5 * a ** 3,
                    np.where(a < 2, (2.0 - np.minimum(a, 2.0)) ** 3 / 6.0, 0.0))


@lru_cache(maxsize=16)
def _toeplitz_symbol(N: int, alpha: float) -> np.ndarray:
    """J_d = ∫_0^N s^(-1-alpha) [2Λ(d) - Λ(d+s) - Λ(d-s)] ds for d = 0..N-2."""
    d = np.arange(N - 1, dtype=float)
    # first cell: the bracket is c2 s^2 + c3 s^3 exactly
    s = np.array([1.0 / 3.0, 2.0 / 3.0, 1.0])
    br = 2 * _bspline3(d)[:, None] - _bspline3(d[:, None] + s) - _bspline3(d[:, None] - s)
    V = np.stack([s, s ** 2, s ** 3], axis=1)
    coef = np.linalg.solve(V, br.T).T                      # (d, 3) for s, s^2, s^3
    J = coef[:, 1] / (2.0 - alpha) + coef[:, 2] / (3.0 - alpha)
    g, gw = _gauss_01(10)
    m = np.arange(1, N, dtype=float)
    S = (m[:, None] + g[None, :]).ravel()                   # cells [m, m+1]
    Wt = np.tile(gw, m.size) * S ** (-1.0 - alpha)
    br = 2 * _bspline3(d)[:, None] - _bspline3(d[:, None] + S) - _bspline3(d[:, None] - S)
    J += br @ Wt
    return J


def _pl_weighted_mass(N: int, h: float, alpha: float, which: str) -> np.ndarray:
    """Tridiagonal ∫ φ_i φ_j dist^-alpha over interior hats; dist to a, b, or the nearer end."""
    g, gw = _gauss_01(10)
    k = np.arange(N, dtype=float)                          # cell k spans nodes k, k+1
    # moments ∫_0^1 (k+ξ)^-a {(1-ξ)^2, ξ(1-ξ), ξ^2} dξ for distance measured from a
    def moments(kk):
        xi = g[None, :]
        base = (kk[:, None] + xi) ** (-alpha) * gw
        return np.stack([(base * (1 - xi) ** 2).sum(1), (base * xi * (1 - xi)).sum(1),
                         (base * xi * xi).sum(1)], axis=1)
    left = np.zeros((N, 3))
    left[1:] = moments(k[1:])
    left[0] = [np.nan, np.nan, 1.0 / (3.0 - alpha)]          # only φ_1^2 lives on cell 0
    right = left[::-1][:, ::-1]                              # mirror: distance from b
    if which == "left":
        loc = left
    elif which == "right":
        loc = right
    else:
        if N % 2:
            raise ValueError("delta weight needs an even number of cells")
        loc = np.where((k < N // 2)[:, None], left, right)
    loc = loc * h ** (1.0 - alpha)
    diag = np.zeros(N + 1)
    off = np.zeros(N)
    # cell k contributes (1-ξ)^2 to node k, ξ^2 to node k+1, ξ(1-ξ) to the pair
    diag[:-1] += np.nan_to_num(loc[:, 0])
    diag[1:] += np.nan_to_num(loc[:, 2])
    off += np.nan_to_num(loc[:, 1])
    M = np.diag(diag[1:-1]) + np.diag(off[1:-1], 1) + np.diag(off[1:-1], -1)
    return M


def interval_pl_mass(D: Interval, N: int) -> np.ndarray:
    h = (D.b - D.a) / N
    return h * (np.diag(np.full(N - 1, 2.0 / 3.0)) + np.diag(np.full(N - 2, 1.0 / 6.0), 1)
                + np.diag(np.full(N - 2, 1.0 / 6.0), -1))


@lru_cache(maxsize=16)
def _pl_energy_cached(a, b, N, alpha):
    L = b - a
    h = L / N
    J = _toeplitz_symbol(N, alpha)
    idx = np.arange(N - 1)
    T = h ** (1.0 - alpha) * J[np.abs(idx[:, None] - idx[None, :])]
    Ka = _pl_weighted_mass(N, h, alpha, "left")
    Kb = _pl_weighted_mass(N, h, alpha, "right")
    M = interval_pl_mass(Interval(a, b), N)
    A = T - (Ka + Kb) / alpha + 2.0 * L ** (-alpha) * M / alpha
    A = 0.5 * (A + A.T)
    A.setflags(write=False)
    return A


def interval_pl_energy_matrix(D: Interval, N: int, alpha: float) -> np.ndarray:
    """Matrix of the regional form on the N-1 interior hats of a uniform N-cell mesh.

    Exact up to rounding: after the shift substitution y = x + s the integrand
    is piecewise cubic in s with knots at multiples of h, integrated against
    s^(-1-alpha) by exact moments (first cell) and 10-point Gauss (others).
    """
    return _pl_energy_cached(float(D.a), float(D.b), int(N), float(alpha))


def interval_pl_hardy_matrix(D: Interval, N: int, alpha: float) -> np.ndarray:
    """∫ φ_i φ_j delta^-alpha on the interior hats."""
    return _pl_weighted_mass(N, (D.b - D.a) / N, alpha, "delta")
