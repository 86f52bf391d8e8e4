"""Inequality reports over trial suites, the admissible Sobolev constant, and
the Rayleigh-quotient sharpness probe."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from .domains import Ball, HalfSpace, Interval, translate_ball_to_halfspace
from .quadrature import (FormValue, QuadratureError, QuadratureSpec, axisym_sphere_rule,
                         ball_rule, energy_form, halfspace_energy_form, hardy_functional,
                         interval_pl_energy_matrix, interval_pl_hardy_matrix, lp_norm, ray_rule,
                         _support_exit)
from .specfun import kappa, sobolev_exponent
from .trialfns import PiecewiseLinear, TrialFunction, standard_suite


class Inequality(enum.Enum):
    HARDY = "Hardy"
    SOBOLEV = "Sobolev"
    HSM_BALL = "HsmBall"
    HSM_HALFSPACE = "HsmHalfspace"


class EmptyAfterFiltering(ValueError):
    pass


def combined_tolerance(lhs: FormValue, rhs_terms) -> float:
    """3 * (every est_error, scaled by its coefficient) + 1e-9."""
    err = lhs.est_error + sum(abs(coef) * fv.est_error for _, fv, coef in rhs_terms)
    return 3.0 * err + 1e-9


@dataclass
class InequalityReport:
    inequality: Inequality
    domain: object
    trial: str
    lhs: Optional[FormValue]
    rhs_terms: list = field(default_factory=list)
    inconclusive: bool = False
    note: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return sum(coef * fv.value for _, fv, coef in self.rhs_terms)

    @property
    def slack(self) -> float:
        return float("nan") if self.inconclusive else self.lhs.value - self.rhs

    @property
    def rel_slack(self) -> float:
        if self.inconclusive:
            return float("nan")
        return self.slack / abs(self.lhs.value) if self.lhs.value != 0 else 0.0

    @property
    def tol_combined(self) -> float:
        return float("nan") if self.inconclusive else combined_tolerance(self.lhs, self.rhs_terms)

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and self.slack >= -self.tol_combined

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = {
            "inequality": self.inequality.value,
            "domain": self.domain.to_dict(),
            "trial": self.trial,
            "lhs": self.lhs.to_dict() if self.lhs else None,
            "rhs_terms": [{"name": nm, "value": fv.to_dict(), "coefficient": coef}
                          for nm, fv, coef in self.rhs_terms],
            "slack": _num(self.slack),
            "rel_slack": _num(self.rel_slack),
            "tol_combined": _num(self.tol_combined),
            "pass": self.passed,
            "status": self.status,
        }
        if self.note:
            d["note"] = self.note
        if self.meta:
            d["meta"] = self.meta
        return d


def _num(x: float):
    return None if x != x else x


def recompute_pass(d: dict) -> bool:
    """The pass flag of a serialized report, rebuilt from its stored numbers."""
    if d["status"] == "inconclusive":
        return False
    lhs = d["lhs"]
    rhs = sum(t["coefficient"] * t["value"]["value"] for t in d["rhs_terms"])
    err = lhs["est_error"] + sum(abs(t["coefficient"]) * t["value"]["est_error"]
                                 for t in d["rhs_terms"])
    return lhs["value"] - rhs >= -(3.0 * err + 1e-9)


def _inconclusive(kind, D, u, exc) -> InequalityReport:
    return InequalityReport(kind, D, u.label, None, [], inconclusive=True,
                            note=f"{type(exc).__name__}: {exc}")


# ------------------------------------------------------------------ Hardy

def verify_hardy(D, u: TrialFunction, alpha: float, spec: QuadratureSpec) -> InequalityReport:
    """energy_form(u) >= kappa * ∫ u^2 delta^-alpha."""
    if not isinstance(D, (Interval, Ball)):
        raise ValueError("the Hardy check runs on intervals and balls")
    try:
        lhs = energy_form(D, u, spec, alpha)
        h = hardy_functional(D, u, alpha, spec)
    except QuadratureError as exc:
        return _inconclusive(Inequality.HARDY, D, u, exc)
    return InequalityReport(Inequality.HARDY, D, u.label, lhs,
                            [("hardy", h, kappa(D.dim, alpha))])


# ---------------------------------------------------------------- HSM ball

def _sobolev_term(D, u, alpha, spec) -> FormValue:
    """(∫|u|^{2*})^{2/2*}, with the error propagated through the power."""
    p = sobolev_exponent(D.dim, alpha)
    if p is None:
        raise ValueError(f"Sobolev term needs alpha < n (n={D.dim}, alpha={alpha})")
    raw = lp_norm(D, u, p, spec)
    if raw.value <= 0:
        return FormValue(0.0, raw.est_error, raw.method, raw.refinements_used)
    val = raw.value ** (2.0 / p)
    err = (2.0 / p) * raw.value ** (2.0 / p - 1.0) * raw.est_error
    return FormValue(val, err, raw.method, raw.refinements_used)


def _ball_weight(D: Ball, alpha: float) -> Callable:
    r = D.radius
    cen = np.asarray(D.center)

    def weight(X):
        q = r * r - np.sum((np.atleast_2d(X) - cen) ** 2, axis=-1)
        return r ** alpha * np.maximum(q, 0.0) ** (-alpha)
    return weight


def hsm_terms(D: Ball, u: TrialFunction, alpha: float, spec: QuadratureSpec):
    """(energy, weighted Hardy term, Sobolev term) for the ball inequality."""
    lhs = energy_form(D, u, spec, alpha)
    hw = hardy_functional(D, u, alpha, spec, weight=_ball_weight(D, alpha), weight_radial=True)
    sob = _sobolev_term(D, u, alpha, spec)
    return lhs, hw, sob


def verify_hsm_ball(r: float, n: int, u: TrialFunction, alpha: float, c_test: float,
                    spec: QuadratureSpec) -> InequalityReport:
    """energy_form(u) on B_r >= 2^alpha kappa ∫ u^2 r^alpha (r^2-|x|^2)^-alpha + c_test (∫|u|^{2*})^{2/2*}."""
    if n < 2 or not alpha < n:
        raise ValueError("the ball inequality needs n >= 2 and alpha < n")
    D = u.domain if isinstance(u.domain, Ball) and u.domain.radius == r else Ball((0.0,) * n, r)
    if u.domain != D:
        u = TrialFunction(u.family, D, u.label)
    try:
        lhs, hw, sob = hsm_terms(D, u, alpha, spec)
    except QuadratureError as exc:
        return _inconclusive(Inequality.HSM_BALL, D, u, exc)
    return InequalityReport(Inequality.HSM_BALL, D, u.label, lhs,
                            [("hardy_ball_weight", hw, 2.0 ** alpha * kappa(n, alpha)),
                             ("sobolev", sob, c_test)])


def estimate_admissible_c(D_or_r, n: int, alpha: float, suite: Sequence[TrialFunction],
                          spec: QuadratureSpec, workers: int = 1) -> float:
    """inf over the suite of (energy - 2^alpha kappa * weighted Hardy term) / Sobolev term.

    Members whose Sobolev term is below 1e-12 are skipped.
    """
    D = D_or_r if isinstance(D_or_r, Ball) else Ball((0.0,) * n, float(D_or_r))
    k = 2.0 ** alpha * kappa(n, alpha)

    def one(u):
        u = u if u.domain == D else TrialFunction(u.family, D, u.label)
        lhs, hw, sob = hsm_terms(D, u, alpha, spec)
        if sob.value < 1e-12:
            return None
        return (lhs.value - k * hw.value) / sob.value

    ratios = [q for q in ordered_map(one, list(suite), workers) if q is not None]
    if not ratios:
        raise EmptyAfterFiltering("every trial has a vanishing Sobolev term")
    return min(ratios)


# ---------------------------------------------------------- HSM half-space

@dataclass
class HalfspaceSummary:
    energies: dict                  # r -> ball energy
    halfspace_energy: FormValue     # exact exterior, no truncation
    richardson: Optional[float]     # 2 E_{r_max} - E_{r_max/2} when available
    hardy_terms: dict               # r -> ∫ u^2 x_n^-alpha (independent of r)
    hardy_spread: float             # max relative spread of hardy_terms

    def to_dict(self) -> dict:
        return {"energies": {str(k): v for k, v in self.energies.items()},
                "halfspace_energy": self.halfspace_energy.to_dict(),
                "richardson": self.richardson,
                "hardy_terms": {str(k): v for k, v in self.hardy_terms.items()},
                "hardy_spread": self.hardy_spread}


def verify_hsm_halfspace(u: TrialFunction, alpha: float, r_list: Sequence[float],
                         spec: QuadratureSpec, c_test: float = 0.0):
    """Ball inequalities on B(x_r, r) with the weight relaxed to x_n^-alpha, one report per r.

    Returns (reports, summary). On B(x_r, r) one has 2^alpha r^alpha
    (r^2 - |x - x_r|^2)^-alpha >= delta_B^-alpha >= x_n^-alpha, so each report
    is implied by the ball inequality.
    """
    H = u.domain
    if not isinstance(H, HalfSpace):
        raise ValueError("u must live on a HalfSpace")
    n = H.dim
    r_list = [float(r) for r in r_list]
    if any(b <= a for a, b in zip(r_list, r_list[1:])):
        raise ValueError("r_list must be increasing")
    c, rho = u.support()
    k = kappa(n, alpha)
    reports, energies, hardy = [], {}, {}
    for r in r_list:
        B = translate_ball_to_halfspace(r, n)
        ub = TrialFunction(u.family, B, u.label)
        if ub.support_margin() <= 0:
            raise ValueError(f"support of {u.label!r} is not inside B(x_r, r) for r={r}")
        try:
            lhs = energy_form(B, ub, spec, alpha)
            hx = hardy_functional(H, u, alpha, spec)
            sob = _sobolev_term(B, ub, alpha, spec)
        except QuadratureError as exc:
            reports.append(_inconclusive(Inequality.HSM_HALFSPACE, B, ub, exc))
            continue
        energies[r] = lhs.value
        hardy[r] = hx.value
        reports.append(InequalityReport(Inequality.HSM_HALFSPACE, B, u.label, lhs,
                                        [("hardy_xn", hx, k), ("sobolev", sob, c_test)],
                                        meta={"r": r}))
    full = halfspace_energy_form(H, u, spec, alpha)
    rich = None
    rs = sorted(energies)
    if len(rs) >= 2 and rs[-1] == 2 * rs[-2]:
        rich = 2 * energies[rs[-1]] - energies[rs[-2]]
    vals = list(hardy.values())
    spread = (max(vals) - min(vals)) / abs(max(vals)) if vals and max(vals) else 0.0
    return reports, HalfspaceSummary(energies, full, rich, hardy, spread)


# -------------------------------------------------------------- sharpness

@dataclass
class SharpnessResult:
    domain: object
    alpha: float
    best_quotient: float
    reference_kappa: float
    minimizer: TrialFunction
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def gap_ratio(self) -> float:
        return self.best_quotient / self.reference_kappa

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "alpha": self.alpha,
                "best_quotient": self.best_quotient, "reference_kappa": self.reference_kappa,
                "gap_ratio": self.gap_ratio, "iterations": self.iterations,
                "converged": self.converged, "mesh_size": len(self.minimizer.family.values) + 1}


def rayleigh_descent(A: np.ndarray, M: np.ndarray, x0: np.ndarray, max_iter: int = 500,
                     tol: float = 1e-10):
    """Minimize x'Ax / x'Mx by Rayleigh-Ritz on span{x, residual, previous step}.

    Every accepted iterate is the minimizer over a subspace containing the
    previous one, so the quotient never increases.
    """
    x = x0 / math.sqrt(x0 @ M @ x0)
    q = float(x @ A @ x)
    p = None
    hist = [q]
    for it in range(1, max_iter + 1):
        r = A @ x - q * (M @ x)
        if np.linalg.norm(r) <= tol * max(abs(q), 1.0) * math.sqrt(x @ x):
            return x, q, it, True, hist
        basis = [x, r] if p is None else [x, r, p]
        S = np.stack(basis, axis=1)
        S, _ = np.linalg.qr(S)
        a_s = S.T @ A @ S
        m_s = S.T @ M @ S
        keep = np.linalg.eigvalsh(m_s) > 1e-14 * np.trace(m_s)
        if not keep.all():
            S = S[:, :2]
            a_s, m_s = S.T @ A @ S, S.T @ M @ S
        vals, vecs = scipy.linalg.eigh(a_s, m_s)
        y = vecs[:, 0]
        x_new = S @ y
        x_new /= math.sqrt(x_new @ M @ x_new)
        if x_new @ M @ x < 0:
            x_new = -x_new
        q_new = float(x_new @ A @ x_new)
        if q_new > q:               # rounding only; keep the better iterate
            return x, q, it, abs(q_new - q) <= 1e-12 * abs(q), hist
        p = x_new - x
        x, q = x_new, q_new
        hist.append(q)
        if len(hist) > 2 and abs(hist[-2] - q) <= tol * abs(q):
            return x, q, it, True, hist
    return x, q, max_iter, False, hist


def _truncated_weight_start(nodes: np.ndarray, alpha: float, margin: float) -> np.ndarray:
    """The w_1-type profile, cut off linearly within ``margin`` of the ends (nodes in [-1, 1])."""
    s = np.clip(1.0 - nodes ** 2, 0.0, None) ** (0.5 * (alpha - 1.0))
    cut = np.clip((1.0 - np.abs(nodes)) / margin, 0.0, 1.0)
    return s * cut


def radial_pl_matrices(D: Ball, N: int, alpha: float, G: int = 64):
    """Energy and Hardy matrices for radial hats on N uniform radial cells (r=1 pinned)."""
    n = D.dim
    R = D.radius
    c = np.asarray(D.center)
    nodes = np.linspace(0.0, R, N + 1)

    def hats(r):
        r = np.asarray(r)
        idx = np.arange(N)
        return np.clip(1.0 - np.abs(r[..., None] - nodes[idx]) / (R / N), 0.0, None)

    # x on a radial line, directions in the half sphere, rays to the boundary
    X, WX = ball_rule(c, R, n, G, _mode(), radial_only=True)
    H, WH = axisym_sphere_rule(n, G)
    tau, tw = ray_rule(G, _mode(), left=1.0 - alpha, grade_left=True, grade_right=True)
    A = np.zeros((N, N))
    for i in range(X.shape[0]):
        x = X[i:i + 1]
        T = _support_exit(c, R, x, H)[0]                           # (Q,)
        t = T[:, None] * tau                                        # (Q,R)
        Y = x[0] + t[..., None] * H[:, None, :]
        ry = np.linalg.norm(Y - c, axis=-1)
        dphi = hats(ry) - hats(np.linalg.norm(x[0] - c))            # (Q,R,N)
        w = (WH[:, None] * T[:, None]) * tw[None, :] * t ** (-1.0 - alpha)
        A += 0.5 * WX[i] * np.einsum("qr,qri,qrj->ij", w, dphi, dphi)
    r_tau, r_w = ray_rule(G, _mode(), right=-alpha, grade_right=True)
    rr = R * r_tau
    phi = hats(rr)
    from .specfun import sphere_area
    wr = R * r_w * rr ** (n - 1) * sphere_area(n) * (R - rr) ** (-alpha)
    Hm = np.einsum("k,ki,kj->ij", wr, phi, phi)
    return 0.5 * (A + A.T), 0.5 * (Hm + Hm.T)


def _mode():
    from .quadrature import GradedMesh
    return GradedMesh()


def sharpness_probe(D, alpha: float, mesh_size: int, optimizer_cfg: Optional[dict] = None,
                    ) -> SharpnessResult:
    """Minimize energy / Hardy functional over piecewise-linear trial functions.

    On an interval the matrices are exact; on a ball (n <= 2) radial profiles
    are assembled by quadrature.
    """
    cfg = {"max_iter": 2000, "tol": 1e-11, "start_margin": 0.05}
    cfg.update(optimizer_cfg or {})
    if mesh_size < 32:
        raise ValueError("mesh_size must be >= 32")
    if isinstance(D, Interval):
        A = interval_pl_energy_matrix(D, mesh_size, alpha)
        M = interval_pl_hardy_matrix(D, mesh_size, alpha)
        nodes = np.linspace(-1.0, 1.0, mesh_size + 1)[1:-1]
        ref = kappa(1, alpha)
    elif isinstance(D, Ball) and D.dim <= 2:
        A, M = radial_pl_matrices(D, mesh_size, alpha, int(cfg.get("grid", 64)))
        nodes = np.linspace(0.0, 1.0, mesh_size + 1)[:-1]
        ref = kappa(D.dim, alpha)
    else:
        raise ValueError("sharpness_probe supports intervals and balls with n <= 2")
    x0 = cfg.get("start")
    x0 = _truncated_weight_start(nodes, alpha, cfg["start_margin"]) if x0 is None else np.asarray(x0, float)
    if not np.any(x0):
        raise ValueError("degenerate start: the zero function has no Rayleigh quotient")
    x, q, its, ok, hist = rayleigh_descent(A, M, x0, int(cfg["max_iter"]), float(cfg["tol"]))
    if x.sum() < 0:
        x = -x
    u = TrialFunction(PiecewiseLinear(tuple(x)), D, f"pl{mesh_size}")
    return SharpnessResult(D, alpha, q, ref, u, its, ok, hist)


# ------------------------------------------------------------ run plumbing

def ordered_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """map with results in input order; threads when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_hardy_suite(D, alpha: float, spec: QuadratureSpec, suite=None, workers: int = 1):
    suite = suite if suite is not None else standard_suite(D, alpha)
    return ordered_map(lambda u: verify_hardy(D, u, alpha, spec), list(suite), workers)


def to_json_lines(reports: Iterable) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports)


CSV_FIELDS = ("trial", "inequality", "slack", "rel_slack", "pass")


def to_csv(reports: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        w.writerow([r.trial, r.inequality.value, repr(r.slack), repr(r.rel_slack), r.status])
    return buf.getvalue()


def exit_code(reports: Sequence) -> int:
    """0 all pass, 2 some fail, 3 only inconclusive failures."""
    if any(r.status == "fail" for r in reports):
        return 2
    if any(r.status == "inconclusive" for r in reports):
        return 3
    return 0
