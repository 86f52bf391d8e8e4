"""Compactly supported test functions and their quotients by the reference weight."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .domains import (Ball, Domain, Interval, _as_points, delta, domain_from_dict,
                      reference_weight)


def _radius(x: np.ndarray, center) -> np.ndarray:
    return np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1)


@dataclass(frozen=True)
class PolyBump:
    """max(0, 1 - |x-c|^2/rho^2)^p."""

    center: tuple
    rho: float
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.rho > 0 or self.p < 1:
            raise ValueError("PolyBump needs rho > 0 and p >= 1")

    def evaluate(self, x, D):
        s = 1.0 - (_radius(x, self.center) / self.rho) ** 2
        return np.where(s > 0, np.maximum(s, 0.0) ** self.p, 0.0)

    def support(self, D):
        return self.center, self.rho

    def edge_power(self) -> float:
        return self.p

    def radial_center(self, D):
        return self.center

    def to_dict(self) -> dict:
        return {"family": "polybump", "center": list(self.center), "rho": self.rho, "p": self.p}


@dataclass(frozen=True)
class CosineBump:
    """((1 + cos(pi |x-c| / rho)) / 2)^p inside the ball of radius rho."""

    center: tuple
    rho: float
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.rho > 0 or self.p < 1:
            raise ValueError("CosineBump needs rho > 0 and p >= 1")

    def evaluate(self, x, D):
        r = _radius(x, self.center) / self.rho
        s = 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, 1.0)))
        return np.where(r < 1, s ** self.p, 0.0)

    def support(self, D):
        return self.center, self.rho

    def edge_power(self) -> float:
        return 2.0 * self.p

    def radial_center(self, D):
        return self.center

    def to_dict(self) -> dict:
        return {"family": "cosinebump", "center": list(self.center), "rho": self.rho, "p": self.p}


def _same_point(a, b) -> bool:
    return a is not None and b is not None and np.allclose(a, b, rtol=0, atol=1e-14)


def _domain_center(D):
    return tuple(D.center)


def _touches_boundary(f, D) -> bool:
    c, rho = f.support(D)
    return float(delta(D, np.asarray(c, dtype=float))) - rho <= 1e-12 * D.inradius


@dataclass(frozen=True)
class WeightedProfile:
    """w * phi, with w the reference weight of the domain."""

    phi: "Family"
    alpha: float

    def evaluate(self, x, D):
        return reference_weight(D, x, self.alpha) * self.phi.evaluate(x, D)

    def support(self, D):
        return self.phi.support(D)

    def edge_power(self, D=None) -> float:
        # the weight's own boundary power only shows if phi reaches the boundary
        if D is not None and _touches_boundary(self.phi, D):
            c, rho = self.phi.support(D)
            gap = float(delta(D, np.asarray(c, dtype=float))) - rho
            # support ball strictly past the boundary: phi is nonzero there
            inner = 0.0 if gap < -1e-12 * D.inradius else self.phi.edge_power()
            return inner + 0.5 * (self.alpha - 1.0)
        return self.phi.edge_power()

    def radial_center(self, D):
        c = self.phi.radial_center(D)
        return c if _same_point(c, _domain_center(D)) else None

    def to_dict(self) -> dict:
        return {"family": "weighted", "alpha": self.alpha, "phi": self.phi.to_dict()}


@dataclass(frozen=True)
class WeightQuotient:
    """base / w; finite because base vanishes near the boundary."""

    base: "Family"
    alpha: float

    def evaluate(self, x, D):
        w = reference_weight(D, x, self.alpha)
        b = self.base.evaluate(x, D)
        return np.where(w > 0, b / np.where(w > 0, w, 1.0), 0.0)

    def support(self, D):
        return self.base.support(D)

    def edge_power(self) -> float:
        return self.base.edge_power()

    def radial_center(self, D):
        c = self.base.radial_center(D)
        return c if _same_point(c, _domain_center(D)) else None

    def to_dict(self) -> dict:
        return {"family": "quotient", "alpha": self.alpha, "base": self.base.to_dict()}


@dataclass(frozen=True)
class Constant:
    """Constant on the whole domain. Not compactly supported; a quadrature test input only."""

    value: float = 1.0

    def evaluate(self, x, D):
        return np.where(delta(D, x) > 0, self.value, 0.0)

    def support(self, D):
        return _domain_center(D), D.inradius

    def edge_power(self) -> float:
        return 0.0

    def radial_center(self, D):
        return _domain_center(D)

    def to_dict(self) -> dict:
        return {"family": "constant", "value": self.value}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function on a uniform mesh, pinned to 0 on the boundary.

    On an interval (a, b) with N cells, ``values`` holds the N-1 interior node
    values. On a ball it is a radial profile in |x-c|/R on N cells with the
    values at r = 0, ..., (N-1)/N; the node r = 1 is pinned.
    """

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def node_values(self, D) -> np.ndarray:
        v = np.asarray(self.values)
        if isinstance(D, Interval):
            return np.concatenate([[0.0], v, [0.0]])
        return np.concatenate([v, [0.0]])

    def evaluate(self, x, D):
        full = self.node_values(D)
        if isinstance(D, Interval):
            x = _as_points(x, 1)[..., 0]
            nodes = np.linspace(D.a, D.b, full.size)
            return np.interp(x, nodes, full, left=0.0, right=0.0)
        if isinstance(D, Ball):
            r = _radius(_as_points(x, D.dim), D.center) / D.radius
            nodes = np.linspace(0.0, 1.0, full.size)
            return np.interp(r, nodes, full, left=full[0], right=0.0)
        raise ValueError("PiecewiseLinear lives on intervals and balls")

    def support(self, D):
        return _domain_center(D), D.inradius

    def edge_power(self) -> float:
        return 1.0

    def radial_center(self, D):
        return _domain_center(D) if isinstance(D, Ball) else None

    def breakpoints(self, D) -> np.ndarray:
        if isinstance(D, Interval):
            return np.linspace(D.a, D.b, len(self.values) + 2)
        return np.linspace(0.0, D.radius, len(self.values) + 1)

    def to_dict(self) -> dict:
        return {"family": "piecewise_linear", "values": list(self.values)}


Family = Union[PolyBump, CosineBump, WeightedProfile, WeightQuotient, Constant, PiecewiseLinear]


def family_from_dict(d: dict) -> Family:
    kind = d["family"]
    if kind == "polybump":
        return PolyBump(tuple(d["center"]), float(d["rho"]), float(d.get("p", 2.0)))
    if kind == "cosinebump":
        return CosineBump(tuple(d["center"]), float(d["rho"]), float(d.get("p", 1.0)))
    if kind == "weighted":
        return WeightedProfile(family_from_dict(d["phi"]), float(d["alpha"]))
    if kind == "quotient":
        return WeightQuotient(family_from_dict(d["base"]), float(d["alpha"]))
    if kind == "constant":
        return Constant(float(d.get("value", 1.0)))
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(d["values"]))
    raise ValueError(f"unknown trial family {kind!r}")


@dataclass(frozen=True)
class TrialFunction:
    family: Family
    domain: Domain
    label: str = field(default="")

    def __call__(self, x) -> np.ndarray:
        return self.family.evaluate(_as_points(x, self.domain.dim), self.domain)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def support(self):
        """(center, radius) of a ball containing the support."""
        c, rho = self.family.support(self.domain)
        return tuple(float(v) for v in c), float(rho)

    @property
    def edge_power(self) -> float:
        """Exponent p with |u| ~ dist(x, edge of support)^p near the support edge."""
        if isinstance(self.family, WeightedProfile):
            return self.family.edge_power(self.domain)
        return self.family.edge_power()

    @property
    def touches_boundary(self) -> bool:
        return _touches_boundary(self.family, self.domain)

    @property
    def radial_center(self) -> Optional[tuple]:
        return self.family.radial_center(self.domain)

    def support_margin(self) -> float:
        """Distance from the support ball to the boundary of the domain."""
        c, rho = self.support()
        return float(delta(self.domain, np.asarray(c))) - rho

    def scaled(self, factor: float, domain: Domain) -> "TrialFunction":
        """u(x / factor) on ``domain``; only for families that scale with their domain."""
        return TrialFunction(_scale_family(self.family, factor), domain, self.label)

    def to_dict(self) -> dict:
        return {"label": self.label, "family": self.family.to_dict()}


def _scale_family(f: Family, s: float) -> Family:
    if isinstance(f, PolyBump):
        return PolyBump(tuple(s * c for c in f.center), s * f.rho, f.p)
    if isinstance(f, CosineBump):
        return CosineBump(tuple(s * c for c in f.center), s * f.rho, f.p)
    if isinstance(f, WeightedProfile):
        return WeightedProfile(_scale_family(f.phi, s), f.alpha)
    if isinstance(f, WeightQuotient):
        return WeightQuotient(_scale_family(f.base, s), f.alpha)
    if isinstance(f, (Constant, PiecewiseLinear)):
        return f
    raise TypeError(f"cannot scale {type(f).__name__}")


def evaluate(u: TrialFunction, x) -> np.ndarray:
    return u(x)


def quotient_by_weight(u: TrialFunction, alpha: float) -> TrialFunction:
    """v = u / w for the reference weight w of u's domain."""
    if not isinstance(u.domain, (Interval, Ball)):
        raise ValueError(f"quotient_by_weight needs an interval or ball, got {type(u.domain).__name__}")
    f = u.family
    if isinstance(f, WeightedProfile) and f.alpha == alpha:
        fam = f.phi
    else:
        fam = WeightQuotient(f, alpha)
    return TrialFunction(fam, u.domain, f"{u.label}/w" if u.label else "v")


def multiply_by_weight(v: TrialFunction, alpha: float) -> TrialFunction:
    f = v.family
    if isinstance(f, WeightQuotient) and f.alpha == alpha:
        fam = f.base
    else:
        fam = WeightedProfile(f, alpha)
    return TrialFunction(fam, v.domain, f"w*{v.label}" if v.label else "u")


def standard_suite(D: Domain, alpha: float) -> list:
    """At least 20 trial functions with supports compactly inside ``D``.

    Built in coordinates relative to the centre and inradius of ``D`` so that
    the suite of a scaled ball is the scaled suite.
    """
    if not isinstance(D, (Interval, Ball)):
        raise ValueError("standard_suite needs a bounded domain")
    c0 = np.asarray(D.center, dtype=float)
    R = D.inradius
    e0 = np.zeros(D.dim)
    e0[0] = 1.0

    def at(s):
        return tuple(c0 + s * R * e0)

    out = []

    def add(fam, label):
        out.append(TrialFunction(fam, D, label))

    for rho in (0.3, 0.6, 0.9):
        for p in (1, 2):
            add(PolyBump(at(0.0), rho * R, p), f"poly(c=0,rho={rho},p={p})")
    for rho in (0.5, 0.9):
        for p in (1, 2):
            add(CosineBump(at(0.0), rho * R, p), f"cos(c=0,rho={rho},p={p})")
    for s in (0.5, 0.7):
        rho = round(1.0 - s - 0.025, 10)
        add(PolyBump(at(s), rho * R, 1), f"poly(c={s},rho={rho},p=1)")
        add(PolyBump(at(s), rho * R, 2), f"poly(c={s},rho={rho},p=2)")
        add(CosineBump(at(s), rho * R, 1), f"cos(c={s},rho={rho},p=1)")
    add(PolyBump(at(-0.6), 0.375 * R, 2), "poly(c=-0.6,rho=0.375,p=2)")
    # near-extremal profiles w * bump: they push mass toward the boundary
    for rho in (0.9, 0.95, 0.975):
        for p in (1, 2):
            add(WeightedProfile(PolyBump(at(0.0), rho * R, p), alpha),
                f"w*poly(c=0,rho={rho},p={p})")
    add(WeightedProfile(CosineBump(at(0.0), 0.95 * R, 1), alpha), "w*cos(c=0,rho=0.95,p=1)")
    return out


def suite_to_json(suite: Sequence[TrialFunction], alpha: Optional[float] = None) -> str:
    if not suite:
        return json.dumps({"domain": None, "alpha": alpha, "trials": []})
    return json.dumps({
        "domain": suite[0].domain.to_dict(),
        "alpha": alpha,
        "trials": [u.to_dict() for u in suite],
    }, sort_keys=True)


def suite_from_json(text: str) -> list:
    doc = json.loads(text)
    D = domain_from_dict(doc["domain"])
    return [TrialFunction(family_from_dict(t["family"]), D, t.get("label", ""))
            for t in doc["trials"]]
