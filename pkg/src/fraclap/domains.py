"""Intervals, balls and half-spaces with their boundary-distance functions.

Points are numpy arrays whose last axis holds coordinates, so every geometric
routine here is vectorized over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class DimensionMismatch(ValueError):
    pass


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"Interval needs a < b, got ({self.a}, {self.b})")

    @property
    def dim(self) -> int:
        return 1

    @property
    def center(self) -> tuple:
        return (0.5 * (self.a + self.b),)

    @property
    def inradius(self) -> float:
        return 0.5 * (self.b - self.a)

    @property
    def diameter(self) -> float:
        return self.b - self.a

    def delta(self, x) -> np.ndarray:
        x = _as_points(x, 1)[..., 0]
        return np.maximum(np.minimum(x - self.a, self.b - x), 0.0)

    def exit_distance(self, x, h) -> np.ndarray:
        """Distance from interior ``x`` to the boundary along unit direction ``h``."""
        x = _as_points(x, 1)[..., 0]
        h = np.asarray(h, dtype=float)[..., 0]
        return np.where(h > 0, self.b - x, x - self.a)

    def to_dict(self) -> dict:
        return {"kind": "interval", "dim": 1, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError(f"Ball radius must be positive, got {self.radius}")
        if len(self.center) < 1:
            raise ValueError("Ball center must have at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def inradius(self) -> float:
        return self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def delta(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return np.maximum(self.radius - r, 0.0)

    def exit_distance(self, x, h) -> np.ndarray:
        x = _as_points(x, self.dim) - np.asarray(self.center)
        h = np.asarray(h, dtype=float)
        xh = np.sum(x * h, axis=-1)
        disc = xh * xh - np.sum(x * x, axis=-1) + self.radius ** 2
        return -xh + np.sqrt(np.maximum(disc, 0.0))

    def to_dict(self) -> dict:
        return {"kind": "ball", "dim": self.dim, "radius": self.radius,
                "center": list(self.center)}


@dataclass(frozen=True)
class HalfSpace:
    """R^{n-1} x (0, inf)."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("HalfSpace needs dim >= 2")

    @property
    def inradius(self) -> float:
        return float("inf")

    @property
    def diameter(self) -> float:
        return float("inf")

    def delta(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        return np.maximum(x[..., -1], 0.0)

    def exit_distance(self, x, h) -> np.ndarray:
        x = _as_points(x, self.dim)
        hn = np.asarray(h, dtype=float)[..., -1]
        with np.errstate(divide="ignore"):
            return np.where(hn < 0, x[..., -1] / np.where(hn < 0, -hn, 1.0), np.inf)

    def to_dict(self) -> dict:
        return {"kind": "halfspace", "dim": self.dim}


Domain = Union[Interval, Ball, HalfSpace]


def delta(D: Domain, x) -> np.ndarray:
    """Distance from ``x`` to the complement of ``D`` (0 outside the interior)."""
    return D.delta(x)


def domain_from_dict(d: dict) -> Domain:
    kind = d.get("kind")
    if kind == "interval":
        return Interval(float(d.get("a", -1.0)), float(d.get("b", 1.0)))
    if kind == "ball":
        dim = int(d.get("dim", len(d.get("center", [0.0, 0.0]))))
        center = d.get("center") or [0.0] * dim
        if len(center) != dim:
            raise DimensionMismatch(f"center {center} does not match dim {dim}")
        return Ball(tuple(center), float(d.get("radius", 1.0)))
    if kind == "halfspace":
        return HalfSpace(int(d["dim"]))
    raise ValueError(f"unknown domain kind {kind!r}")


def translate_ball_to_halfspace(r: float, n: int) -> Ball:
    """The ball B(x_r, r), x_r = (0, ..., 0, r), which sits inside the half-space and touches it at 0."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return Ball((0.0,) * (n - 1) + (float(r),), float(r))


def reference_weight(D: Domain, x, alpha: float) -> np.ndarray:
    """(1 - |xi|^2)^((alpha-1)/2) with xi the affine image of x in the unit ball.

    On the unit ball centred at the origin this is exactly w_n; on an interval
    (a, b) it is w_1 pulled back from (-1, 1). Zero outside the domain.
    """
    if isinstance(D, Interval):
        x = _as_points(x, 1)[..., 0]
        xi = (2.0 * x - D.a - D.b) / (D.b - D.a)
        s = 1.0 - xi * xi
    elif isinstance(D, Ball):
        x = _as_points(x, D.dim)
        xi = (x - np.asarray(D.center)) / D.radius
        s = 1.0 - np.sum(xi * xi, axis=-1)
    else:
        raise ValueError("the reference weight is only defined on intervals and balls")
    p = 0.5 * (alpha - 1.0)
    return np.where(s > 0, np.maximum(s, 0.0) ** p, 0.0)


def weight_edge_power(alpha: float) -> float:
    """Exponent of the boundary-distance power in the reference weight."""
    return 0.5 * (alpha - 1.0)
