"""Gamma/Beta and the closed-form constants of the fractional Hardy inequalities."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional


class DomainError(ValueError):
    """Argument outside the domain where a special function or constant is defined."""


def gamma_fn(x: float) -> float:
    """Euler Gamma for x > 0."""
    if not x > 0:
        raise DomainError(f"gamma_fn requires x > 0, got {x!r}")
    if x > 171.0:
        raise DomainError(f"gamma_fn overflows for x={x!r}; use math.lgamma")
    return math.gamma(x)


def beta_fn(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got ({a!r}, {b!r})")
    if a + b < 170.0:
        return math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n (|S^0| = 2)."""
    if n < 1:
        raise DomainError(f"sphere_area requires n >= 1, got {n!r}")
    if n == 1:
        return 2.0
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_moment(n: int, alpha: float) -> float:
    """Integral of |h_n|^alpha over the unit sphere S^{n-1}.

    For n = 1 the sphere is {-1, 1} and the moment is 2.
    """
    if n < 1:
        raise DomainError(f"sphere_moment requires n >= 1, got {n!r}")
    if n == 1:
        return 2.0
    return (2.0 * math.pi ** ((n - 1) / 2) * math.gamma((alpha + 1) / 2)
            / math.gamma((n + alpha) / 2))


def _check_alpha(alpha: float) -> None:
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1, 2), got {alpha!r}")


def hardy_beta(alpha: float) -> float:
    """B((alpha+1)/2, (2-alpha)/2), the Beta value shared by kappa and c1."""
    return beta_fn((alpha + 1) / 2, (2 - alpha) / 2)


def kappa(n: int, alpha: float) -> float:
    """Sharp Hardy constant for the regional form on convex domains in R^n."""
    _check_alpha(alpha)
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n!r}")
    return (math.pi ** ((n - 1) / 2)
            * math.gamma((1 + alpha) / 2) / math.gamma((n + alpha) / 2)
            * (hardy_beta(alpha) - 2.0 ** alpha) / (alpha * 2.0 ** alpha))


def c1_const(alpha: float) -> float:
    _check_alpha(alpha)
    return (hardy_beta(alpha) - 2.0 ** alpha) / alpha


def c2_const(alpha: float) -> float:
    # (2^a - 2)/a is meaningful on all of (0, 2); c2(1) = 0 exactly
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha!r}")
    return (2.0 ** alpha - 2.0) / alpha


def sobolev_exponent(n: int, alpha: float) -> Optional[float]:
    """Critical exponent 2n/(n - alpha), or None when alpha >= n."""
    if alpha >= n:
        return None
    return 2.0 * n / (n - alpha)


@dataclass(frozen=True)
class ConstantsTable:
    alpha: float
    dim: int
    kappa: float
    c1: float
    c2: float
    c3: float
    sobolev_exp: Optional[float]
    sphere_moment: float
    sphere_area: float

    def to_dict(self) -> dict:
        return asdict(self)


def constants(n: int, alpha: float) -> ConstantsTable:
    """Every closed-form scalar for dimension ``n`` and order ``alpha``.

    ``c3`` is the coefficient of (1-|x|^2)^{1-alpha} obtained by dividing the
    ball Laplacian lower bound by the weight. Averaging the chord bound over
    directions carries the factor 1/2 onto both terms, so c3 = c2 * |S^{n-1}| / 2
    (which reduces to c2 on the interval).
    """
    _check_alpha(alpha)
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n!r}")
    c2 = c2_const(alpha)
    area = sphere_area(n)
    return ConstantsTable(
        alpha=alpha,
        dim=n,
        kappa=kappa(n, alpha),
        c1=c1_const(alpha),
        c2=c2,
        c3=0.5 * c2 * area,
        sobolev_exp=sobolev_exponent(n, alpha),
        sphere_moment=sphere_moment(n, alpha),
        sphere_area=area,
    )
