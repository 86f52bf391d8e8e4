"""Numerical tools for the regional fractional Laplacian on intervals, balls and half-spaces."""
from .specfun import ConstantsTable, DomainError, constants, kappa
from .domains import Ball, HalfSpace, Interval, delta
from .trialfns import TrialFunction, standard_suite

__all__ = ["Ball", "ConstantsTable", "DomainError", "HalfSpace", "Interval", "TrialFunction",
           "constants", "delta", "kappa", "standard_suite"]
__version__ = "0.1.0"
