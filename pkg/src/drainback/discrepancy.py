"""Empirical correction between the modeled and the true liquid level.

The correction is a polynomial in the normalized level u = h / h_max written
in the Bernstein basis,

    delta_a(h) = sum_nu a_nu * C(n, nu) * u**nu * (1 - u)**(n - nu),

so the coefficients are interpretable: a_0 is the correction at an empty
tank, a_n at a full one, and every value of delta is a convex combination of
the coefficients.  The correction is a function of the predicted level, not
of time.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiscrepancyCoefficients",
    "bernstein_basis",
    "evaluate_discrepancy",
    "corrected_level",
]


@dataclass(frozen=True)
class DiscrepancyCoefficients:
    """Coefficients ``a`` of a degree ``len(a) - 1`` Bernstein expansion, in cm."""

    a: tuple

    def __post_init__(self):
        coeffs = tuple(float(v) for v in self.a)
        if len(coeffs) == 0:
            raise ValueError("at least one coefficient is required")
        if not all(math.isfinite(v) for v in coeffs):
            raise ValueError(f"coefficients must be finite, got {coeffs}")
        object.__setattr__(self, "a", coeffs)

    @property
    def degree(self):
        return len(self.a) - 1

    @classmethod
    def zeros(cls, degree):
        return cls((0.0,) * (degree + 1))


def bernstein_basis(n, nu, u):
    """Bernstein basis polynomial C(n, nu) * u**nu * (1 - u)**(n - nu).

    ``u`` may be a scalar or an array with entries in [0, 1];
    ``0 <= nu <= n`` is required.
    """
    n = int(n)
    nu = int(nu)
    if n < 0 or nu < 0 or nu > n:
        raise ValueError(f"need 0 <= nu <= n, got n={n}, nu={nu}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0) or np.any(u_arr > 1.0):
        raise ValueError("u must lie in [0, 1]")
    out = math.comb(n, nu) * u_arr**nu * (1.0 - u_arr) ** (n - nu)
    if np.ndim(u) == 0:
        return float(out)
    return out


def evaluate_discrepancy(coeffs, h, h_max):
    """Level correction delta_a(h) in cm for ``h`` in [0, h_max].

    Accepts scalar or array ``h``.
    """
    if not h_max > 0:
        raise ValueError(f"h_max must be positive, got {h_max}")
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0.0) or np.any(h_arr > h_max):
        raise ValueError(f"level outside [0, {h_max}]")
    u = h_arr / h_max
    n = coeffs.degree
    out = np.zeros_like(u)
    for nu, a_nu in enumerate(coeffs.a):
        out = out + a_nu * math.comb(n, nu) * u**nu * (1.0 - u) ** (n - nu)
    if np.ndim(h) == 0:
        return float(out)
    return out


def corrected_level(model_level, coeffs, h_max):
    """Model level plus its discrepancy, the mean of an observed level."""
    delta = evaluate_discrepancy(coeffs, model_level, h_max)
    return model_level + delta
