"""Bernstein basis and level-correction properties."""

import math

import numpy as np
import pytest

from drainback.discrepancy import (
    DiscrepancyCoefficients,
    bernstein_basis,
    corrected_level,
    evaluate_discrepancy,
)


class TestBernsteinBasis:
    def test_partition_of_unity(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            n = rng.integers(0, 6)
            u = rng.uniform(0.0, 1.0, size=25)
            total = sum(bernstein_basis(n, nu, u) for nu in range(n + 1))
            assert np.all(np.abs(total - 1.0) <= 1e-12)

    def test_endpoint_interpolation(self):
        for n in range(6):
            for nu in range(n + 1):
                assert bernstein_basis(n, nu, 0.0) == (1.0 if nu == 0 else 0.0)
                assert bernstein_basis(n, nu, 1.0) == (1.0 if nu == n else 0.0)

    def test_nonnegative_and_bounded(self):
        rng = np.random.default_rng(42)
        u = rng.uniform(0.0, 1.0, size=500)
        for n in range(6):
            for nu in range(n + 1):
                vals = bernstein_basis(n, nu, u)
                assert np.all(vals >= 0.0)
                assert np.all(vals <= 1.0 + 1e-12)

    def test_known_quadratic_values(self):
        # B_{1,2}(u) = 2u(1-u) peaks at 0.5 with value 0.5
        assert bernstein_basis(2, 1, 0.5) == pytest.approx(0.5, rel=1e-15)
        assert bernstein_basis(2, 0, 0.25) == pytest.approx(0.5625, rel=1e-15)
        assert bernstein_basis(3, 2, 0.5) == pytest.approx(0.375, rel=1e-15)

    def test_scalar_and_array_returns(self):
        assert isinstance(bernstein_basis(2, 1, 0.3), float)
        out = bernstein_basis(2, 1, np.array([0.3, 0.7]))
        assert out.shape == (2,)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            bernstein_basis(2, 3, 0.5)
        with pytest.raises(ValueError):
            bernstein_basis(2, -1, 0.5)
        with pytest.raises(ValueError):
            bernstein_basis(-1, 0, 0.5)
        with pytest.raises(ValueError):
            bernstein_basis(2, 1, 1.5)
        with pytest.raises(ValueError):
            bernstein_basis(2, 1, -0.1)


class TestDiscrepancy:
    def test_linearity_in_coefficients(self):
        rng = np.random.default_rng(43)
        h = rng.uniform(0.0, 14.0, size=50)
        for _ in range(20):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            lam = rng.normal()
            combo = DiscrepancyCoefficients(tuple(a + lam * b))
            parts = evaluate_discrepancy(
                DiscrepancyCoefficients(tuple(a)), h, 14.0
            ) + lam * evaluate_discrepancy(DiscrepancyCoefficients(tuple(b)), h, 14.0)
            assert np.allclose(evaluate_discrepancy(combo, h, 14.0), parts, atol=1e-12)

    def test_convex_combination_bound(self):
        # Every value lies between the smallest and largest coefficient.
        rng = np.random.default_rng(44)
        for _ in range(50):
            a = rng.normal(size=rng.integers(1, 7))
            coeffs = DiscrepancyCoefficients(tuple(a))
            h = rng.uniform(0.0, 9.0, size=40)
            vals = evaluate_discrepancy(coeffs, h, 9.0)
            assert np.all(vals >= a.min() - 1e-12)
            assert np.all(vals <= a.max() + 1e-12)

    def test_endpoints_match_first_and_last_coefficients(self):
        coeffs = DiscrepancyCoefficients((0.7, -0.2, 0.4))
        assert evaluate_discrepancy(coeffs, 0.0, 14.0) == pytest.approx(0.7, abs=1e-15)
        assert evaluate_discrepancy(coeffs, 14.0, 14.0) == pytest.approx(0.4, abs=1e-15)

    def test_matches_basis_expansion(self):
        rng = np.random.default_rng(45)
        a = rng.normal(size=4)
        coeffs = DiscrepancyCoefficients(tuple(a))
        h = rng.uniform(0.0, 5.0, size=30)
        expect = sum(
            a_nu * bernstein_basis(3, nu, h / 5.0) for nu, a_nu in enumerate(a)
        )
        assert np.allclose(evaluate_discrepancy(coeffs, h, 5.0), expect, atol=1e-13)

    def test_corrected_level(self):
        coeffs = DiscrepancyCoefficients((0.5, 0.0, 0.0))
        level = np.array([0.0, 7.0, 14.0])
        out = corrected_level(level, coeffs, 14.0)
        expect = level + 0.5 * (1.0 - level / 14.0) ** 2
        assert np.allclose(out, expect, atol=1e-13)

    def test_domain_errors(self):
        coeffs = DiscrepancyCoefficients((0.1, 0.2))
        with pytest.raises(ValueError):
            evaluate_discrepancy(coeffs, -0.5, 14.0)
        with pytest.raises(ValueError):
            evaluate_discrepancy(coeffs, 15.0, 14.0)
        with pytest.raises(ValueError):
            evaluate_discrepancy(coeffs, 1.0, 0.0)

    def test_coefficient_validation(self):
        with pytest.raises(ValueError):
            DiscrepancyCoefficients(())
        with pytest.raises(ValueError):
            DiscrepancyCoefficients((0.1, math.nan))
        assert DiscrepancyCoefficients.zeros(2).a == (0.0, 0.0, 0.0)
        assert DiscrepancyCoefficients((1, 2, 3)).degree == 2
