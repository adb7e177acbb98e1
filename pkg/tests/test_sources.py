import csv
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from maxdg.sources import (
    CavityParams, RoughCurrentParams, SineSeriesProfile, cavity_fields, cavity_surface_current,
    fourier_sobolev_norm, lowreg_surface_current, polynomial_fields, polynomial_surface_current,
    polynomial_volume_current, sample_trig_coeffs,
)

x1, x2, t = sp.symbols("x1 x2 t", real=True)


def _te_residuals(H3, E1, E2, J1=0, J2=0):
    """mu = eps = 1: dt H3 + d1 E2 - d2 E1, dt E1 - d2 H3 + J1, dt E2 + d1 H3 + J2."""
    return (sp.diff(H3, t) + sp.diff(E2, x1) - sp.diff(E1, x2),
            sp.diff(E1, t) - sp.diff(H3, x2) + J1,
            sp.diff(E2, t) + sp.diff(H3, x1) + J2)


def _cavity_symbolic(kk, m=1, A2=1):
    k1 = sp.pi * kk / 2
    k2 = sp.pi * m
    w = sp.sqrt(k1**2 + k2**2)
    A1 = -A2 * k2 / k1
    H3 = (k1 * A2 - k2 * A1) / w * sp.cos(k2 * x2) * sp.cos(k1 * (x1 + 1)) * sp.sin(w * t)
    E1 = -A1 * sp.sin(k2 * x2) * sp.cos(k1 * (x1 + 1)) * sp.cos(w * t)
    E2 = -A2 * sp.cos(k2 * x2) * sp.sin(k1 * (x1 + 1)) * sp.cos(w * t)
    return H3, E1, E2


def _random_points(rng, n, side):
    lo, hi = (-1.0, 0.0) if side == "minus" else (0.0, 1.0)
    return rng.uniform(lo, hi, n), rng.uniform(0, 1, n), rng.uniform(0, 2, n)


# -- cavity ---------------------------------------------------------------------------

@pytest.mark.parametrize("kk", [2, 4])
def test_cavity_symbolic_residual(kk):
    for r in _te_residuals(*_cavity_symbolic(kk)):
        assert sp.simplify(r) == 0


@pytest.mark.parametrize("side, kk", [("minus", 2), ("plus", 4)])
def test_cavity_matches_symbolic(side, kk):
    p = CavityParams()
    rng = np.random.default_rng(0)
    X, Y, T = _random_points(rng, 1000, side)
    fns = [sp.lambdify((x1, x2, t), f, "numpy") for f in _cavity_symbolic(kk)]
    for i, f in enumerate(fns):
        got = np.array([cavity_fields(p, a, b, c)[i] for a, b, c in zip(X, Y, T)])
        np.testing.assert_allclose(got, f(X, Y, T), atol=1e-12)


def test_cavity_numeric_residual():
    # centred differences of the implementation itself
    p = CavityParams()
    rng = np.random.default_rng(1)
    d = 1e-5
    for side in ("minus", "plus"):
        X, Y, T = _random_points(rng, 200, side)
        X = np.clip(X, -1 + 2 * d, 1 - 2 * d) * (1 - 1e-3)
        f = lambda a, b, c: np.array(cavity_fields(p, a, b, c, side=side))  # noqa: E731
        dt = (f(X, Y, T + d) - f(X, Y, T - d)) / (2 * d)
        d1 = (f(X + d, Y, T) - f(X - d, Y, T)) / (2 * d)
        d2 = (f(X, Y + d, T) - f(X, Y - d, T)) / (2 * d)
        assert np.abs(dt[0] + d1[2] - d2[1]).max() < 1e-7
        assert np.abs(dt[1] - d2[0]).max() < 1e-7
        assert np.abs(dt[2] + d1[0]).max() < 1e-7


def test_cavity_constants():
    p = CavityParams()
    assert p.omega_minus == pytest.approx(math.pi * math.sqrt(2), rel=1e-14)
    assert p.omega_minus == pytest.approx(4.442883, abs=1e-6)
    assert p.omega_plus == pytest.approx(math.pi * math.sqrt(5), rel=1e-14)
    assert p.omega_plus == pytest.approx(7.024815, abs=1e-6)
    assert abs(math.sin(p.k1_minus * 1)) < 1e-12 and abs(math.sin(p.k1_plus * 2)) < 1e-12


def test_cavity_traces():
    p = CavityParams()
    s = np.linspace(0, 1, 41)
    for tt in (0.0, 0.3, 1.7):
        assert np.abs(cavity_fields(p, -1.0 + 0 * s, s, tt)[2]).max() < 1e-12
        assert np.abs(cavity_fields(p, 1.0 + 0 * s, s, tt)[2]).max() < 1e-12
        xs = np.linspace(-1, 1, 41)
        for y in (0.0, 1.0):
            assert np.abs(cavity_fields(p, xs, y + 0 * xs, tt)[1]).max() < 1e-12
        for side in ("minus", "plus"):
            assert np.abs(cavity_fields(p, 0 * s, s, tt, side=side)[2]).max() < 1e-12
    assert not np.any(cavity_fields(p, np.linspace(-1, 1, 9), np.linspace(0, 1, 9), 0.0)[0])
    with pytest.raises(ValueError):
        cavity_fields(p, 1.5, 0.5, 0.0)


def test_cavity_surface_current():
    p = CavityParams()
    J = cavity_surface_current(p)
    s = np.linspace(0, 1, 11)
    assert not np.any(J(0.0, s))
    # independent evaluation at x2 = 0
    k1m, k1p, k2 = math.pi, 2 * math.pi, math.pi
    wm, wp = math.hypot(k1m, k2), math.hypot(k1p, k2)
    A1m, A1p = -k2 / k1m, -k2 / k1p
    for tt in (0.1, 0.37, 0.9):
        ref = (k1p - k2 * A1p) / wp * math.cos(2 * math.pi) * math.sin(wp * tt) \
            - (k1m - k2 * A1m) / wm * math.cos(math.pi) * math.sin(wm * tt)
        assert float(J(tt, 0.0)) == pytest.approx(ref, rel=1e-13)
        jump = cavity_fields(p, 0 * s, s, tt, side="plus")[0] - cavity_fields(p, 0 * s, s, tt, side="minus")[0]
        np.testing.assert_allclose(J(tt, s), jump, atol=1e-13)
    Y, T = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101))
    assert np.abs(J(T, Y)).max() > 0.1


# -- polynomial -------------------------------------------------------------------------

def _poly_symbolic(minus):
    q = 2 + x1 if minus else -1 + x1
    r = x2 * (1 - x2)
    p = sp.sin(2 * sp.pi * t)
    H3 = p * q * sp.diff(r, x2)
    E1 = sp.diff(p, t) * q * r
    return H3, E1, sp.Integer(0)


@pytest.mark.parametrize("side", ["minus", "plus"])
def test_polynomial_matches_symbolic(side):
    H3, E1, E2 = _poly_symbolic(side == "minus")
    # volume current that makes the symbolic fields an exact solution
    J1 = -(sp.diff(E1, t) - sp.diff(H3, x2))
    J2 = -(sp.diff(E2, t) + sp.diff(H3, x1))
    assert sp.simplify(_te_residuals(H3, E1, E2)[0]) == 0
    rng = np.random.default_rng(2)
    X, Y, T = _random_points(rng, 1000, side)
    for got, ref in zip(polynomial_fields(X, Y, T) + polynomial_volume_current(X, Y, T), (H3, E1, E2, J1, J2)):
        f = sp.lambdify((x1, x2, t), ref, "numpy")
        np.testing.assert_allclose(np.broadcast_to(got, X.shape), np.broadcast_to(f(X, Y, T), X.shape), atol=1e-11)


def test_polynomial_numeric_residual():
    rng = np.random.default_rng(3)
    d = 1e-5
    for side in ("minus", "plus"):
        X, Y, T = _random_points(rng, 1000, side)
        X = np.clip(X, -0.99, 0.99) * 0.99 + (0.005 if side == "plus" else -0.005)
        f = lambda a, b, c: np.array(np.broadcast_arrays(*polynomial_fields(a, b, c)))  # noqa: E731
        dt = (f(X, Y, T + d) - f(X, Y, T - d)) / (2 * d)
        d1 = (f(X + d, Y, T) - f(X - d, Y, T)) / (2 * d)
        d2 = (f(X, Y + d, T) - f(X, Y - d, T)) / (2 * d)
        J1, J2 = np.broadcast_arrays(*polynomial_volume_current(X, Y, T))
        assert np.abs(dt[0] + d1[2] - d2[1]).max() < 1e-6
        assert np.abs(dt[1] - d2[0] + J1).max() < 1e-5
        assert np.abs(dt[2] + d1[0] + J2).max() < 1e-6


def test_polynomial_examples():
    s = np.linspace(0, 1, 11)
    for xx in (-0.5, 0.5):
        H3, E1, _ = polynomial_fields(xx + 0 * s, s, 0.0)
        assert not np.any(H3)
        q = 2 + xx if xx < 0 else -1 + xx
        np.testing.assert_allclose(E1, 2 * math.pi * q * s * (1 - s), atol=1e-14)
    J = polynomial_surface_current()
    assert float(J(0.25, 0.25)) == pytest.approx(-1.5, abs=1e-14)
    for tt in (0.1, 0.6):
        jump = polynomial_fields(0 * s, s, tt, side="plus")[0] - polynomial_fields(0 * s, s, tt, side="minus")[0]
        np.testing.assert_allclose(J(tt, s), jump, atol=1e-14)


# -- rough current ------------------------------------------------------------------------

def _params(r, alpha=0.0, M=8):
    return RoughCurrentParams(alpha, M, 0, np.asarray(r, dtype=float))


def test_degenerate_draw():
    p = _params([0, 0, 0])
    assert fourier_sobolev_norm(p, 0.0) == 0.0
    assert not np.any(p.evaluate(np.linspace(-3, 3, 7)))
    with pytest.raises(ValueError, match="degenerate"):
        lowreg_surface_current(p)


def test_single_mode():
    p = _params([1, 0, 0])
    s = np.linspace(-np.pi, np.pi, 33)
    np.testing.assert_allclose(p.evaluate(s), -2 * 2**-0.25 * np.sin(s), atol=1e-14)
    assert p.norm0**2 == pytest.approx(2 * math.pi * 2 * 2**-0.5, rel=1e-14)


def test_sampling_contract():
    a = sample_trig_coeffs(1.0, 256, 42)
    b = sample_trig_coeffs(1.0, 256, 42)
    np.testing.assert_array_equal(a.r, b.r)
    assert len(a.r) == 127 and np.all(np.abs(a.r) <= 1)
    np.testing.assert_array_equal(sample_trig_coeffs(1.0, 1024, 42).r[:127], a.r)
    for bad in (2, 6, 100):
        with pytest.raises(ValueError):
            sample_trig_coeffs(0.0, bad, 0)
    with pytest.raises(ValueError):
        sample_trig_coeffs(-0.5, 64, 0)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([0.0, 0.5, 1.0, 1.5, 4.0]), st.sampled_from([8, 64, 512]), st.integers(0, 2**63))
def test_sine_series_properties(alpha, M, seed):
    p = sample_trig_coeffs(alpha, M, seed)
    s = np.random.default_rng(seed % 1000).uniform(-np.pi, np.pi, 50)
    vals = p.evaluate(s)
    assert np.isrealobj(vals)
    np.testing.assert_allclose(p.evaluate(-s), -vals, atol=1e-10)
    assert np.abs(p.evaluate(np.array([-np.pi, 0.0, np.pi]))).max() < 1e-10
    # unit L2 amplitude after normalization (trapezoid rule is exact for trig polynomials)
    grid = np.linspace(-np.pi, np.pi, 4 * M, endpoint=False)
    g = p.evaluate(grid) / p.norm0
    assert np.sum(g**2) * (2 * np.pi / len(grid)) == pytest.approx(1.0, abs=1e-12)
    j, nu = p.fourier_coefficients()
    np.testing.assert_allclose(nu[j < 0][::-1], np.conj(nu[j > 0]), atol=0)


def test_literal_convention_is_complex():
    p = sample_trig_coeffs(1.0, 64, 0, convention="literal")
    assert np.abs(p.evaluate(np.linspace(-3, 3, 20)).imag).max() > 1e-3
    with pytest.raises(ValueError):
        SineSeriesProfile(p)
    with pytest.raises(ValueError):
        sample_trig_coeffs(1.0, 64, 0, convention="other")


@pytest.mark.parametrize("alpha", [0.0, 1.0, 4.0])
def test_sobolev_norm_trends(alpha):
    Ms = [2**p for p in range(10, 17)]
    at = [fourier_sobolev_norm(sample_trig_coeffs(alpha, M, 7), alpha) for M in Ms]
    above = [fourier_sobolev_norm(sample_trig_coeffs(alpha, M, 7), alpha + 1) for M in Ms]
    for a, b, M in zip(at, at[1:], Ms):
        assert b >= a
        if M >= 2**12:
            assert b / a <= 1.1
    assert above[-1] / above[0] >= 2
    assert fourier_sobolev_norm(_params([0, 0, 0]), alpha) == 0


def test_legendre_moments_exact():
    p = sample_trig_coeffs(0.5, 256, 3)
    prof = SineSeriesProfile(p)
    lo, hi = np.array([0.0, 0.3, 0.9]), np.array([0.1, 0.35, 1.0])
    got = prof.legendre_moments(lo, hi, 3)
    q, w = np.polynomial.legendre.leggauss(400)
    for f in range(3):
        y = lo[f] + 0.5 * (q + 1) * (hi[f] - lo[f])
        for r in range(4):
            ref = 0.5 * (hi[f] - lo[f]) * np.sum(w * prof(y) * np.polynomial.legendre.Legendre.basis(r)(q))
            assert got[f, r] == pytest.approx(ref, abs=1e-13)


def test_lowreg_current():
    p = sample_trig_coeffs(1.0, 128, 5)
    J = lowreg_surface_current(p)
    s = np.linspace(0, 1, 21)
    assert not np.any(J(0.0, s))
    assert abs(J(0.3, 0.0)) < 1e-10 and abs(J(0.3, 1.0)) < 1e-10
    np.testing.assert_allclose(J(0.5, s), p.evaluate(2 * np.pi * s - np.pi) / p.norm0, atol=1e-14)


def test_coefficient_csv(tmp_path):
    p = sample_trig_coeffs(1.5, 16, 11)
    path = tmp_path / "coeffs.csv"
    p.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["mode", "r", "amplitude", "sine_coefficient"]
    assert len(rows) == 1 + 7
    np.testing.assert_array_equal([float(r[1]) for r in rows[1:]], p.r)
