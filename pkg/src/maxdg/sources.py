"""Exact solutions and source data for the three experiments.

* cavity modes on each subdomain with a surface current equal to the H3 jump,
* a seeded random sine series of tunable Sobolev regularity used as a rough
  interface current,
* a polynomial-in-space solution isolating the time discretization error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import spherical_jn

__all__ = [
    "CavityParams",
    "PolynomialSolution",
    "RoughCurrentParams",
    "SineSeriesProfile",
    "SurfaceCurrent",
    "cavity_fields",
    "cavity_surface_current",
    "fourier_sobolev_norm",
    "lowreg_surface_current",
    "polynomial_fields",
    "polynomial_surface_current",
    "polynomial_volume_current",
    "sample_trig_coeffs",
]

_TOL = 1e-12


@dataclass(frozen=True)
class SurfaceCurrent:
    """Interface current ``J(t, x2) = temporal(t) * spatial(x2)``.

    Non-separable currents pass ``func`` instead; then ``spatial`` and
    ``temporal`` are ``None`` and the lift is recomputed every time level.
    """

    spatial: Callable | None = None
    temporal: Callable | None = None
    func: Callable | None = None

    @property
    def separable(self) -> bool:
        return self.func is None

    def __call__(self, t: float, x2):
        if self.func is not None:
            return self.func(t, x2)
        return self.temporal(t) * self.spatial(x2)

    def at(self, t: float) -> Callable:
        """Spatial profile frozen at time ``t``."""
        return lambda x2: self(t, x2)


def _check_in_domain(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x1 < -1 - _TOL) or np.any(x1 > 1 + _TOL) or np.any(x2 < -_TOL) or np.any(x2 > 1 + _TOL):
        raise ValueError("point outside the closed domain [-1, 1] x [0, 1]")
    return x1, x2


def _side_mask(x1, side):
    if side is None:
        return x1 < 0
    if side not in ("minus", "plus"):
        raise ValueError("side must be 'minus', 'plus' or None")
    return np.full(np.shape(x1), side == "minus")


# -- cavity -----------------------------------------------------------------

@dataclass(frozen=True)
class CavityParams:
    k_minus: int = 2
    k_plus: int = 4
    m: int = 1
    A2: float = 1.0

    def __post_init__(self):
        if min(self.k_minus, self.k_plus, self.m) < 1:
            raise ValueError("wave indices must be positive integers")

    @property
    def k1_minus(self) -> float:
        return math.pi * self.k_minus / 2

    @property
    def k1_plus(self) -> float:
        return math.pi * self.k_plus / 2

    @property
    def k2(self) -> float:
        return math.pi * self.m

    @property
    def omega_minus(self) -> float:
        return math.hypot(self.k1_minus, self.k2)

    @property
    def omega_plus(self) -> float:
        return math.hypot(self.k1_plus, self.k2)

    @property
    def A1_minus(self) -> float:
        return -self.A2 * self.k2 / self.k1_minus

    @property
    def A1_plus(self) -> float:
        return -self.A2 * self.k2 / self.k1_plus

    def side(self, minus: bool):
        if minus:
            return self.k1_minus, self.omega_minus, self.A1_minus
        return self.k1_plus, self.omega_plus, self.A1_plus

    def h_amplitude(self, minus: bool) -> float:
        k1, w, a1 = self.side(minus)
        return (k1 * self.A2 - self.k2 * a1) / w


def cavity_fields(params: CavityParams, x1, x2, t, side: str | None = None):
    """(H3, E1, E2) of the cavity mode; ``side`` forces a one-sided evaluation.

    E1 carries ``cos(k1 (x1 + 1))``; with that factor the three TE equations
    hold exactly for the amplitude relation ``A1 = -A2 k2 / k1``.
    """
    x1, x2 = _check_in_domain(x1, x2)
    minus = _side_mask(x1, side)
    out = []
    for m_side in (True, False):
        k1, w, a1 = params.side(m_side)
        a = params.h_amplitude(m_side)
        s = k1 * (x1 + 1.0)
        out.append((
            a * np.cos(params.k2 * x2) * np.cos(s) * np.sin(w * t),
            -a1 * np.sin(params.k2 * x2) * np.cos(s) * np.cos(w * t),
            -params.A2 * np.cos(params.k2 * x2) * np.sin(s) * np.cos(w * t),
        ))
    return tuple(np.where(minus, mv, pv) for mv, pv in zip(*out))


def cavity_surface_current(params: CavityParams) -> SurfaceCurrent:
    """``J(t, x2) = H3(0+, x2, t) - H3(0-, x2, t)``; volume currents vanish."""
    bp = params.h_amplitude(False) * math.cos(params.k1_plus)
    bm = params.h_amplitude(True) * math.cos(params.k1_minus)
    wp, wm = params.omega_plus, params.omega_minus
    k2 = params.k2
    return SurfaceCurrent(
        spatial=lambda x2: np.cos(k2 * np.asarray(x2, dtype=float)),
        temporal=lambda t: bp * np.sin(wp * t) - bm * np.sin(wm * t),
    )


# -- polynomial solution ------------------------------------------------------

def _q(x1, minus):
    return np.where(minus, 2.0 + x1, -1.0 + x1)


def _r(x2):
    return x2 * (1.0 - x2)


def _dr(x2):
    return 1.0 - 2.0 * x2


def _p(t):
    return np.sin(2 * np.pi * t)


def _dp(t):
    return 2 * np.pi * np.cos(2 * np.pi * t)


def _ddp(t):
    return -4 * np.pi**2 * np.sin(2 * np.pi * t)


def polynomial_fields(x1, x2, t, side: str | None = None):
    """H3 = p q r', E1 = p' q r, E2 = 0 with q = 2 + x1 (minus) / -1 + x1 (plus)."""
    x1, x2 = _check_in_domain(x1, x2)
    q = _q(x1, _side_mask(x1, side))
    return _p(t) * q * _dr(x2), _dp(t) * q * _r(x2), np.zeros(np.broadcast(x1, x2, t).shape)


def polynomial_volume_current(x1, x2, t, side: str | None = None):
    """(J1, J2) making the polynomial fields an exact solution.

    J1 = p q r'' - p'' q r (the second term balances d/dt E1 = p'' q r),
    J2 = -p q' r'.
    """
    x1, x2 = _check_in_domain(x1, x2)
    q = _q(x1, _side_mask(x1, side))
    j1 = _p(t) * q * (-2.0) - _ddp(t) * q * _r(x2)
    j2 = -_p(t) * np.ones_like(q) * _dr(x2)
    shape = np.broadcast(x1, x2, t).shape
    return np.broadcast_to(j1, shape), np.broadcast_to(j2, shape)


def polynomial_surface_current() -> SurfaceCurrent:
    """J = p(t) (q+(0) - q-(0)) r'(x2) = -3 p(t) r'(x2)."""
    return SurfaceCurrent(spatial=lambda x2: -3.0 * _dr(np.asarray(x2, dtype=float)), temporal=_p)


@dataclass(frozen=True)
class PolynomialSolution:
    """Bundle of the polynomial experiment's data (all definitions fixed)."""

    def fields(self, x1, x2, t, side=None):
        return polynomial_fields(x1, x2, t, side)

    def volume_current(self, x1, x2, t, side=None):
        return polynomial_volume_current(x1, x2, t, side)

    def surface_current(self) -> SurfaceCurrent:
        return polynomial_surface_current()


# -- rough Fourier current ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class RoughCurrentParams:
    alpha: float
    M: int
    seed: int
    r: np.ndarray = field(repr=False)  # r_j, j = 1..M/2-1
    convention: str = "symmetric"

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.M // 2)

    @property
    def amplitudes(self) -> np.ndarray:
        """|nu_j| for j = 1..M/2-1."""
        return np.abs(self.r) * (1.0 + self.modes.astype(float) ** 2) ** (-0.5 * (0.5 + self.alpha))

    @property
    def sine_coefficients(self) -> np.ndarray:
        """b_j in f(x) = sum_j b_j sin(j x) (symmetric convention)."""
        return -2.0 * self.r * (1.0 + self.modes.astype(float) ** 2) ** (-0.5 * (0.5 + self.alpha))

    def fourier_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """All nonzero-index coefficients ``(j, nu_j)`` including negative j."""
        j = self.modes
        nu = 1j * self.r * (1.0 + j.astype(float) ** 2) ** (-0.5 * (0.5 + self.alpha))
        if self.convention == "symmetric":
            neg = np.conj(nu)
        else:
            # nu_{-j'} = -nu_{M/2 - j'}
            neg = -nu[::-1]
        return np.concatenate([-j[::-1], j]), np.concatenate([neg[::-1], nu])

    @property
    def norm0(self) -> float:
        return fourier_sobolev_norm(self, 0.0)

    def evaluate(self, x) -> np.ndarray:
        """f_alpha(x); real for the symmetric convention, complex for the literal one."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        if self.convention == "symmetric":
            b = self.sine_coefficients
            j = self.modes.astype(float)
            out = np.empty(flat.shape)
            for s in range(0, len(flat), 512):
                out[s:s + 512] = np.sin(np.outer(flat[s:s + 512], j)) @ b
            return out.reshape(x.shape)
        j, nu = self.fourier_coefficients()
        out = np.empty(flat.shape, dtype=complex)
        for s in range(0, len(flat), 512):
            out[s:s + 512] = np.exp(1j * np.outer(flat[s:s + 512], j)) @ nu
        return out.reshape(x.shape)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "r", "amplitude", "sine_coefficient"])
            for j, r, a, b in zip(self.modes, self.r, self.amplitudes, self.sine_coefficients):
                w.writerow([int(j), f"{r:.17e}", f"{a:.17e}", f"{b:.17e}"])


def _check_modes(M: int) -> None:
    if M < 4 or M & (M - 1):
        raise ValueError(f"M must be a power of two >= 4, got {M}")


def sample_trig_coeffs(alpha: float, M: int, seed: int, convention: str = "symmetric") -> RoughCurrentParams:
    """Draw r_j ~ U[-1, 1], j = 1..M/2-1, from a PCG64 stream seeded with ``seed``.

    The stream is consumed in order, so the draws for M are a prefix of those for 2M.
    """
    _check_modes(M)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if convention not in ("symmetric", "literal"):
        raise ValueError("convention must be 'symmetric' or 'literal'")
    r = np.random.Generator(np.random.PCG64(seed)).uniform(-1.0, 1.0, M // 2 - 1)
    return RoughCurrentParams(float(alpha), int(M), int(seed), r, convention)


def fourier_sobolev_norm(params: RoughCurrentParams, eta: float) -> float:
    """sqrt(2 pi sum_j (1 + j^2)^eta |nu_j|^2) over all nonzero modes."""
    j, nu = params.fourier_coefficients()
    return math.sqrt(2 * math.pi * float(np.sum((1.0 + j.astype(float) ** 2) ** eta * np.abs(nu) ** 2)))


class SineSeriesProfile:
    """x2 -> f_alpha(2 pi x2 - pi) / ||f_alpha||_0 with exact face moments."""

    def __init__(self, params: RoughCurrentParams):
        if params.convention != "symmetric":
            raise ValueError("the literal coefficient rule is not real-valued; use convention='symmetric'")
        norm = params.norm0
        if norm == 0.0:
            raise ValueError("degenerate rough current: ||f_alpha||_0 = 0")
        self.params = params
        self.scale = 1.0 / norm
        self._b = params.sine_coefficients * self.scale
        self._j = params.modes.astype(float)

    def __call__(self, x2):
        return self.scale * self.params.evaluate(2 * np.pi * np.asarray(x2, dtype=float) - np.pi)

    def legendre_moments(self, lo, hi, degree: int) -> np.ndarray:
        """``out[f, r] = int_{lo_f}^{hi_f} g(x2) P_r(s) dx2`` with ``s`` the face coordinate.

        Uses int_{-1}^{1} e^{i kappa s} P_r(s) ds = 2 i^r j_r(kappa) per mode.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        out = np.zeros((len(lo), degree + 1))
        for s in range(0, len(self._j), 2048):
            j = self._j[s:s + 2048]
            b = self._b[s:s + 2048]
            kappa = 2 * np.pi * np.outer(half, j)
            phase = np.exp(1j * np.outer(2 * np.pi * mid - np.pi, j))
            for r in range(degree + 1):
                val = phase * (2.0 * (1j**r) * spherical_jn(r, kappa))
                out[:, r] += (val.imag @ b) * half
        return out


def lowreg_surface_current(params: RoughCurrentParams) -> SurfaceCurrent:
    """J(t, x2) = f_alpha(2 pi x2 - pi) / ||f_alpha||_0 * sin(pi t)^2."""
    return SurfaceCurrent(spatial=SineSeriesProfile(params), temporal=lambda t: math.sin(math.pi * t) ** 2)
