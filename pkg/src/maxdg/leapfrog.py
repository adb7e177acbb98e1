"""Leapfrog time stepping for the semi-discrete TE system.

One step::

    H^{n+1/2} = H^n - tau/2 C_E E^n
    E^{n+1}   = E^n + tau C_H H^{n+1/2} - tau/2 (J^n + J^{n+1})
    H^{n+1}   = H^{n+1/2} - tau/2 C_E E^{n+1}

where ``J`` is the projected volume current plus the interface lift.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .basis import MaterialParams, TEState, l2_project, weighted_norm
from .operators import QUADRATURE, MaxwellOperators
from .sources import SurfaceCurrent

__all__ = [
    "ABORT_FACTOR",
    "InstabilityError",
    "LeapfrogConfig",
    "SourceTerms",
    "cfl_timestep",
    "integrate",
    "leapfrog_step",
    "projected_volume_current",
    "verify_one_step_identity",
]

log = logging.getLogger(__name__)

ABORT_FACTOR = 1e8
_NORM_CHECK_EVERY = 8


class InstabilityError(FloatingPointError):
    """Raised when the discrete state blows up; carries the offending step and norm."""

    def __init__(self, step: int, t: float, norm: float):
        super().__init__(f"instability at step {step} (t={t:.6g}): state norm {norm:.3e}")
        self.step = step
        self.t = t
        self.norm = norm


def cfl_timestep(theta: float, norm_estimate: float) -> float:
    """Largest step ``2 theta / norm_estimate`` allowed by the CFL condition."""
    if norm_estimate <= 0:
        raise ValueError("norm_estimate must be positive")
    return 2.0 * theta / norm_estimate


VolumeCurrent = Callable[[float], tuple[np.ndarray, np.ndarray]]


def projected_volume_current(space, materials: MaterialParams, J: Callable) -> VolumeCurrent:
    """``t -> Pi(eps^{-1} J(., t))`` as coefficient vectors ``(J1h, J2h)``.

    ``J(x1, x2, t)`` returns the two components; quadrature points are interior
    to elements so the subdomain is always unambiguous.
    """
    inv_eps = np.repeat(1.0 / materials.eps(space.mesh), space.nloc)

    def at(t: float):
        comps = {}
        for i in (0, 1):
            comps[i] = inv_eps * l2_project(lambda x, y: J(x, y, t)[i], space)
        return comps[0], comps[1]

    return at


@dataclass
class LeapfrogConfig:
    tau: float
    T: float = 1.0
    theta: float = 0.9
    volume_current: VolumeCurrent | None = None
    surface_current: SurfaceCurrent | None = None
    lift_mode: str = QUADRATURE
    norm_estimate: float | None = None  # enables CFL enforcement when set

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.T >= 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if self.norm_estimate is not None and self.tau >= cfl_timestep(self.theta, self.norm_estimate):
            raise ValueError(
                f"tau={self.tau} violates the CFL bound {cfl_timestep(self.theta, self.norm_estimate):.6g}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.tau - 1e-9))


class SourceTerms:
    """Evaluates the E-equation source ``J_vol,h(t) + L(J_s(t))`` with caching.

    Separable surface currents are lifted once; the spatial lift is then scaled
    by the time factor.
    """

    def __init__(self, cfg: LeapfrogConfig, ops: MaxwellOperators, separable_cache: bool = True):
        self.cfg = cfg
        self.ops = ops
        self._spatial_lift = None
        js = cfg.surface_current
        if js is not None and js.separable and separable_cache:
            self._spatial_lift = ops.lift_interface(js.spatial, cfg.lift_mode)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def active(self) -> bool:
        return self.cfg.volume_current is not None or self.cfg.surface_current is not None

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        n = self.ops.space.ndof
        j1, j2 = np.zeros(n), np.zeros(n)
        if self.cfg.volume_current is not None:
            v1, v2 = self.cfg.volume_current(t)
            j1 += v1
            j2 += v2
        js = self.cfg.surface_current
        if js is not None:
            if self._spatial_lift is not None:
                s = js.temporal(t)
                j1 += s * self._spatial_lift[0]
                j2 += s * self._spatial_lift[1]
            else:
                l1, l2 = self.ops.lift_interface(js.at(t), self.cfg.lift_mode)
                j1 += l1
                j2 += l2
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[t] = (j1, j2)
        return j1, j2


def _step(state: TEState, tau: float, ops: MaxwellOperators, sources: SourceTerms | None,
          ce: np.ndarray | None = None) -> tuple[TEState, np.ndarray]:
    if ce is None:
        ce = ops.apply_CE(state.E1, state.E2)
    H = state.H3 - 0.5 * tau * ce
    c1, c2 = ops.apply_CH_hat(H)
    E1 = state.E1 + tau * c1
    E2 = state.E2 + tau * c2
    t_new = state.t + tau
    if sources is not None and sources.active:
        a1, a2 = sources(state.t)
        b1, b2 = sources(t_new)
        E1 -= 0.5 * tau * (a1 + b1)
        E2 -= 0.5 * tau * (a2 + b2)
    ce_new = ops.apply_CE(E1, E2)
    H -= 0.5 * tau * ce_new
    return TEState(H, E1, E2, t_new), ce_new


def leapfrog_step(state: TEState, cfg: LeapfrogConfig, ops: MaxwellOperators,
                  sources: SourceTerms | None = None, reverse: bool = False) -> TEState:
    """Advance one step (``reverse`` steps with ``-tau``)."""
    if sources is None and (cfg.volume_current is not None or cfg.surface_current is not None):
        sources = SourceTerms(cfg, ops)
    new, _ = _step(state, -cfg.tau if reverse else cfg.tau, ops, sources)
    if not new.is_finite():
        raise InstabilityError(-1, new.t, math.inf)
    return new


def verify_one_step_identity(state_n: TEState, state_np1: TEState, cfg: LeapfrogConfig,
                             ops: MaxwellOperators, sources: SourceTerms | None = None) -> float:
    """``||R_- u^{n+1} - R_+ u^n - tau/2 (j^{n+1} + j^n)||`` in the (mu, eps) norm.

    ``R_pm = I +- tau/2 C - tau^2/4 D`` with ``D`` applying ``C_H C_E`` to E only.
    """
    tau = state_np1.t - state_n.t
    if sources is None and (cfg.volume_current is not None or cfg.surface_current is not None):
        sources = SourceTerms(cfg, ops)

    def R(u: TEState, sign: float) -> TEState:
        cu = ops.apply(u)
        d1, d2 = ops.wave_operator(u.E1, u.E2)
        q = 0.25 * tau * tau
        return TEState(u.H3 + sign * 0.5 * tau * cu.H3,
                       u.E1 + sign * 0.5 * tau * cu.E1 - q * d1,
                       u.E2 + sign * 0.5 * tau * cu.E2 - q * d2, u.t)

    r = R(state_np1, -1.0) - R(state_n, 1.0)
    if sources is not None and sources.active:
        a1, a2 = sources(state_n.t)
        b1, b2 = sources(state_np1.t)
        # the E-source enters the evolution with a minus sign
        r.E1 += 0.5 * tau * (a1 + b1)
        r.E2 += 0.5 * tau * (a2 + b2)
    return weighted_norm(r, ops.materials, ops.space)


Observer = Callable[[TEState], float]


@dataclass
class IntegrationResult:
    state: TEState
    log: list[tuple[float, dict[str, float]]]
    steps: int
    diverged: bool = False
    max_norm_ratio: float = 1.0


def _sample_steps(times: Iterable[float] | None, tau: float, n_steps: int) -> set[int]:
    if times is None:
        return set(range(n_steps + 1))
    out = set()
    for t in times:
        q = t / tau
        n = round(q)
        if abs(q - n) > 1e-12 * max(1.0, abs(q)) and abs(n * tau - t) > 1e-12:
            raise ValueError(f"sample time {t} is not a multiple of tau={tau}")
        if n > n_steps:
            raise ValueError(f"sample time {t} lies beyond the final time")
        out.add(n)
    return out


def integrate(initial: TEState, cfg: LeapfrogConfig, ops: MaxwellOperators,
              observers: Mapping[str, Observer] | None = None, sample_times: Iterable[float] | None = None,
              raise_on_instability: bool = True, check_identity: float = 0.0,
              rng: np.random.Generator | None = None) -> IntegrationResult:
    """Run ``ceil(T / tau)`` steps, calling ``observers`` at ``sample_times``.

    ``sample_times=None`` observes every step.  A blow-up past ``ABORT_FACTOR``
    times the initial norm (floored at 1) either raises ``InstabilityError`` or,
    with ``raise_on_instability=False``, stops and flags the result as diverged.
    ``check_identity`` is the fraction of steps on which the one-step identity
    is spot-checked; a failure raises ``AssertionError``.
    """
    observers = dict(observers or {})
    n_steps = cfg.n_steps
    sample = _sample_steps(sample_times, cfg.tau, n_steps)
    sources = SourceTerms(cfg, ops)
    materials, space = ops.materials, ops.space
    norm0 = weighted_norm(initial, materials, space)
    ref = max(norm0, 1.0)
    rng = rng or np.random.default_rng(0)
    records: list[tuple[float, dict[str, float]]] = []

    def observe(n: int, u: TEState):
        if n in sample and observers:
            records.append((u.t, {k: f(u) for k, f in observers.items()}))

    state = initial.copy()
    observe(0, state)
    ce = None
    ratio = 1.0
    for n in range(1, n_steps + 1):
        new, ce = _step(state, cfg.tau, ops, sources, ce)
        if check_identity and rng.random() < check_identity:
            res = verify_one_step_identity(state, new, cfg, ops, sources)
            scale = max(weighted_norm(new, materials, space), 1.0)
            if res > 1e-12 * scale:
                raise AssertionError(f"one-step identity residual {res:.3e} at step {n}")
        state = new
        if n % _NORM_CHECK_EVERY == 0 or n == n_steps or not np.isfinite(ce).all():
            nrm = weighted_norm(state, materials, space) if state.is_finite() else math.inf
            ratio = max(ratio, nrm / ref)
            if not math.isfinite(nrm) or nrm > ABORT_FACTOR * ref:
                log.info("run aborted at step %d, t=%.6g, norm %.3e", n, state.t, nrm)
                if raise_on_instability:
                    raise InstabilityError(n, state.t, nrm)
                return IntegrationResult(state, records, n, True, ratio)
        observe(n, state)
    return IntegrationResult(state, records, n_steps, False, ratio)
