"""Algebraic identities of the discretization, usable as runtime self-checks.

Each check returns a residual (or ratio) that must be at round-off level;
``run_selftest`` collects them with their tolerances.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .basis import DgSpace, MaterialParams, TEState, l2_project, weighted_inner_product, weighted_norm
from .leapfrog import LeapfrogConfig, SourceTerms, _step, cfl_timestep, verify_one_step_identity
from .mesh import build_cartesian_mesh
from .operators import MaxwellOperators
from .sources import CavityParams, cavity_surface_current

__all__ = [
    "CheckResult",
    "consistency_residual",
    "energy_bound_ratio",
    "lift_identity_residual",
    "one_step_residual",
    "run_selftest",
    "skew_residual",
]


class CheckResult(NamedTuple):
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)


def skew_residual(ops: MaxwellOperators, rng: np.random.Generator, pairs: int = 100) -> float:
    """max |<C u, v> + <u, C v>| / (||u|| ||v||) over random pairs."""
    mat, sp = ops.materials, ops.space
    worst = 0.0
    for _ in range(pairs):
        u, v = TEState.random(sp, rng), TEState.random(sp, rng)
        a = weighted_inner_product(ops.apply(u), v, mat, sp) + weighted_inner_product(u, ops.apply(v), mat, sp)
        worst = max(worst, abs(a) / (weighted_norm(u, mat, sp) * weighted_norm(v, mat, sp)))
    return worst


def _side(x, minus, plus):
    return np.where(x < 0, minus, plus)


def consistency_residual(space: DgSpace, materials: MaterialParams) -> float:
    """Relative mismatch of ``C_E E`` and ``C_H H`` against the projected curls.

    E is continuous with vanishing tangential trace on the boundary and H is
    continuous, both quadratic, so the space must have degree >= 2.
    """
    if space.degree < 2:
        raise ValueError("consistency check needs degree >= 2")
    mu = lambda x: _side(x, materials.mu_minus, materials.mu_plus)  # noqa: E731
    eps = lambda x: _side(x, materials.eps_minus, materials.eps_plus)  # noqa: E731
    ops = MaxwellOperators(space, materials)
    E1 = l2_project(lambda x, y: y * (1 - y) * (1 + x), space)
    E2 = l2_project(lambda x, y: (1 - x * x) * (2 - y), space)
    # curl E = d1 E2 - d2 E1
    ref = l2_project(lambda x, y: (-2 * x * (2 - y) - (1 - 2 * y) * (1 + x)) / mu(x), space)
    ce = ops.apply_CE(E1, E2)
    H = l2_project(lambda x, y: 1 + x * y - y * y + 0.5 * x * x, space)
    c1 = l2_project(lambda x, y: (x - 2 * y) / eps(x), space)
    c2 = l2_project(lambda x, y: -(y + x) / eps(x), space)
    h1, h2 = ops.apply_CH_hat(H)
    scale = max(np.abs(ref).max(), np.abs(c1).max(), np.abs(c2).max())
    return float(max(np.abs(ce - ref).max(), np.abs(h1 - c1).max(), np.abs(h2 - c2).max()) / scale)


def lift_identity_residual(space: DgSpace, materials: MaterialParams) -> float:
    """Relative mismatch in ``Pi(eps^{-1} curl H) = C_H H - L([H3])`` for a
    piecewise linear H3 whose jump across x1 = 0 is ``1 - x2``."""
    ops = MaxwellOperators(space, materials)
    eps = lambda x: _side(x, materials.eps_minus, materials.eps_plus)  # noqa: E731
    H = l2_project(lambda x, y: _side(x, 1 + x * y, 2 + x - y), space)
    h1, h2 = ops.apply_CH_hat(H)
    l1, l2 = ops.lift_interface(lambda y: 1 - y)
    c1 = l2_project(lambda x, y: _side(x, x, -1.0) / eps(x), space)
    c2 = l2_project(lambda x, y: -_side(x, y, 1.0) / eps(x), space)
    scale = max(np.abs(c1).max(), np.abs(c2).max())
    return float(max(np.abs(h1 - l1 - c1).max(), np.abs(h2 - l2 - c2).max()) / scale)


def one_step_residual(ops: MaxwellOperators, rng: np.random.Generator, steps: int = 5,
                      with_sources: bool = True) -> float:
    """Relative one-step-formulation residual over a few random steps."""
    est = ops.estimate_CFL_norm().value
    tau = cfl_timestep(0.9, est) * 0.99
    cfg = LeapfrogConfig(tau=tau, T=steps * tau,
                         surface_current=cavity_surface_current(CavityParams()) if with_sources else None)
    src = SourceTerms(cfg, ops)
    u = TEState.random(ops.space, rng, t=float(rng.uniform(0, 1)))
    worst = 0.0
    for _ in range(steps):
        new, _ = _step(u, tau, ops, src)
        res = verify_one_step_identity(u, new, cfg, ops, src)
        worst = max(worst, res / max(weighted_norm(u, ops.materials, ops.space), 1e-300))
        u = new
    return worst


def energy_bound_ratio(ops: MaxwellOperators, rng: np.random.Generator, theta: float = 0.9,
                       steps: int = 1000) -> tuple[float, float]:
    """``(sup_n ||u^n|| / ||u^0||, (1 - theta^2)^{-1/2})`` for a source-free run at the CFL step."""
    tau = cfl_timestep(theta, ops.estimate_CFL_norm().value)
    u = TEState.random(ops.space, rng)
    n0 = weighted_norm(u, ops.materials, ops.space)
    worst = 1.0
    ce = None
    for _ in range(steps):
        u, ce = _step(u, tau, ops, None, ce)
        worst = max(worst, weighted_norm(u, ops.materials, ops.space) / n0)
    return worst, 1.0 / math.sqrt(1.0 - theta * theta)


def run_selftest(seed: int = 0, steps: int = 1000) -> list[CheckResult]:
    """The identity suite on small meshes with equal and unequal materials."""
    rng = np.random.default_rng(seed)
    mesh = build_cartesian_mesh(2, 3)
    out = []
    for label, mat in (("equal", MaterialParams()), ("unequal", MaterialParams(2.0, 1.0, 0.5, 3.0))):
        for k in (1, 2, 3):
            sp = DgSpace(mesh, k)
            ops = MaxwellOperators(sp, mat)
            out.append(CheckResult(f"skew-adjointness k={k} {label}", skew_residual(ops, rng), 1e-11))
            if k >= 2:
                out.append(CheckResult(f"consistency k={k} {label}", consistency_residual(sp, mat), 1e-11))
            out.append(CheckResult(f"lift identity k={k} {label}", lift_identity_residual(sp, mat), 1e-11))
            out.append(CheckResult(f"one-step identity k={k} {label}", one_step_residual(ops, rng), 1e-12))
    ops = MaxwellOperators(DgSpace(build_cartesian_mesh(4, 4), 2), MaterialParams(2.0, 1.0, 0.5, 3.0))
    ratio, bound = energy_bound_ratio(ops, rng, 0.9, steps)
    out.append(CheckResult(f"energy bound ({steps} steps, ratio/bound)", ratio / bound, 1.0))
    return out

