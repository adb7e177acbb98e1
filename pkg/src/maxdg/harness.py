"""Error measurement, EOC fits and drivers for the convergence experiments."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .basis import DgSpace, MaterialParams, TEState, l2_project
from .leapfrog import LeapfrogConfig, cfl_timestep, integrate, projected_volume_current
from .mesh import build_cartesian_mesh
from .operators import INTERP, QUADRATURE, MaxwellOperators
from .sources import (
    CavityParams,
    cavity_fields,
    cavity_surface_current,
    fourier_sobolev_norm,
    lowreg_surface_current,
    polynomial_fields,
    polynomial_surface_current,
    polynomial_volume_current,
    sample_trig_coeffs,
)

__all__ = [
    "ConvergenceRecord",
    "EocRecord",
    "RegularityConfig",
    "SCHEMAS",
    "SpatialConfig",
    "TemporalConfig",
    "cross_mesh_l2_error",
    "csv_rows",
    "estimate_eoc",
    "mesh_h",
    "project_fields",
    "regularity_tau",
    "run_regularity_study",
    "run_spatial_convergence",
    "run_temporal_convergence",
    "sobolev_table",
    "weighted_l2_error",
    "write_csv",
]

log = logging.getLogger(__name__)

ExactFields = Callable[[np.ndarray, np.ndarray, float], tuple]


def mesh_h(n: int) -> float:
    """Diameter of the square cells of the ``n``-per-unit-length mesh."""
    return math.sqrt(2.0) / n


def _space(n: int, k: int) -> DgSpace:
    return DgSpace(build_cartesian_mesh(n, n), k)


# -- errors -------------------------------------------------------------------

def _values_at(v: np.ndarray, space: DgSpace, B: np.ndarray) -> np.ndarray:
    return np.einsum("qa,eab,rb->eqr", B, space.as_cells(v), B, optimize=True)


def _weights(materials: MaterialParams, space: DgSpace):
    return materials.mu(space.mesh)[:, None, None], materials.eps(space.mesh)[:, None, None]


def weighted_l2_error(state: TEState, exact: ExactFields, t: float, space: DgSpace,
                      materials: MaterialParams, npts: int | None = None) -> float:
    """(mu, eps)-weighted L2 distance to ``exact(x1, x2, t) -> (H3, E1, E2)``.

    Uses a ``k + 3`` point Gauss rule per direction (exact to degree 2k + 5).
    """
    npts = npts or space.degree + 3
    x, y, W, B = space.volume_quadrature(npts)
    ex = [np.broadcast_to(np.asarray(f, dtype=float), x.shape) for f in exact(x, y, t)]
    mu, eps = _weights(materials, space)
    total = 0.0
    for coef, ref, w in zip((state.H3, state.E1, state.E2), ex, (mu, eps, eps)):
        d = _values_at(coef, space, B) - ref
        total += float(np.sum(w * W * d * d))
    return math.sqrt(total)


def cross_mesh_l2_error(coarse: TEState, coarse_space: DgSpace, fine: TEState, fine_space: DgSpace,
                        materials: MaterialParams, npts: int | None = None) -> float:
    """Weighted L2 distance between solutions on two meshes of the same domain.

    The fine solution is evaluated at the coarse quadrature points by point
    location.  An even number of Gauss points keeps the points off the midlines
    of coarse cells, where nested fine meshes have element boundaries.
    """
    npts = npts or coarse_space.degree + 3
    npts += npts % 2
    x, y, W, B = coarse_space.volume_quadrature(npts)
    px, py = x.reshape(-1), y.reshape(-1)
    elems = fine_space.mesh.locate(np.stack([px, py], axis=1))
    mu, eps = _weights(materials, coarse_space)
    total = 0.0
    for c, f, w in zip((coarse.H3, coarse.E1, coarse.E2), (fine.H3, fine.E1, fine.E2), (mu, eps, eps)):
        d = _values_at(c, coarse_space, B) - fine_space.evaluate(f, px, py, elems).reshape(x.shape)
        total += float(np.sum(w * W * d * d))
    return math.sqrt(total)


def estimate_eoc(pairs: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    if len(pairs) < 3:
        raise ValueError("need at least 3 (h, error) pairs")
    h = np.array([p[0] for p in pairs], dtype=float)
    e = np.array([p[1] for p in pairs], dtype=float)
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("h and errors must be positive and finite")
    lh = np.log(h)
    if np.ptp(lh) == 0:
        raise ValueError("degenerate fit: all h are equal")
    A = np.stack([lh, np.ones_like(lh)], axis=1)
    slope, _ = np.linalg.lstsq(A, np.log(e), rcond=None)[0]
    return float(slope)


def project_fields(exact: ExactFields, t: float, space: DgSpace) -> TEState:
    """Broken L2 projection of all three components at time ``t``."""
    comps = [l2_project(lambda x, y, i=i: exact(x, y, t)[i], space) for i in range(3)]
    return TEState(*comps, t=t)


# -- records ------------------------------------------------------------------

@dataclass
class ConvergenceRecord:
    experiment: str
    k: int
    h: float
    tau: float
    lift_mode: str = QUADRATURE
    seed: int | None = None
    times: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    max_error: float = math.nan
    wall_time: float = 0.0
    diverged: bool = False
    tau_cfl: float = math.nan

    def __post_init__(self):
        if self.errors and not self.diverged:
            if any(not math.isfinite(e) or e < 0 for e in self.errors):
                raise ValueError("errors must be finite and non-negative")
            self.max_error = max(self.errors)


@dataclass
class EocRecord:
    alpha: float
    degree: int
    seed: int
    pairs: list[tuple[float, float]]
    eoc: float = math.nan

    def __post_init__(self):
        usable = [p for p in self.pairs if math.isfinite(p[1]) and p[1] > 0]
        if len(usable) >= 3:
            self.eoc = estimate_eoc(usable)


# -- parallel map ---------------------------------------------------------------

def _workers(requested: int | None = None) -> int:
    cap = int(os.environ.get("MAXDG_THREADS", "0") or 0)
    n = requested or os.cpu_count() or 1
    return max(1, min(n, cap) if cap > 0 else n)


def _map(fn, cases: list, workers: int | None = None) -> list:
    """Ordered map; runs in a process pool when more than one worker is allowed."""
    w = _workers(workers)
    if w == 1 or len(cases) <= 1:
        return [fn(c) for c in cases]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, cases))


# -- cavity / spatial convergence ---------------------------------------------------

@dataclass
class SpatialConfig:
    meshes: Sequence[int] = (15, 20, 28, 40, 56, 70)
    degrees: Sequence[int] = (1, 2)
    tau: float = 1e-4
    lift_modes: Sequence[str] = (QUADRATURE, INTERP)
    T: float = 1.0
    n_samples: int = 10
    cavity: CavityParams = field(default_factory=CavityParams)
    materials: MaterialParams = field(default_factory=MaterialParams)
    workers: int | None = None

    def sample_times(self) -> list[float]:
        n = round(self.T / self.tau)
        idx = sorted({round(n * (i + 1) / self.n_samples) for i in range(self.n_samples)})
        return [i * self.tau for i in idx]


def _cavity_case(args) -> ConvergenceRecord:
    cfg, n, k, mode = args
    start = time.perf_counter()
    space = _space(n, k)
    ops = MaxwellOperators(space, cfg.materials)
    exact = lambda x, y, t: cavity_fields(cfg.cavity, x, y, t)  # noqa: E731
    u0 = project_fields(exact, 0.0, space)
    lf = LeapfrogConfig(tau=cfg.tau, T=cfg.T, surface_current=cavity_surface_current(cfg.cavity), lift_mode=mode)
    res = integrate(u0, lf, ops, {"err": lambda u: weighted_l2_error(u, exact, u.t, space, cfg.materials)},
                    sample_times=cfg.sample_times(), raise_on_instability=False)
    rec = ConvergenceRecord("cavity", k, space.mesh.h_max, cfg.tau, mode,
                            times=[t for t, _ in res.log], errors=[v["err"] for _, v in res.log],
                            diverged=res.diverged)
    rec.wall_time = time.perf_counter() - start
    log.info("cavity n=%d k=%d %s: max error %.6e (%.1fs)", n, k, mode, rec.max_error, rec.wall_time)
    return rec


def run_spatial_convergence(cfg: SpatialConfig) -> list[ConvergenceRecord]:
    cases = [(cfg, n, k, m) for k in cfg.degrees for n in cfg.meshes for m in cfg.lift_modes]
    return _map(_cavity_case, cases, cfg.workers)


# -- polynomial / temporal convergence --------------------------------------------------

@dataclass
class TemporalConfig:
    meshes: Sequence[int] = (3,)
    taus: Sequence[float] = (1e-2, 5e-3, 2.5e-3, 1e-3)
    degree: int = 3
    T: float = 1.0
    theta: float = 0.9
    materials: MaterialParams = field(default_factory=MaterialParams)
    workers: int | None = None


def _poly_exact(x, y, t):
    return polynomial_fields(x, y, t)


def _polynomial_case(args) -> ConvergenceRecord:
    cfg, n, tau = args
    start = time.perf_counter()
    space = _space(n, cfg.degree)
    ops = MaxwellOperators(space, cfg.materials)
    u0 = project_fields(_poly_exact, 0.0, space)
    lf = LeapfrogConfig(
        tau=tau, T=cfg.T, theta=cfg.theta,
        volume_current=projected_volume_current(space, cfg.materials, polynomial_volume_current),
        surface_current=polynomial_surface_current(),
    )
    res = integrate(u0, lf, ops, {"err": lambda u: weighted_l2_error(u, _poly_exact, u.t, space, cfg.materials)},
                    raise_on_instability=False)
    errors = [v["err"] for _, v in res.log]
    diverged = res.diverged or not all(math.isfinite(e) for e in errors)
    est = ops.estimate_CFL_norm().value
    rec = ConvergenceRecord("polynomial", cfg.degree, space.mesh.h_max, tau,
                            times=[t for t, _ in res.log], errors=errors if not diverged else [],
                            diverged=diverged, tau_cfl=cfl_timestep(cfg.theta, est) / cfg.theta)
    if diverged:
        rec.max_error = math.inf
    rec.wall_time = time.perf_counter() - start
    return rec


def run_temporal_convergence(cfg: TemporalConfig) -> list[ConvergenceRecord]:
    """Max-over-steps error for each (mesh, tau); blown-up runs are flagged diverged."""
    if cfg.degree < 3:
        raise ValueError("the polynomial solution needs degree >= 3 to be resolved exactly in space")
    cases = [(cfg, n, tau) for n in cfg.meshes for tau in cfg.taus]
    return _map(_polynomial_case, cases, cfg.workers)


# -- rough current / regularity study ------------------------------------------------

@dataclass
class RegularityConfig:
    alphas: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 4.0)
    meshes: Sequence[int] = (4, 8, 16, 32)
    degree: int = 1
    ref_mesh: int = 96
    ref_degree: int = 3
    tau: float | None = None  # default: a fraction of the reference CFL step
    theta: float = 0.5
    T: float = 1.0
    M: int = 2**14
    seed: int = 0
    lift_mode: str = QUADRATURE
    materials: MaterialParams = field(default_factory=MaterialParams)
    workers: int | None = None


def _draw(alpha: float, M: int, seed: int, tries: int = 100):
    for s in range(seed, seed + tries):
        params = sample_trig_coeffs(alpha, M, s)
        if params.norm0 > 0.0:
            if s != seed:
                log.warning("degenerate rough current for seed %d; resampled with seed %d", seed, s)
            return params, s
    raise ValueError("could not draw a nondegenerate rough current")


def _rough_run(n: int, k: int, tau: float, T: float, current, materials, mode) -> tuple[DgSpace, TEState]:
    space = _space(n, k)
    ops = MaxwellOperators(space, materials)
    lf = LeapfrogConfig(tau=tau, T=T, surface_current=current, lift_mode=mode)
    res = integrate(TEState.zeros(space), lf, ops, raise_on_instability=False)
    if res.diverged:
        raise FloatingPointError(f"rough-current run diverged on n={n}, k={k}, tau={tau}")
    return space, res.state


def regularity_tau(cfg: RegularityConfig) -> float:
    """Common step: ``theta`` times the CFL step of the reference discretization,
    adjusted so that it divides T."""
    if cfg.tau is not None:
        return cfg.tau
    ops = MaxwellOperators(_space(cfg.ref_mesh, cfg.ref_degree), cfg.materials)
    tau = cfl_timestep(cfg.theta, ops.estimate_CFL_norm(method="lanczos", tol=1e-4).value)
    return cfg.T / math.ceil(cfg.T / tau)


def _regularity_case(args) -> tuple[EocRecord, list[tuple[float, float]]]:
    cfg, alpha, tau = args
    params, seed = _draw(alpha, cfg.M, cfg.seed)
    current = lowreg_surface_current(params)
    ref_space, ref = _rough_run(cfg.ref_mesh, cfg.ref_degree, tau, cfg.T, current, cfg.materials, cfg.lift_mode)
    pairs = []
    for n in cfg.meshes:
        space, u = _rough_run(n, cfg.degree, tau, cfg.T, current, cfg.materials, cfg.lift_mode)
        pairs.append((space.mesh.h_max, cross_mesh_l2_error(u, space, ref, ref_space, cfg.materials)))
    rec = EocRecord(alpha, cfg.degree, seed, pairs)
    log.info("alpha=%g: EOC %.4f", alpha, rec.eoc)
    return rec, pairs


def run_regularity_study(cfg: RegularityConfig) -> list[EocRecord]:
    """For each alpha: one reference run, coarse runs, cross-mesh errors at T, EOC fit."""
    tau = regularity_tau(cfg)
    out = _map(_regularity_case, [(cfg, a, tau) for a in cfg.alphas], cfg.workers)
    return [r for r, _ in out]


def sobolev_table(alphas: Iterable[float], etas: Iterable[float], Ms: Iterable[int], seed: int = 0):
    """Rows ``(alpha, eta, M, norm)`` of the discrete Sobolev norms."""
    rows = []
    for a in alphas:
        for M in Ms:
            params = sample_trig_coeffs(a, M, seed)
            for eta in etas:
                rows.append((a, eta, M, fourier_sobolev_norm(params, eta)))
    return sorted(rows)


# -- CSV ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return "" if v is None else str(v)


SCHEMAS = {
    "spatial": ["experiment", "k", "h", "tau", "lift_mode", "max_l2_error", "diverged"],
    "temporal": ["k", "h", "tau", "max_l2_error", "diverged", "tau_cfl"],
    "regularity": ["alpha", "degree", "seed", "h", "error_at_T"],
    "eoc": ["alpha", "degree", "seed", "eoc"],
    "sobolev": ["alpha", "eta", "M", "norm"],
}


def csv_rows(kind: str, records) -> list[tuple]:
    """Rows of one CSV schema, sorted by case key."""
    if kind == "spatial":
        rows = [(r.experiment, r.k, r.h, r.tau, r.lift_mode, r.max_error, r.diverged) for r in records]
    elif kind == "temporal":
        rows = [(r.k, r.h, r.tau, r.max_error, r.diverged, r.tau_cfl) for r in records]
    elif kind == "regularity":
        rows = [(r.alpha, r.degree, r.seed, h, e) for r in records for h, e in r.pairs]
    elif kind == "eoc":
        rows = [(r.alpha, r.degree, r.seed, r.eoc) for r in records]
    elif kind == "sobolev":
        rows = list(records)
    else:
        raise ValueError(f"unknown CSV kind {kind!r}")
    n_key = {"spatial": 5, "temporal": 3, "regularity": 4, "eoc": 3, "sobolev": 3}[kind]
    return sorted(rows, key=lambda r: tuple((-r[i] if kind == "spatial" and i == 2 else r[i]) for i in range(n_key)))


def write_csv(path: str | Path, kind: str, records) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEMAS[kind])
        for row in csv_rows(kind, records):
            w.writerow([_fmt(v) for v in row])
    return path

