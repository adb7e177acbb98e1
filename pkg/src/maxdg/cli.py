"""Command-line front end: ``maxdg {cavity,polynomial,lowreg,cfl,selftest}``.

Settings come from a flat TOML file (``--config``) and are overridden by flags.
Each run writes its CSVs, ``metadata.json`` and ``summary.txt`` to ``--out``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import harness
from .basis import DgSpace, MaterialParams
from .identities import run_selftest
from .leapfrog import cfl_timestep
from .mesh import build_cartesian_mesh, cells_for_h
from .operators import INTERP, QUADRATURE, MaxwellOperators

log = logging.getLogger("maxdg")

SUBCOMMANDS = ("cavity", "polynomial", "lowreg", "cfl", "selftest")

DEFAULTS = {
    "cavity": dict(degrees=[1, 2], meshes=[15, 20, 28, 40, 56, 70], taus=[1e-4], lift=["quadrature", "interp"]),
    "polynomial": dict(degrees=[3], meshes=[3, 9], taus=[1e-2, 5e-3, 2.5e-3, 1e-3]),
    "lowreg": dict(degrees=[1], meshes=[4, 8, 16, 32], taus=[]),
    "cfl": dict(degrees=[3], meshes=[9], taus=[]),
    "selftest": dict(degrees=[], meshes=[], taus=[]),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated settings of one CLI invocation.

    ``meshes`` are cell counts per unit length (square cells of diameter
    sqrt(2)/n); ``ref_mesh``/``ref_degree`` set the lowreg reference run.
    """

    subcommand: str
    degrees: list[int] = field(default_factory=list)
    meshes: list[int] = field(default_factory=list)
    taus: list[float] = field(default_factory=list)
    theta: float = 0.9
    lift: list[str] = field(default_factory=lambda: [QUADRATURE])
    alphas: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 4.0])
    modes: int = 2**14
    seed: int = 0
    end_time: float = 1.0
    samples: int = 10
    ref_mesh: int = 96
    ref_degree: int = 3
    out: str = "maxdg-out"

    def validate(self) -> "RunConfig":
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if self.subcommand not in SUBCOMMANDS:
            bad("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
        if any(int(k) != k or k < 1 or k > 8 for k in self.degrees):
            bad("degree", "degrees must be integers in 1..8")
        if any(int(n) != n or n < 1 for n in self.meshes):
            bad("meshes", "cell counts must be positive integers")
        if any(not (t > 0 and math.isfinite(t)) for t in self.taus):
            bad("tau", "time steps must be positive")
        if not 0 < self.theta < 1:
            bad("theta", "must lie in (0, 1)")
        if not self.lift or any(m not in (QUADRATURE, INTERP) for m in self.lift):
            bad("lift", "must be 'quadrature', 'interp' or 'both'")
        if any(a < 0 for a in self.alphas):
            bad("alpha", "regularity parameters must be >= 0")
        if self.modes < 4 or self.modes & (self.modes - 1):
            bad("modes", "must be a power of two >= 4")
        if not 0 <= self.seed < 2**64:
            bad("seed", "must be an unsigned 64-bit integer")
        if not (self.end_time >= 0 and math.isfinite(self.end_time)):
            bad("end_time", "must be >= 0")
        if self.samples < 1:
            bad("samples", "must be >= 1")
        if self.ref_mesh < 1 or not 1 <= self.ref_degree <= 8:
            bad("ref_mesh", "reference mesh and degree must be positive")
        if self.subcommand == "polynomial" and any(k < 3 for k in self.degrees):
            bad("degree", "the polynomial experiment needs degree >= 3")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d).validate()


# -- parsing ------------------------------------------------------------------

def _int_list(s) -> list[int]:
    return [int(v) for v in _split(s)]


def _float_list(s) -> list[float]:
    return [float(v) for v in _split(s)]


def _split(s):
    if isinstance(s, (list, tuple)):
        return list(s)
    if isinstance(s, (int, float)):
        return [s]
    return [v for v in str(s).replace(",", " ").split() if v]


def _meshes(s) -> list[int]:
    """Cell counts; entries written as reals below 1 are read as mesh sizes h."""
    out = []
    for v in _split(s):
        if isinstance(v, str) and any(c in v for c in ".eE"):
            v = float(v)
        if isinstance(v, float):
            if v <= 0:
                raise ConfigError("meshes: mesh sizes must be positive")
            out.append(cells_for_h(v) if v < 1 else int(v))
        else:
            out.append(int(v))
    return out


def _lift(s) -> list[str]:
    items = _split(s)
    if items == ["both"]:
        return [QUADRATURE, INTERP]
    return [str(v) for v in items]


# config key -> (RunConfig field, converter)
KEYS = {
    "degree": ("degrees", _int_list), "degrees": ("degrees", _int_list),
    "meshes": ("meshes", _meshes),
    "tau": ("taus", _float_list), "taus": ("taus", _float_list),
    "theta": ("theta", float),
    "lift": ("lift", _lift),
    "alpha": ("alphas", _float_list), "alphas": ("alphas", _float_list),
    "modes": ("modes", int),
    "seed": ("seed", int),
    "end_time": ("end_time", float), "end-time": ("end_time", float),
    "samples": ("samples", int),
    "ref_mesh": ("ref_mesh", int), "ref_degree": ("ref_degree", int),
    "out": ("out", str),
}


def _apply(values: dict, settings: dict, source: str) -> None:
    for key, raw in values.items():
        if key not in KEYS:
            raise ConfigError(f"{key}: unknown key in {source}")
        name, conv = KEYS[key]
        try:
            settings[name] = conv(raw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: parse error in {path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{nested[0]}: config must be flat key = value pairs")
    return data


def parse_config(subcommand: str, config_path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then flag overrides; validated."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: must be one of {', '.join(SUBCOMMANDS)}")
    settings = {k: list(v) for k, v in DEFAULTS[subcommand].items()}
    if config_path:
        _apply(load_config_file(config_path), settings, str(config_path))
    _apply({k: v for k, v in (overrides or {}).items() if v is not None}, settings, "flags")
    return RunConfig(subcommand=subcommand, **settings).validate()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxdg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat TOML file of settings")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", help="PRNG seed (unsigned 64-bit)")
        s.add_argument("--degree", help="polynomial degrees, e.g. 1,2")
        s.add_argument("--meshes", help="cells per unit length (or mesh sizes h < 1)")
        s.add_argument("--tau", help="time step(s)")
        s.add_argument("--theta", help="CFL safety factor in (0, 1)")
        s.add_argument("--lift", help="quadrature, interp or both")
        s.add_argument("--alpha", help="regularity parameters")
        s.add_argument("--modes", help="number of Fourier modes M (power of two)")
        s.add_argument("--end-time", dest="end_time", help="final time T")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


# -- running --------------------------------------------------------------------

def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


def _cfl_estimates(cfg: RunConfig, degrees, meshes) -> dict:
    out = {}
    for k in degrees:
        for n in meshes:
            ops = MaxwellOperators(DgSpace(build_cartesian_mesh(n, n), k), MaterialParams())
            est = ops.estimate_CFL_norm(method="lanczos", tol=1e-4)
            out[f"k={k},n={n}"] = {"norm": est.value, "tau_cfl": cfl_timestep(cfg.theta, est.value),
                                  "converged": est.converged}
    return out


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    meta: dict = {"version": _version(), "config": cfg.to_dict(), "seed": cfg.seed,
                  "realized_h": {str(n): harness.mesh_h(n) for n in cfg.meshes},
                  "basis": "Q_k tensor Gauss-Lobatto Lagrange"}
    lines: list[str] = []
    status = 0
    written: list[Path] = []

    if cfg.subcommand == "cavity":
        recs = []
        for tau in cfg.taus:
            recs += harness.run_spatial_convergence(harness.SpatialConfig(
                meshes=cfg.meshes, degrees=cfg.degrees, tau=tau, lift_modes=cfg.lift,
                T=cfg.end_time, n_samples=cfg.samples))
        written.append(harness.write_csv(out / "spatial.csv", "spatial", recs))
        status = int(any(r.diverged for r in recs))
        meta["tau_cfl"] = _cfl_estimates(cfg, cfg.degrees, cfg.meshes)
        meta["wall_times"] = {f"k={r.k},h={r.h:.6g},{r.lift_mode}": r.wall_time for r in recs}
        for k in cfg.degrees:
            for mode in cfg.lift:
                for tau in cfg.taus:
                    pairs = [(r.h, r.max_error) for r in recs
                             if r.k == k and r.lift_mode == mode and r.tau == tau and not r.diverged]
                    eoc = harness.estimate_eoc(pairs) if len(pairs) >= 3 else math.nan
                    lines.append(f"cavity k={k} lift={mode} tau={tau:g}: EOC {eoc:.3f}")
    elif cfg.subcommand == "polynomial":
        recs = []
        for k in cfg.degrees:
            recs += harness.run_temporal_convergence(harness.TemporalConfig(
                meshes=cfg.meshes, taus=cfg.taus, degree=k, T=cfg.end_time, theta=cfg.theta))
        written.append(harness.write_csv(out / "temporal.csv", "temporal", recs))
        meta["wall_times"] = {f"k={r.k},h={r.h:.6g},tau={r.tau:.6g}": r.wall_time for r in recs}
        meta["tau_cfl"] = {f"k={r.k},h={r.h:.6g}": r.tau_cfl for r in recs}
        for r in recs:
            state = "diverged" if r.diverged else f"max error {r.max_error:.6e}"
            lines.append(f"polynomial k={r.k} h={r.h:.6g} tau={r.tau:.6g}: {state}")
    elif cfg.subcommand == "lowreg":
        rcfg = harness.RegularityConfig(alphas=cfg.alphas, meshes=cfg.meshes, degree=cfg.degrees[0],
                                        ref_mesh=cfg.ref_mesh, ref_degree=cfg.ref_degree,
                                        tau=cfg.taus[0] if cfg.taus else None, T=cfg.end_time,
                                        M=cfg.modes, seed=cfg.seed, lift_mode=cfg.lift[0])
        meta["initial_data"] = "zero"
        meta["tau_cfl"] = _cfl_estimates(cfg, [cfg.ref_degree], [cfg.ref_mesh])
        meta["tau"] = harness.regularity_tau(rcfg)
        rcfg.tau = meta["tau"]
        recs = harness.run_regularity_study(rcfg)
        written.append(harness.write_csv(out / "regularity.csv", "regularity", recs))
        written.append(harness.write_csv(out / "eoc.csv", "eoc", recs))
        Ms = [m for m in (2**p for p in range(10, 31)) if m <= cfg.modes] or [cfg.modes]
        etas = sorted({0.0, 0.5, 1.0, 1.5, 2.0, 4.0, 4.5})
        written.append(harness.write_csv(out / "sobolev.csv", "sobolev",
                                         harness.sobolev_table(cfg.alphas, etas, Ms, cfg.seed)))
        meta["seeds"] = {str(r.alpha): r.seed for r in recs}
        for r in recs:
            lines.append(f"lowreg alpha={r.alpha:g} k={r.degree}: EOC {r.eoc:.4f}")
    elif cfg.subcommand == "cfl":
        est = _cfl_estimates(cfg, cfg.degrees, cfg.meshes)
        meta["tau_cfl"] = est
        for key, v in est.items():
            lines.append(f"{key}: ||C_H C_E||^(1/2) = {v['norm']:.8e}, tau_CFL(theta={cfg.theta}) = {v['tau_cfl']:.8e}")
    elif cfg.subcommand == "selftest":
        results = run_selftest(cfg.seed)
        for r in results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.value:.3e} (tol {r.tol:g})")
        status = int(not all(r.passed for r in results))

    meta["total_wall_time"] = time.perf_counter() - start
    if written and any(not p.exists() or p.stat().st_size == 0 for p in written):
        status = 1
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("out", "seed", "degree", "meshes", "tau", "theta", "lift",
                                               "alpha", "modes", "end_time")}
    try:
        cfg = parse_config(args.subcommand, args.config, overrides)
    except ConfigError as exc:
        print(f"maxdg: error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except OSError as exc:
        print(f"maxdg: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
