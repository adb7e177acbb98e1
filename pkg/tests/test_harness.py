import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxdg.basis import DgSpace, MaterialParams, TEState
from maxdg.harness import (
    SCHEMAS, ConvergenceRecord, EocRecord, RegularityConfig, SpatialConfig, TemporalConfig, cross_mesh_l2_error,
    csv_rows, estimate_eoc, mesh_h, project_fields, run_regularity_study, run_spatial_convergence,
    run_temporal_convergence, sobolev_table, weighted_l2_error, write_csv,
)
from maxdg.mesh import build_cartesian_mesh


@pytest.mark.parametrize("slope", [0.5, 1.0, 2.0, 3.0])
def test_eoc_exact_on_power_law(slope):
    hs = [0.1, 0.05, 0.025, 0.0125, 0.01]
    assert estimate_eoc([(h, 3.7 * h**slope) for h in hs]) == pytest.approx(slope, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 4), st.floats(1e-3, 1e3), st.lists(st.floats(1e-3, 1), min_size=3, max_size=8, unique=True))
def test_eoc_power_law_property(slope, c, hs):
    if np.ptp(np.log(hs)) < 1e-3:
        return
    assert estimate_eoc([(h, c * h**slope) for h in hs]) == pytest.approx(slope, rel=1e-9, abs=1e-9)


def test_eoc_errors():
    with pytest.raises(ValueError):
        estimate_eoc([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ValueError):
        estimate_eoc([(0.1, 1.0), (0.1, 0.5), (0.1, 0.2)])
    with pytest.raises(ValueError):
        estimate_eoc([(0.1, 1.0), (0.05, 0.0), (0.02, 0.2)])


def test_diverged_runs_excluded_from_fits():
    rec = EocRecord(0.0, 1, 0, [(0.4, 1.0), (0.2, 0.5), (0.1, math.inf), (0.05, 0.125)])
    assert rec.eoc == pytest.approx(1.0, abs=1e-12)
    assert math.isnan(EocRecord(0.0, 1, 0, [(0.4, 1.0), (0.2, math.nan)]).eoc)


def _exact(x, y, t):
    return (np.sin(np.pi * y) * np.cos(t) + 0 * x, x * y, 1.0 + 0 * x)


def test_weighted_error_of_projection_is_small():
    sp = DgSpace(build_cartesian_mesh(4, 4), 3)
    mat = MaterialParams(2.0, 1.0, 0.5, 3.0)
    u = project_fields(_exact, 0.3, sp)
    assert weighted_l2_error(u, _exact, 0.3, sp, mat) < 1e-4
    # polynomial fields are reproduced exactly
    poly = lambda x, y, t: (x * y, y**2 + 0 * x, 1 - x**3 + 0 * y)  # noqa: E731
    assert weighted_l2_error(project_fields(poly, 0.0, sp), poly, 0.0, sp, mat) < 1e-13


def test_weighted_error_of_zero_state():
    # ||(1, 0, 0)||^2 weighted with mu = 2 on the left, 1 on the right
    sp = DgSpace(build_cartesian_mesh(2, 2), 1)
    one = lambda x, y, t: (1.0 + 0 * x, 0 * x, 0 * x)  # noqa: E731
    err = weighted_l2_error(TEState.zeros(sp), one, 0.0, sp, MaterialParams(mu_minus=2.0))
    assert err == pytest.approx(math.sqrt(3.0), rel=1e-13)


def test_cross_mesh_error():
    mat = MaterialParams()
    coarse = DgSpace(build_cartesian_mesh(3, 3), 2)
    fine = DgSpace(build_cartesian_mesh(9, 9), 2)
    poly = lambda x, y, t: (x * y, 1 - y**2 + 0 * x, x**2 + 0 * y)  # noqa: E731
    a, b = project_fields(poly, 0.0, coarse), project_fields(poly, 0.0, fine)
    assert cross_mesh_l2_error(a, coarse, b, fine, mat) < 1e-13
    # distance to the zero state is the field norm
    z = TEState.zeros(fine)
    ref = weighted_l2_error(TEState.zeros(coarse), poly, 0.0, coarse, mat)
    assert cross_mesh_l2_error(a, coarse, z, fine, mat) == pytest.approx(ref, rel=1e-12)
    # non-nested meshes
    odd = DgSpace(build_cartesian_mesh(4, 5), 2)
    assert cross_mesh_l2_error(a, coarse, project_fields(poly, 0.0, odd), odd, mat) < 1e-13


def test_cross_mesh_error_converges():
    mat = MaterialParams()
    f = lambda x, y, t: (np.sin(3 * x) * np.cos(2 * y), 0 * x, 0 * x)  # noqa: E731
    ref = DgSpace(build_cartesian_mesh(24, 24), 3)
    u_ref = project_fields(f, 0.0, ref)
    pairs = []
    for n in (2, 4, 8):
        sp = DgSpace(build_cartesian_mesh(n, n), 1)
        pairs.append((sp.mesh.h_max, cross_mesh_l2_error(project_fields(f, 0.0, sp), sp, u_ref, ref, mat)))
    assert estimate_eoc(pairs) == pytest.approx(2.0, abs=0.2)


def test_record_validation():
    rec = ConvergenceRecord("cavity", 1, 0.1, 1e-4, errors=[0.1, 0.3, 0.2])
    assert rec.max_error == 0.3
    with pytest.raises(ValueError):
        ConvergenceRecord("cavity", 1, 0.1, 1e-4, errors=[0.1, -1.0])


def test_sample_times():
    cfg = SpatialConfig(tau=1e-2, T=1.0, n_samples=10)
    assert cfg.sample_times() == pytest.approx([0.1 * i for i in range(1, 11)])
    assert mesh_h(10) == pytest.approx(0.141421356, abs=1e-9)


def test_small_spatial_run_csv_deterministic(tmp_path):
    cfg = SpatialConfig(meshes=(2, 3, 4), degrees=(1,), tau=0.01, T=0.2, n_samples=2, workers=1)
    recs = run_spatial_convergence(cfg)
    assert len(recs) == 6 and not any(r.diverged for r in recs)
    assert [r.lift_mode for r in recs[:2]] == ["quadrature", "interp"]
    write_csv(tmp_path / "a.csv", "spatial", recs)
    write_csv(tmp_path / "b.csv", "spatial", run_spatial_convergence(cfg))
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == ",".join(SCHEMAS["spatial"])
    assert len(lines) == 7
    # at least 9 significant digits in scientific notation
    assert "e-" in lines[1].split(",")[5] and len(lines[1].split(",")[5].split("e")[0]) >= 11


def test_small_temporal_run_flags_divergence():
    recs = run_temporal_convergence(TemporalConfig(meshes=(1,), taus=(0.05, 0.2), T=40.0, workers=1))
    stable, unstable = recs
    assert not stable.diverged and math.isfinite(stable.max_error)
    assert unstable.diverged and unstable.max_error == math.inf
    assert stable.tau_cfl == pytest.approx(unstable.tau_cfl)
    with pytest.raises(ValueError):
        run_temporal_convergence(TemporalConfig(degree=2))


def test_small_regularity_run():
    cfg = RegularityConfig(alphas=(1.0,), meshes=(1, 2, 4), ref_mesh=8, ref_degree=2, M=64, T=0.5, workers=1)
    (rec,) = run_regularity_study(cfg)
    assert len(rec.pairs) == 3 and math.isfinite(rec.eoc) and rec.eoc > 0
    rows = csv_rows("regularity", [rec])
    assert [r[3] for r in rows] == sorted(r[3] for r in rows)


def test_sobolev_table_sorted():
    rows = sobolev_table([1.0, 0.0], [0.0, 1.0], [64, 32], seed=3)
    assert len(rows) == 8 and rows == sorted(rows)
    with pytest.raises(ValueError):
        csv_rows("nope", [])
