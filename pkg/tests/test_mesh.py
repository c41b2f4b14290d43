import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chdbc.errors import ConfigError, NonZeroMean
from chdbc.io import boundary_path, read_snapshot, write_snapshot
from chdbc.mesh import build_mesh, inner_h, mean, norm_h, project, require_zero_mean


def test_interval_trapezoid_weights():
    mesh = build_mesh("interval", n=5, length=1.0)
    assert np.allclose(mesh.bulk_weights, [0.125, 0.25, 0.25, 0.25, 0.125], atol=0, rtol=1e-15)
    assert mesh.volume == 1.0
    assert mesh.area == 2.0
    assert list(mesh.trace_map) == [0, 4]


def test_strip_measures():
    mesh = build_mesh("strip", nx=8, ny=5, lx=2.0, ly=1.0)
    assert mesh.volume == pytest.approx(2.0, rel=1e-14)
    assert mesh.area == pytest.approx(4.0, rel=1e-14)
    assert mesh.n_bulk == 40 and mesh.n_boundary == 16


def test_strip_trace_map_geometry():
    mesh = build_mesh("strip", nx=8, ny=5, lx=2.0, ly=1.0)
    assert len(set(mesh.trace_map)) == mesh.n_boundary
    ys = mesh.y[mesh.trace_map]
    assert np.all(ys[:8] == 0.0) and np.all(ys[8:] == 1.0)
    assert np.allclose(mesh.x[mesh.trace_map][:8], np.arange(8) * 0.25)


@pytest.mark.parametrize("kind, res", [("interval", dict(n=2)), ("strip", dict(nx=3, ny=5)), ("interval", dict(n=8, length=0.0)), ("disk", {})])
def test_degenerate_meshes_rejected(kind, res):
    with pytest.raises(ConfigError):
        build_mesh(kind, **res)


def test_mean_examples():
    mesh = build_mesh("interval", n=11, length=1.0)
    assert mean(mesh, mesh.constant(0.3)) == pytest.approx(0.3, abs=1e-15)
    p = mesh.pair(mesh.x)
    assert np.array_equal(p.boundary, [0.0, 1.0])
    assert mean(mesh, p) == pytest.approx(0.5, abs=1e-15)
    q = project(mesh, p)
    assert np.allclose(q.bulk, mesh.x - 0.5, atol=1e-15)


def test_project_constant_is_zero():
    mesh = build_mesh("strip", nx=8, ny=5, lx=2.0, ly=1.0)
    q = project(mesh, mesh.constant(0.3))
    assert np.max(np.abs(q.bulk)) < 1e-15 and np.max(np.abs(q.boundary)) < 1e-15


def test_affine_quadrature_exact_on_strip():
    mesh = build_mesh("strip", nx=12, ny=9, lx=3.0, ly=2.0)
    p = mesh.pair(0.7 - 0.4 * mesh.y)
    # bulk integral 3*(0.7*2 - 0.2*4) = 1.8; boundary: 3*0.7 + 3*(0.7 - 0.8) = 1.8
    assert mean(mesh, p) == pytest.approx(3.6 / (6.0 + 6.0), abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kind=st.sampled_from(["interval", "strip"]))
def test_project_zero_mean_and_idempotent(seed, kind):
    mesh = build_mesh("interval", n=17, length=2.0) if kind == "interval" else build_mesh("strip", nx=6, ny=5, lx=1.0, ly=1.0)
    rng = np.random.default_rng(seed)
    p = mesh.pair(rng.normal(size=mesh.n_bulk))
    q = project(mesh, p)
    assert abs(mean(mesh, q)) < 1e-13
    qq = project(mesh, q)
    assert np.allclose(qq.bulk, q.bulk, atol=1e-14)
    assert mesh.is_trace_compatible(q)


def test_pair_arithmetic_keeps_trace():
    mesh = build_mesh("strip", nx=6, ny=5, lx=1.0, ly=1.0)
    a, b = mesh.pair(mesh.x), mesh.pair(mesh.y)
    for p in (a + b, a - b, 2.0 * a, a * 3.0):
        assert mesh.is_trace_compatible(p)


def test_inner_and_norm():
    mesh = build_mesh("interval", n=5, length=1.0)
    one = mesh.constant(1.0)
    assert inner_h(mesh, one, one) == pytest.approx(3.0)
    assert norm_h(mesh, one * 2.0) == pytest.approx(2 * np.sqrt(3.0))


def test_require_zero_mean():
    mesh = build_mesh("interval", n=5, length=1.0)
    require_zero_mean(mesh, project(mesh, mesh.pair(mesh.x)))
    with pytest.raises(NonZeroMean):
        require_zero_mean(mesh, mesh.constant(1.0))


def test_snapshot_roundtrip(tmp_path):
    mesh = build_mesh("strip", nx=6, ny=5, lx=1.0, ly=1.0)
    u = mesh.pair(np.sin(mesh.x) * mesh.y)
    path = tmp_path / "snap.csv"
    write_snapshot(path, mesh, u)
    assert path.read_text().splitlines()[0] == "node_index,x,y,u"
    assert boundary_path(path).read_text().splitlines()[0] == "boundary_index,x,u_gamma"
    assert np.array_equal(read_snapshot(path, mesh), u.bulk)


def test_snapshot_mismatch(tmp_path):
    small = build_mesh("interval", n=5, length=1.0)
    big = build_mesh("interval", n=9, length=1.0)
    path = tmp_path / "snap.csv"
    write_snapshot(path, small, small.constant(0.0))
    with pytest.raises(ConfigError):
        read_snapshot(path, big)
    with pytest.raises(ConfigError):
        read_snapshot(tmp_path / "missing.csv", small)
