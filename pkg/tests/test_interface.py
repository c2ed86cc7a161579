from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from flatflow.flow import FlowConfig, initial_field, run_flow
from flatflow.grid import ScalarField, make_grid
from flatflow.interface import (
    EmptyInterface,
    InterfaceSnapshot,
    cone_check,
    extract_interface,
    fit_speed_bounds,
    ray_directions,
    read_interface_csv,
    support_check,
    write_interface_csv,
)


@pytest.mark.parametrize("dim", [2, 3])
def test_ray_sets_are_unit(dim):
    d = ray_directions(dim)
    assert d.shape == ((64, 2) if dim == 2 else (128, 3))
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.allclose(d.mean(axis=0), 0.0, atol=1e-2)


def test_generator_radii():
    cfg = FlowConfig(dim=2, points_per_axis=129, nondegeneracy=1.0)
    field = initial_field(cfg)
    h = field.grid.spacing
    snap = extract_interface(field, (0.1, 0.3))
    # bilinear sampling can see positivity up to a cell diagonal inside the disc,
    # and the crossing sits at most one quarter-cell ray step before that
    assert np.all(snap.gamma <= cfg.flat_radius + 1e-12)
    assert np.all(snap.gamma >= cfg.flat_radius - (np.sqrt(2) + 0.25) * h)
    for eps in (0.1, 0.3):
        # λ u²(1+u) = ε²/2
        u = brentq(lambda u: u * u * (1 + u) - 0.5 * eps * eps, 0.0, 1.0)
        assert np.all(np.abs(snap.gamma_eps[eps] - (cfg.flat_radius + u)) <= 0.05 * h)
    assert snap.nested()
    assert snap.flat_measure == pytest.approx(np.pi * 0.25, rel=0.05)
    radial = snap.directions
    assert np.all(np.einsum("ij,ij->i", snap.normals, radial) > 0.999)


def test_vanished_flat_side_raises():
    grid = make_grid(2, 1.0, 33)
    with pytest.raises(EmptyInterface):
        extract_interface(ScalarField(grid, grid.radius() ** 2 + 1.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.6), st.floats(0.2, 3.0), st.lists(st.floats(0.05, 0.9), min_size=1, max_size=3))
def test_levels_always_nest(rho, lam, eps):
    grid = make_grid(2, 1.2, 65)
    u = np.maximum(grid.radius() - rho, 0.0)
    snap = extract_interface(ScalarField(grid, lam * u * u), eps)
    assert snap.nested()


def synthetic_history(rates, gamma0=0.5, times=np.linspace(0.01, 0.05, 9)):
    rates = np.asarray(rates, dtype=float)
    out = []
    for t in times:
        gam = gamma0 * np.exp(-rates * t)
        out.append(InterfaceSnapshot(float(t), np.zeros((0,)), gam, {0.1: gam + 0.05}, np.nan, np.zeros((0,))))
    return out


def test_speed_fit_recovers_rates():
    rep = fit_speed_bounds(synthetic_history([2.0, 3.0, 5.0]), t0=0.01)
    assert np.allclose(rep.slopes, [-2.0, -3.0, -5.0])
    assert rep.lower_env == pytest.approx(-5.0)
    assert rep.upper_env == pytest.approx(-2.0)
    assert rep.finite_constant == pytest.approx(1 / (0.01 * 5.0))
    assert rep.pass_finite and rep.pass_nondegenerate
    assert 0.1 in rep.eps_lower_env


def test_speed_fit_flags():
    stalled = fit_speed_bounds(synthetic_history([0.0, 1.0]), t0=0.01)
    assert not stalled.pass_nondegenerate
    racing = fit_speed_bounds(synthetic_history([80.0, 1.0]), t0=0.01)
    assert not racing.pass_finite


def test_speed_fit_preconditions():
    with pytest.raises(ValueError):
        fit_speed_bounds(synthetic_history([1.0])[:5], t0=0.01)
    with pytest.raises(ValueError):
        fit_speed_bounds(synthetic_history([1.0]), t0=0.0)


def test_support_and_cone_on_generator():
    cfg = FlowConfig(dim=2, points_per_axis=129)
    field = initial_field(cfg)
    rep = support_check(field, cfg.flat_radius)
    assert rep.passed
    assert rep.min_support >= cfg.flat_radius - 1e-9
    # radial normals within 0.1 of the base point tilt by at most asin(0.1/0.5)
    assert cone_check(field, [cfg.flat_radius, 0.0], 0.1) >= np.cos(np.arcsin(0.2)) - 0.02


def test_interface_csv_round_trip(tmp_path):
    cfg = FlowConfig(dim=2, points_per_axis=65, t_end=0.01)
    snaps = []
    run_flow(cfg, on_output=lambda a, b: snaps.append(extract_interface(a, (0.1, 0.2))), output_times=[0.0, 0.005, 0.01])
    write_interface_csv(snaps, tmp_path / "i.csv")
    back = read_interface_csv(tmp_path / "i.csv")
    assert [s.time for s in back] == [s.time for s in snaps]
    for a, b in zip(snaps, back):
        assert np.array_equal(a.gamma, b.gamma)
        assert set(b.gamma_eps) == {0.1, 0.2}
        assert np.array_equal(a.gamma_eps[0.2], b.gamma_eps[0.2])
