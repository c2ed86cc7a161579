from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatflow.curvature import flow_rhs_fast, parabolicity
from flatflow.flow import (
    BoundaryProximity,
    CFLViolation,
    ConfigError,
    FlowConfig,
    RadialProfile,
    ScalingParams,
    comparison_check,
    evolve_radial,
    generator_profile,
    grid_speed,
    initial_field,
    load_history,
    embed_profile,
    radial_profile,
    radial_run,
    radial_speed,
    run_flow,
    save_history,
    scale_function,
    step_full,
    step_radial,
    supersolution_margin,
)
from flatflow.grid import ScalarField, make_grid, stencil_jets


def bumpy_field(dim, n, seed=0):
    cfg = FlowConfig(dim=dim, points_per_axis=n)
    field = initial_field(cfg)
    noise = np.random.default_rng(seed).random(field.values.shape) ** 2
    return field.with_values(field.values + 0.1 * noise)


@pytest.mark.parametrize("dim,n", [(2, 33), (3, 21)])
def test_compiled_speed_matches_numpy_route(dim, n):
    field = bumpy_field(dim, n)
    rhs, lam = grid_speed(field)
    jets = stencil_jets(field.values, field.grid.spacing)
    ref = flow_rhs_fast(jets.gradient, jets.hessian)
    ref_lam = np.trace(parabolicity(jets.gradient, jets.hessian), axis1=-2, axis2=-1)
    assert np.max(np.abs(rhs - ref)) <= 1e-12 * np.abs(ref).max()
    assert np.max(np.abs(lam - ref_lam)) <= 1e-12 * np.abs(ref_lam).max()


@pytest.mark.parametrize("n", [65, 129])
def test_radial_speed_matches_grid_on_axis(n):
    # the two discretisations agree to O(h²) away from the kink at the flat edge
    cfg = FlowConfig(dim=3, points_per_axis=n)
    field = initial_field(cfg)
    prof = radial_profile(cfg)
    h = cfg.grid().spacing
    rhs, _ = grid_speed(field)
    rad, _ = radial_speed(prof)
    c = field.grid.center_index
    # interior row c-1.. holds nodes c..; radial samples 1..c-2 sit on nodes c+1..
    gap = np.abs(rhs[c - 1, c - 1, c:-1] - rad[1 : c - 1])
    away = np.abs(prof.r_samples[1 : c - 1] - cfg.flat_radius) > 3 * h
    assert gap[away].max() <= 2 * h * h


def test_one_step_radial_vs_grid_within_two_h_squared():
    cfg = FlowConfig(dim=3, points_per_axis=65)
    field = initial_field(cfg)
    prof = radial_profile(cfg)
    h = field.grid.spacing
    rhs, lam = grid_speed(field)
    dt = 0.4 * h * h / float(lam.max())
    grid_next = step_full(field, dt, cfg)
    rad_next = step_radial(prof, dt)
    c = field.grid.center_index
    along = grid_next.values[c, c, c:-1]
    assert np.max(np.abs(along - rad_next.f_values[:-1])) <= 2 * h * h


def test_shrinking_sphere_short_run():
    # R³ = R₀³ - 3·C(3,2)·t; the outer value is driven by the exact sphere
    r0, rd, samples, t_end = 2.0, 1.75, 513, 0.05
    r = np.linspace(0.0, rd, samples)
    prof = RadialProfile(r, r0 - np.sqrt(r0**2 - r**2), 0.0, 3)

    def exact_radius(t):
        return (r0**3 - 9.0 * np.asarray(t)) ** (1 / 3)

    out, info = evolve_radial(prof, t_end, cfl=0.49, boundary=lambda t: r0 - np.sqrt(exact_radius(t) ** 2 - rd**2))
    radius = r0 - out.f_values[0]
    assert radius**3 == pytest.approx(r0**3 - 9.0 * t_end, rel=1e-3)
    assert info["repairs"] == 0


def test_fixed_dt_above_limit_aborts():
    cfg = FlowConfig(dim=2, points_per_axis=33, fixed_dt=1.0, t_end=0.01)
    with pytest.raises(CFLViolation):
        run_flow(cfg)
    field = initial_field(cfg)
    with pytest.raises(CFLViolation):
        step_full(field, 1.0, cfg)


def test_boundary_proximity_aborts():
    cfg = FlowConfig(dim=2, points_per_axis=33, extent=0.7, flat_radius=0.6, t_end=0.01)
    with pytest.raises(BoundaryProximity):
        run_flow(cfg)


@pytest.mark.parametrize(
    "kw", [dict(dim=4), dict(flat_radius=2.0), dict(nondegeneracy=0.0), dict(t_end=0.0), dict(cfl=1.5), dict(points_per_axis=16)]
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        FlowConfig(**kw)


def test_output_times_hit_exactly_and_field_grows():
    times = np.linspace(0.0, 0.02, 5)
    cfg = FlowConfig(dim=2, points_per_axis=33, t_end=0.02)
    hist = run_flow(cfg, output_times=times)
    assert np.allclose(hist.times, times, atol=1e-14)
    for a, b in zip(hist.snapshots, hist.snapshots[1:]):
        assert np.all(b.values >= a.values)
    for snap, partner in zip(hist.snapshots, hist.partners):
        assert partner.meta["step"] == snap.meta["step"] + 1
    h = cfg.grid().spacing
    ratios = np.array(hist.dts) * np.array(hist.parabolicity) / h**2
    assert ratios.max() <= cfg.cfl * (1 + 1e-12)


def test_history_round_trip(tmp_path):
    cfg = FlowConfig(dim=2, points_per_axis=33, t_end=0.01)
    hist = run_flow(cfg, output_times=[0.0, 0.005, 0.01])
    save_history(hist, tmp_path)
    back = load_history(tmp_path)
    assert back.config == cfg
    assert back.dts == hist.dts
    for a, b in zip(hist.timeline(), back.timeline()):
        assert np.array_equal(a.values, b.values) and a.time == b.time


def test_radial_run_pairs_advance():
    cfg = FlowConfig(dim=3, points_per_axis=65)
    pairs = radial_run(radial_profile(cfg), [0.0, 0.01, 0.02])
    assert [round(a.time, 12) for a, _ in pairs] == [0.0, 0.01, 0.02]
    for a, b in pairs:
        assert b.time > a.time and np.all(b.f_values >= a.f_values)
    radii = [a.interface_radius() for a, _ in pairs]
    assert radii[0] > radii[1] > radii[2]


def test_radial_profile_validation():
    with pytest.raises(ValueError):
        RadialProfile(np.array([0.1, 0.2, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        RadialProfile(np.linspace(0, 1, 5), -np.ones(5))
    uneven = RadialProfile(np.array([0.0, 0.1, 0.3, 0.4]), np.zeros(4))
    with pytest.raises(ValueError):
        radial_speed(uneven)


# ------------------------------------------------------------ rescaling


def supersolution_threshold(delta0: float) -> float:
    # worst case Q = 0 (gradient along an axis): 4 - δ² = 35 s / (1 + s)
    return (4.0 - delta0**2) / (31.0 + delta0**2)


def test_threshold_oracle_frozen():
    assert supersolution_threshold(0.3) == pytest.approx(0.12576391122547443, rel=1e-14)


@pytest.mark.parametrize("delta0", [0.1, 0.3, 0.9])
def test_margin_changes_sign_at_threshold(delta0):
    params = ScalingParams(1.0, -(delta0**2), 8.0)
    s_star = supersolution_threshold(delta0)
    on_axis = lambda s: np.array([math.sqrt(s), 0.0, 0.0])  # noqa: E731
    assert abs(supersolution_margin(on_axis(s_star), params)) < 1e-12
    assert supersolution_margin(on_axis(0.99 * s_star), params) > 0
    assert supersolution_margin(on_axis(1.01 * s_star), params) < 0


def test_one_sixth_is_not_sufficient():
    params = ScalingParams(1.0, -0.09, 8.0)
    assert supersolution_margin(np.array([math.sqrt(1 / 6), 0.0, 0.0]), params) < 0


@settings(max_examples=80, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 2 * np.pi), st.floats(0.0, np.pi), st.floats(0.01, 0.99))
def test_margin_nonnegative_below_threshold(frac, phi, theta, delta0):
    params = ScalingParams(1.0, -(delta0**2), 8.0)
    s = frac * supersolution_threshold(delta0)
    p = math.sqrt(s) * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    assert supersolution_margin(p, params) >= -1e-12


def test_scaling_epsilon_range_and_identity():
    with pytest.raises(ValueError):
        ScalingParams(1.0, -0.1, 8.0, epsilon=0.1)
    cfg = FlowConfig(dim=2, points_per_axis=33, t_end=0.01)
    hist = run_flow(cfg, output_times=[0.0, 0.005, 0.01])
    same = scale_function(hist.snapshots, 0.005, ScalingParams(1.0, -0.1, 8.0, epsilon=0.0))
    assert np.array_equal(same.values, hist.snapshots[1].values)
    with pytest.raises(ValueError):
        scale_function(hist.snapshots, 0.02, ScalingParams(1.0, 0.0, 0.0))


def test_scaling_of_static_quadratic():
    # f = |x|² is mapped to (1+aε)²|x|² / (1+cε) exactly by bilinear sampling on nodes
    grid = make_grid(2, 1.0, 33)
    values = np.sum(grid.coordinates() ** 2, axis=-1)
    fields = [ScalarField(grid, values, 0.0), ScalarField(grid, values, 1.0)]
    params = ScalingParams(1.0, 0.0, 2.0, epsilon=0.01)
    region = grid.radius() < 0.5
    out = scale_function(fields, 0.5, params, region=region)
    expect = 1.01**2 * values / 1.02
    err = np.abs(out.values - expect)[region]
    assert err.max() < grid.spacing**2
    assert np.array_equal(out.values[~region], values[~region])


def test_comparison_of_ordered_generators():
    times = np.linspace(0.0, 0.02, 5)
    low = run_flow(FlowConfig(dim=2, points_per_axis=65, t_end=0.02, nondegeneracy=1.0), output_times=times)
    high = run_flow(FlowConfig(dim=2, points_per_axis=65, t_end=0.02, nondegeneracy=1.5), output_times=times)
    assert np.all(generator_profile(np.linspace(0, 2, 50), 0.5, 1.0) <= generator_profile(np.linspace(0, 2, 50), 0.5, 1.5))
    ordered = comparison_check(low.snapshots, high.snapshots)
    assert ordered.passed
    reversed_ = comparison_check(high.snapshots, low.snapshots)
    assert not reversed_.passed
    with pytest.raises(ValueError):
        comparison_check(low.snapshots[:2], high.snapshots[1:3])


def test_embed_profile_reproduces_generator():
    cfg = FlowConfig(dim=2, points_per_axis=65)
    grid = cfg.grid()
    with pytest.raises(ValueError):
        embed_profile(radial_profile(cfg), grid)
    r = np.linspace(0.0, 2.0, 801)
    prof = RadialProfile(r, generator_profile(r, cfg.flat_radius, cfg.nondegeneracy), 0.0, 2)
    embedded = embed_profile(prof, grid)
    assert np.max(np.abs(embedded.values - initial_field(cfg).values)) <= grid.spacing**2
