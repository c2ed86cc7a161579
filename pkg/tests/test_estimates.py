from __future__ import annotations

import math

import numpy as np
import pytest

from flatflow.estimates import (
    BandStats,
    band_stats,
    estimates_report,
    monge_ampere_band_check,
    pressure_crosscheck,
    radial_band_stats,
    read_estimates_csv,
    refinement_changes,
    write_estimates_csv,
)
from flatflow.flow import FlowConfig, initial_field, radial_profile, radial_run, run_flow


@pytest.fixture(scope="module")
def short_run():
    cfg = FlowConfig(dim=3, points_per_axis=49, t_end=0.02)
    pairs = []
    run_flow(cfg, on_output=lambda a, b: pairs.append((a, b)), output_times=np.linspace(0, 0.02, 6))
    return cfg, pairs


def test_grid_and_radial_monitors_agree(short_run):
    # two independent discretisations of the same band quantities
    cfg, pairs = short_run
    radial = radial_run(radial_profile(cfg), [a.time for a, _ in pairs])
    for (a, b), (ra, rb) in zip(pairs[1:], radial[1:]):
        g = band_stats(a, b)
        r = radial_band_stats(ra, rb)
        assert g.grad_min == pytest.approx(r.grad_min, rel=0.1)
        assert g.grad_max == pytest.approx(r.grad_max, rel=0.1)
        assert g.gt_min == pytest.approx(r.gt_min, rel=0.15)


def test_generator_band_values():
    # g = sqrt(2λ) u sqrt(1+u): at the band bottom g' ≈ sqrt(2λ)
    cfg = FlowConfig(dim=3, points_per_axis=65)
    prof = radial_profile(cfg, samples=2001)
    after = radial_run(prof, [0.0])[0][1]
    st = radial_band_stats(prof, after)
    assert st.grad_min == pytest.approx(math.sqrt(2.0) * 1.03, rel=0.02)
    assert st.f_tn_over_sqrtg_max == 0.0
    assert not st.sparse
    assert st.gt_min > 0


def test_band_validation(short_run):
    _, pairs = short_run
    a, b = pairs[1]
    with pytest.raises(ValueError):
        band_stats(a, b, (0.5, 0.1))
    with pytest.raises(ValueError):
        band_stats(b, a)
    with pytest.raises(ValueError):
        band_stats(a, pairs[2][0])
    with pytest.raises(ValueError):
        band_stats(a, b, (0.0, 1e-9))


def test_report_flags_and_refinement(short_run):
    _, pairs = short_run
    stats = [band_stats(a, b) for a, b in pairs]
    rep = estimates_report(stats, 0.02)
    for key in ("gradient", "gt_positive", "tangential_laplacian", "decay", "r2_lower_bound", "speed_ratio"):
        assert rep[key]["pass"], key
    assert rep["speed_ratio"]["spread"] >= 1.0
    same = refinement_changes(rep, rep)
    assert all(v == 0.0 for v in same.values())
    with pytest.raises(ValueError):
        estimates_report([], 0.02)


def test_csv_round_trip(tmp_path, short_run):
    _, pairs = short_run
    stats = [band_stats(a, b) for a, b in pairs]
    write_estimates_csv(stats, tmp_path / "e.csv")
    back = read_estimates_csv(tmp_path / "e.csv")
    assert back == stats
    assert isinstance(back[0], BandStats)


def test_monge_ampere_on_generator():
    rep = monge_ampere_band_check(initial_field(FlowConfig(dim=3, points_per_axis=65)))
    assert rep.passed and rep.ratio_min > 0


def test_forward_difference_agrees_with_pressure_speed(short_run):
    _, pairs = short_run
    a, b = pairs[2]
    assert pressure_crosscheck(a, b) < 0.05
