from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatflow.grid import ScalarField, make_grid
from flatflow.hodograph import (
    INVERTERS,
    MONITORED,
    HodographPatch,
    PatchError,
    build_patch,
    dictionary_check,
    dictionary_from_h,
    dilate,
    g_jets_at_patch,
    half_box_mask,
    holder_seminorm_of,
    holder_seminorms,
    pressure_field,
    s_distance,
    s_distances,
    write_holder_report,
    write_patch_csv,
)

GRID = make_grid(2, 1.0, 81)
X = GRID.coordinates()
TIMES = (0.0, 0.01, 0.02, 0.03, 0.04)
ETA = 0.2  # y offsets step η/8 = 0.025, one grid cell, so lines run through nodes


def tilt(x, t):
    return 1.5 * (x[..., 0] - 0.3) + 0.4 * x[..., 1] + 2.0 * t


def bowl(x, t):
    return x[..., 0] - 0.3 + 0.5 * x[..., 1] ** 2 + t


def history(fn):
    return [ScalarField(GRID, fn(X, t), t) for t in TIMES]


@pytest.fixture(scope="module")
def tilt_patch():
    hist = history(tilt)
    return build_patch(hist, (0.3, 0.0), ETA), hist


def exact_tilt_h(z, y, t):
    return 0.3 + (z - 0.4 * y - 2.0 * t) / 1.5


def test_tilted_plane_inverts_exactly(tilt_patch):
    patch, _ = tilt_patch
    z, y, t = patch.mesh()
    assert patch.h_values.shape == (17, 17, 5)
    assert np.max(np.abs(patch.h_values - exact_tilt_h(z, y, t))) < 1e-12
    d = patch.derivatives
    assert np.allclose(d["z"], 1 / 1.5)
    assert np.allclose(d["y"][0], -0.4 / 1.5)
    assert np.allclose(d["t"], -2.0 / 1.5)
    assert np.allclose(patch.calI, (1 / 1.5) ** 2 + z**2 + z**2 * (0.4 / 1.5) ** 2)


@pytest.mark.parametrize("fn", [tilt, bowl], ids=["tilt", "bowl"])
def test_dictionary_round_trip_on_closed_forms(fn):
    hist = history(fn)
    patch = build_patch(hist, (0.3, 0.0), ETA)
    rep = dictionary_check(patch, g_jets_at_patch(patch, hist), z_from=0.0, interior_only=False, y_reach=np.inf)
    assert rep.worst <= 1e-8
    assert rep.passed
    assert set(rep.mismatch) == {"g_t", "g_1", "g_11", "g_2", "g_12", "g_22"}


def test_bowl_dictionary_values():
    # g = x₁ - 0.3 + y²/2 + t: h = 0.3 + z - y²/2 - t
    patch = build_patch(history(bowl), (0.3, 0.0), ETA)
    implied = dictionary_from_h(patch)
    _, y, _ = patch.mesh()
    assert np.allclose(implied["g_1"], 1.0)
    assert np.allclose(implied["g_2"], y, atol=1e-9)
    assert np.allclose(implied["g_22"], 1.0, atol=1e-8)
    assert np.allclose(implied["g_t"], 1.0)


def test_injected_error_is_detected(tilt_patch):
    patch, hist = tilt_patch
    jets = g_jets_at_patch(patch, hist)
    z = patch.z_samples.reshape(-1, 1, 1)
    h0 = patch.h_values[:1]
    # h_z scaled by 1.1
    bad = HodographPatch(patch.z_samples, patch.y_axes, patch.times, h0 + 1.1 * (patch.h_values - h0), patch.frame, patch.eta)
    rep = dictionary_check(bad, jets, z_from=0.0)
    assert not rep.passed
    assert rep.mismatch["g_1"] > 0.05
    assert np.allclose(z, patch.mesh()[0][:, :1, :1])


@pytest.mark.parametrize("method", sorted(INVERTERS))
def test_inverters_agree_on_linear_lines(method):
    patch = build_patch(history(tilt), (0.3, 0.0), ETA, method=method)
    z, y, t = patch.mesh()
    assert np.max(np.abs(patch.h_values - exact_tilt_h(z, y, t))) < 1e-10


def test_patch_errors():
    with pytest.raises(PatchError, match="no flat sample"):
        build_patch(history(lambda x, t: x[..., 0] + 2.0), (0.3, 0.0), ETA)
    with pytest.raises(PatchError, match="never becomes positive"):
        build_patch(history(lambda x, t: -np.ones(x.shape[:-1])), (0.3, 0.0), ETA)
    fold = lambda x, t: (x[..., 0] - 0.3) * (1.0 - 30.0 * (x[..., 0] - 0.3))  # noqa: E731
    with pytest.raises(PatchError, match="not increasing|too short"):
        build_patch(history(fold), (0.3, 0.0), ETA)
    with pytest.raises(ValueError, match=">= 3 fields"):
        build_patch(history(tilt)[:2], (0.3, 0.0), 0.05)


def test_pressure_field_clips_roundoff():
    f = ScalarField(GRID, np.where(X[..., 0] > 0, 0.5 * X[..., 0] ** 2, -1e-17), 0.0)
    g = pressure_field(f)
    assert np.all(g.values >= 0)
    assert np.allclose(g.values, np.maximum(X[..., 0], 0.0))


# --------------------------------------------------------------- distance


def test_distance_examples():
    assert s_distance((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)) == 0.0
    assert s_distance((1.0, 0.0, 0.0), (0.0, 0.0, 0.0)) == 1.0
    assert s_distance((0.0, 0.0, 1.0), (0.0, 0.0, 0.0)) == 1.0
    assert s_distance((0.25, [0.3, 0.4], 0.09), (0.0, [0.0, 0.0], 0.0)) == pytest.approx(0.5 + 0.5 + 0.3)
    with pytest.raises(ValueError):
        s_distance((-0.1, 0.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        s_distances(np.array([-1.0]), np.zeros((1, 1)), np.zeros(1), np.zeros(1), np.zeros((1, 1)), np.zeros(1))


point = st.tuples(st.floats(0.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(point, point, point)
def test_distance_is_a_metric(p, q, r):
    assert s_distance(p, q) == pytest.approx(s_distance(q, p))
    assert s_distance(p, r) <= s_distance(p, q) + s_distance(q, r) + 1e-12
    assert s_distance(p, p) == 0.0


def test_triangle_inequality_bulk():
    rng = np.random.default_rng(0)
    n = 100_000
    z = rng.random((3, n))
    y = rng.uniform(-1, 1, (3, n, 2))
    t = rng.random((3, n))
    ab = s_distances(z[0], y[0], t[0], z[1], y[1], t[1])
    bc = s_distances(z[1], y[1], t[1], z[2], y[2], t[2])
    ac = s_distances(z[0], y[0], t[0], z[2], y[2], t[2])
    assert np.all(ac <= ab + bc + 1e-12)


# --------------------------------------------------------------- seminorms


def test_half_box(tilt_patch):
    patch, _ = tilt_patch
    mask = half_box_mask(patch)
    z, y, t = patch.mesh()
    assert z[mask].max() <= ETA**2 / 4 + 1e-15
    assert np.abs(y[mask]).max() <= ETA / 2 + 1e-12
    assert t[mask].min() >= TIMES[-1] - ETA**2 / 4 - 1e-15
    assert mask.sum() == 5 * 9 * 2


def test_linear_patch_has_zero_seminorms(tilt_patch):
    patch, _ = tilt_patch
    rep = holder_seminorms(patch)
    assert set(rep.seminorms) == set(MONITORED)
    for name in ("h_t", "h_y", "h_z", "h_yy"):
        assert rep.seminorms[name] < 1e-9
    assert not rep.sparse
    assert rep.to_dict()["pair_count"] == 10_000


def test_constant_and_square_root(tilt_patch):
    patch, _ = tilt_patch
    z = patch.mesh()[0]
    assert holder_seminorm_of(np.full(z.shape, 3.0), patch, 0.25) == 0.0
    # |√z₁ - √z₂| <= s, with equality when y and t agree
    assert holder_seminorm_of(np.sqrt(z), patch, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_seminorm_grows_with_alpha(tilt_patch):
    # the half box has s-diameter 2η <= 1, so s^α falls as α rises
    patch, _ = tilt_patch
    rng = np.random.default_rng(1)
    values = rng.random(patch.h_values.shape)
    seq = [holder_seminorm_of(values, patch, a, seed=5) for a in (0.1, 0.25, 0.5, 1.0)]
    assert all(b >= a for a, b in zip(seq, seq[1:]))


def test_seminorm_arguments(tilt_patch):
    patch, _ = tilt_patch
    with pytest.raises(ValueError):
        holder_seminorms(patch, pairs=99)
    with pytest.raises(ValueError):
        holder_seminorms(patch, alpha=0.0)
    with pytest.raises(ValueError):
        holder_seminorms(patch, alpha=1.5)
    assert holder_seminorms(patch, pairs=100).sparse


def test_seminorms_are_seeded(tilt_patch):
    patch, _ = tilt_patch
    z = patch.mesh()[0]
    values = np.sin(40 * z)
    assert holder_seminorm_of(values, patch, 0.5, seed=3) == holder_seminorm_of(values, patch, 0.5, seed=3)


# ---------------------------------------------------------------- dilation


def synthetic_patch(fn, eta=0.4, count=17):
    z = np.linspace(0.0, eta * eta, count)
    y = np.linspace(-eta, eta, count)
    t = np.linspace(1.0 - eta * eta, 1.0, count)
    mesh = np.meshgrid(z, y, t, indexing="ij")
    return HodographPatch(z, (y,), t, fn(*mesh), np.eye(2), eta)


def test_dilation_identity():
    patch = synthetic_patch(lambda z, y, t: np.sin(z) + y**3 + np.cos(t))
    mu = 0.1
    out = dilate(patch, 1.0, center=(0.0, 0.0, 1.0), mu=mu)
    z, y, t = out.mesh()
    assert np.allclose(out.h_values, np.sin(z) + y**3 + np.cos(1.0 + t), atol=1e-6)


def test_dilation_of_height():
    # h = z gives h^r = (r² + r² z) / r² = 1 + z
    patch = synthetic_patch(lambda z, y, t: z)
    for r in (0.25, 0.3):
        out = dilate(patch, r)
        assert np.allclose(out.h_values, 1.0 + out.mesh()[0], atol=1e-12)


def test_dilation_derivative_scaling():
    a, b, c, q = 0.7, 0.3, -0.2, 0.5
    patch = synthetic_patch(lambda z, y, t: a * z + b * y + c * t + q * y**2)
    r = 0.3
    out = dilate(patch, r, mu=0.5)
    d = out.derivatives
    y = out.mesh()[1]
    assert np.allclose(d["z"], a, atol=1e-9)
    assert np.allclose(d["t"], c, atol=1e-9)
    assert np.allclose(d["y"][0], b / r + 2 * q * y, atol=1e-9)
    assert np.allclose(d["yy"][0][0], 2 * q, atol=1e-7)


def test_dilation_arguments():
    patch = synthetic_patch(lambda z, y, t: z)
    with pytest.raises(ValueError):
        dilate(patch, 0.0)
    with pytest.raises(ValueError):
        dilate(patch, 1.0)  # the default centre z = 1 lies above the patch


def test_patch_and_report_files(tmp_path, tilt_patch):
    patch, _ = tilt_patch
    write_patch_csv(patch, tmp_path / "patch.csv")
    rows = (tmp_path / "patch.csv").read_text().splitlines()
    assert rows[0] == "z,y2,t,h,calI"
    assert len(rows) == 1 + patch.h_values.size
    write_holder_report(tmp_path / "h.json", [holder_seminorms(patch)], {"eta": ETA})
    data = json.loads((tmp_path / "h.json").read_text())
    assert data["eta"] == ETA and data["reports"][0]["alpha"] == 0.25
