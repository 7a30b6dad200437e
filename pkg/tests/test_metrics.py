"""Distribution distances and model diagnostics.

The energy distance has a hand-loop oracle here since every later
quality gate leans on it; the rest are property checks with known
closed-form or constructed cases.
"""

import json

import numpy as np
import pytest

from gaf import rng
from gaf.data import make_dataset
from gaf.metrics import (EvalReport, antisymmetry_residual, centroid_accuracy,
                         endpoint_rmse, energy_distance, evaluate_model,
                         fit_centroids, sample_class, sliced_wasserstein,
                         transition_score)
from gaf.model import GafConfig, build_model


def clouds(seed=0, n=40, m=30, d=3):
    g = np.random.default_rng(seed)
    return g.standard_normal((n, d)), 0.5 + g.standard_normal((m, d))


# --- energy distance --------------------------------------------------------

def loop_energy(a, b):
    def mean_dist(x, y):
        acc = 0.0
        for p in x:
            for q in y:
                acc += float(np.sqrt(((p - q) ** 2).sum()))
        return acc / (len(x) * len(y))

    return 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)


def test_energy_matches_hand_loop():
    a, b = clouds(seed=1, n=17, m=13)
    assert energy_distance(a, b) == pytest.approx(loop_energy(a, b), rel=1e-12)


def test_energy_is_symmetric():
    a, b = clouds(seed=2)
    assert energy_distance(a, b) == pytest.approx(energy_distance(b, a), rel=1e-12)


def test_energy_on_singletons_is_twice_the_distance():
    p = np.array([[1.0, 2.0]])
    q = np.array([[4.0, 6.0]])
    assert energy_distance(p, q) == pytest.approx(10.0, abs=1e-12)


def test_energy_zero_on_identical_clouds():
    a, _ = clouds(seed=3)
    assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_energy_detects_mean_shift_and_scale():
    g = np.random.default_rng(4)
    base = g.standard_normal((500, 2))
    near = g.standard_normal((500, 2))
    shifted = g.standard_normal((500, 2)) + 3.0
    wide = 2.0 * g.standard_normal((500, 2))
    assert energy_distance(base, near) < 0.05
    assert energy_distance(base, shifted) > 1.0
    assert energy_distance(base, wide) > 0.2


def test_energy_scale_sanity():
    # doubling all coordinates doubles the distance, within 1e-9
    a, b = clouds(seed=5)
    assert energy_distance(2.0 * a, 2.0 * b) == pytest.approx(
        2.0 * energy_distance(a, b), abs=1e-9)


def test_energy_validation():
    with pytest.raises(ValueError, match="matching"):
        energy_distance(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="nonempty"):
        energy_distance(np.zeros((0, 2)), np.zeros((3, 2)))


# --- sliced Wasserstein -----------------------------------------------------

def test_sliced_w_zero_on_identical_clouds():
    a, _ = clouds(seed=6)
    assert sliced_wasserstein(a, a) == pytest.approx(0.0, abs=1e-12)


def test_sliced_w_on_shifted_1d_masses():
    # two point masses shifted by s have W2 = s along every direction;
    # averaging |projection| of unit directions over the sphere gives
    # a known factor, so just check monotonicity and positivity
    a = np.zeros((50, 2))
    b = np.full((50, 2), 1.0)
    small = sliced_wasserstein(a, 0.1 * b, n_projections=256)
    big = sliced_wasserstein(a, b, n_projections=256)
    assert 0.0 < small < big


def test_sliced_w_unit_deltas_in_1d():
    # point masses at 0 and 1 project to masses split by exactly 1 along
    # every unit direction in 1-d, so the mean W2 is exactly 1
    a = np.zeros((20, 1))
    b = np.ones((20, 1))
    assert sliced_wasserstein(a, b) == pytest.approx(1.0, abs=1e-12)


def test_sliced_w_translation_matches_projection_oracle():
    # translating a cloud by tau shifts each sorted projection by
    # <theta, tau>, so the metric equals the mean absolute projection
    # of tau over the same seeded directions
    g = np.random.default_rng(11)
    a = g.standard_normal((64, 2))
    tau = np.array([0.7, -0.4])
    got = sliced_wasserstein(a, a + tau, n_projections=32, seed=5)
    dirs = rng.stream(5, rng.METRIC, 0).standard_normal((32, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    want = float(np.mean(np.abs(dirs @ tau)))
    assert got == pytest.approx(want, abs=1e-9)


def test_sliced_w_is_seed_deterministic_and_unequal_sizes_work():
    a, b = clouds(seed=7, n=33, m=21)
    r1 = sliced_wasserstein(a, b, seed=9)
    r2 = sliced_wasserstein(a, b, seed=9)
    assert r1 == r2
    assert r1 > 0.0


def test_sliced_w_validation():
    a, b = clouds()
    with pytest.raises(ValueError, match="n_projections"):
        sliced_wasserstein(a, b, n_projections=0)


# --- classifier oracle -------------------------------------------------------

def test_centroids_and_transitions():
    pts = np.array([[0.0, 0.0], [0.2, 0.0], [2.0, 0.0], [2.2, 0.0]])
    labels = np.array([0, 0, 1, 1])
    cents = fit_centroids(pts, labels, 2)
    np.testing.assert_allclose(cents, [[0.1, 0.0], [2.1, 0.0]])
    assert centroid_accuracy(pts, labels, cents) == 1.0
    s = transition_score(np.array([[0.1, 0.0], [1.1, 0.0], [2.1, 0.0]]), cents, 0, 1)
    assert s[0] == pytest.approx(0.0, abs=1e-9)
    assert s[1] == pytest.approx(0.5, abs=1e-9)
    assert s[2] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(s) > 0)


def test_fit_centroids_requires_every_class():
    with pytest.raises(ValueError, match="no points"):
        fit_centroids(np.zeros((2, 2)), np.array([0, 0]), 2)


# --- model diagnostics -------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_setup():
    ds = make_dataset("gaussians", 2, 200, seed=1)
    cfg = GafConfig(trunk_width=16, trunk_depth=2, time_embed_size=8,
                    num_classes=2, head_hidden=8, seed=0)
    return build_model(cfg), ds


def test_endpoint_rmse_zero_init_bound(tiny_setup):
    """With zero residual heads J = (1-t_eps)x_t, so the J error is
    exactly t_eps (z_x - 2 z_y + t_eps(z_y - z_x)) per sample; the rmse
    must sit well under a loose multiple of t_eps."""
    model, ds = tiny_setup
    r_noise = endpoint_rmse(model, ds, "noise", t_eps=1e-3)
    r_data = endpoint_rmse(model, ds, "data", t_eps=1e-3)
    assert 0.0 < r_noise < 1e-2
    assert 0.0 < r_data < 1e-2


def test_endpoint_rmse_grows_with_t_eps(tiny_setup):
    model, ds = tiny_setup
    assert endpoint_rmse(model, ds, "noise", t_eps=1e-2) > endpoint_rmse(
        model, ds, "noise", t_eps=1e-3)


def test_endpoint_rmse_is_seed_deterministic(tiny_setup):
    model, ds = tiny_setup
    assert endpoint_rmse(model, ds, "noise", seed=4) == endpoint_rmse(
        model, ds, "noise", seed=4)
    with pytest.raises(ValueError, match="side"):
        endpoint_rmse(model, ds, "both")


def test_antisymmetry_zero_init_is_exactly_computable(tiny_setup):
    """Zero heads give v = (2t-1)x_t, hence v(t) + v(1-t) = 0 at every
    bridge point and the residual vanishes."""
    model, ds = tiny_setup
    assert antisymmetry_residual(model, ds) == pytest.approx(0.0, abs=1e-6)


def test_antisymmetry_positive_for_random_heads(tiny_setup):
    _, ds = tiny_setup
    cfg = GafConfig(trunk_width=16, trunk_depth=2, time_embed_size=8,
                    num_classes=2, head_hidden=8, head_init="random", seed=0)
    model = build_model(cfg)
    assert antisymmetry_residual(model, ds) > 0.01


def test_sample_class_shapes_and_determinism(tiny_setup):
    model, _ = tiny_setup
    a = sample_class(model, 0, 5, n_steps=4, seed=3)
    b = sample_class(model, 0, 5, n_steps=4, seed=3)
    c = sample_class(model, 1, 5, n_steps=4, seed=3)
    assert a.shape == (5, 2)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()  # per-class latent streams differ


def test_evaluate_model_report_roundtrip(tiny_setup):
    model, ds = tiny_setup
    held = make_dataset("gaussians", 2, 200, seed=2, stats=ds.stats)
    rep = evaluate_model(model, ds, held, n_per_class=40, n_steps=5)
    d = rep.to_json_dict()
    assert json.dumps(d)  # serializable
    assert len(d["per_class_energy"]) == 2
    assert d["pooled_energy"] > 0.0
    header = rep.csv_header()
    row = rep.csv_row()
    assert header.count(",") == row.count(",")
    assert header.startswith("dataset_kind")
    assert "energy_class1" in header


def test_eval_report_csv_formats_floats():
    rep = EvalReport(dataset_kind="gaussians", n_per_class=10, n_steps=5,
                     schedule="linear", seed=0, per_class_energy=[0.125, 0.25],
                     pooled_energy=1.0 / 3.0, pooled_sliced_w=0.5,
                     rmse_noise=0.01, rmse_data=0.02, antisymmetry=0.3)
    row = rep.csv_row()
    assert row.split(",")[5] == "0.33333333"
