"""Transport operations: plan chaining, interpolation sweeps, cycles,
and barycentric grids. The bitwise assertions matter: pure-class frames
must reuse the exact single-class computation, not approximate it."""

import numpy as np
import pytest

from gaf.model import GafConfig, VelocityQuery, build_model, velocity
from gaf.sampler import make_grid
from gaf.transport import (TransportLeg, TransportPlan, barycentric_grid,
                           barycentric_grid_weights, chained_cycle_transport,
                           cross_class_transport, cyclic_transport, encode,
                           execute_plan, generate, interpolate_pair,
                           square_to_simplex)


@pytest.fixture(scope="module")
def toy():
    """Small model with random heads so every class field is distinct."""
    cfg = GafConfig(trunk_width=16, trunk_depth=2, time_embed_size=8,
                    num_classes=3, head_hidden=12, head_init="random", seed=9)
    return build_model(cfg)


def latents(n=4, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 2)).astype(np.float32)


# --- plans -------------------------------------------------------------------

def test_execute_plan_chains_leg_states(toy):
    plan = TransportPlan(legs=[
        TransportLeg(weights=(1.0, 0.0, 0.0), direction="forward", n_steps=6),
        TransportLeg(weights=(0.0, 1.0, 0.0), direction="reverse", n_steps=6),
    ])
    z = latents()
    trajs = execute_plan(toy, z, plan)
    assert len(trajs) == 2
    np.testing.assert_array_equal(trajs[0].states[0], z)
    np.testing.assert_array_equal(trajs[1].states[0], trajs[0].final)


def test_execute_plan_rejects_empty_plan(toy):
    with pytest.raises(ValueError, match="legs"):
        execute_plan(toy, latents(), TransportPlan(legs=[]))


def test_transport_leg_query_roundtrip():
    leg = TransportLeg(weights=(0.25, 0.75, 0.0))
    np.testing.assert_array_equal(leg.query().weights, [0.25, 0.75, 0.0])


# --- generate / encode -------------------------------------------------------

def test_generate_equals_manual_integration(toy):
    from gaf.sampler import euler_integrate
    z = latents()
    out = generate(toy, 1, z, n_steps=8)
    grid = make_grid(8, direction="forward")
    manual = euler_integrate(toy, z, grid, VelocityQuery.single(1, 3)).final
    assert out.tobytes() == manual.tobytes()


def test_encode_inverts_generate_approximately(toy):
    z = latents(n=8, seed=3)
    x = generate(toy, 0, z, n_steps=400)
    z_back = encode(toy, 0, x, n_steps=400)
    err = np.abs(z_back - z).max()
    assert err < 0.05, err


def test_encode_roundtrip_error_shrinks_with_steps(toy):
    z = latents(n=8, seed=3)
    errs = []
    for n in (25, 100, 400):
        x = generate(toy, 0, z, n_steps=n)
        z_back = encode(toy, 0, x, n_steps=n)
        errs.append(np.abs(z_back - z).max())
    assert errs[2] < errs[1] < errs[0]


def test_generate_return_trajectory_flag(toy):
    z = latents()
    traj = generate(toy, 0, z, n_steps=5, return_trajectory=True)
    assert traj.states.shape[0] == 6
    assert traj.final.tobytes() == generate(toy, 0, z, n_steps=5).tobytes()


# --- cross-class transport ---------------------------------------------------

def test_cross_class_transport_chains_encode_then_decode(toy):
    x = latents(n=6, seed=1)
    res = cross_class_transport(toy, x, 0, 2, n_steps=10)
    assert res.noise.tobytes() == encode(toy, 0, x, n_steps=10).tobytes()
    assert res.sample.tobytes() == generate(toy, 2, res.noise, n_steps=10).tobytes()


def test_cross_class_transport_rejects_same_class(toy):
    with pytest.raises(ValueError, match="distinct"):
        cross_class_transport(toy, latents(), 1, 1, n_steps=4)


# --- interpolation -----------------------------------------------------------

def test_interpolation_endpoints_are_bitwise_pure_class(toy):
    z = latents(n=3, seed=2)
    res = interpolate_pair(toy, 0, 2, z, alphas=5, n_steps=12)
    assert res.frames.shape == (5, 3, 2)
    pure_a = generate(toy, 0, z, n_steps=12)
    pure_b = generate(toy, 2, z, n_steps=12)
    assert res.frames[0].tobytes() == pure_a.tobytes()
    assert res.frames[-1].tobytes() == pure_b.tobytes()


def test_interpolation_accepts_explicit_alphas(toy):
    z = latents(n=2)
    res = interpolate_pair(toy, 0, 1, z, alphas=[0.0, 0.25, 1.0], n_steps=6)
    np.testing.assert_array_equal(res.alphas, [0.0, 0.25, 1.0])
    assert res.frames.shape[0] == 3


def test_interpolation_validation(toy):
    z = latents()
    with pytest.raises(ValueError, match="frames"):
        interpolate_pair(toy, 0, 1, z, alphas=1, n_steps=4)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        interpolate_pair(toy, 0, 1, z, alphas=[0.0, 1.5], n_steps=4)
    with pytest.raises(ValueError, match="nonempty"):
        interpolate_pair(toy, 0, 1, z, alphas=[], n_steps=4)


# --- cyclic transport --------------------------------------------------------

def test_cyclic_transport_closes_exactly(toy):
    z = latents(n=5, seed=4)
    res = cyclic_transport(toy, [0, 1, 2, 0], z, alpha_steps=4, n_steps=8)
    assert res.frames[0].sample.tobytes() == res.frames[-1].sample.tobytes()
    assert res.closure_distance == 0.0
    assert np.all(res.closure == 0.0)


def test_cyclic_transport_frame_count_and_weights(toy):
    z = latents(n=2)
    res = cyclic_transport(toy, [0, 1, 2, 0], z, alpha_steps=4, n_steps=4)
    # first leg emits 4 frames, later legs skip their duplicated start
    assert len(res.frames) == 4 + 3 + 3
    for f in res.frames:
        assert abs(f.weights.sum() - 1.0) < 1e-12
    np.testing.assert_array_equal(res.frames[0].weights, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(res.frames[-1].weights, [1.0, 0.0, 0.0])


def test_cycle_validation(toy):
    z = latents()
    with pytest.raises(ValueError, match="at least two legs"):
        cyclic_transport(toy, [0, 0], z, alpha_steps=3, n_steps=4)
    with pytest.raises(ValueError, match="return"):
        cyclic_transport(toy, [0, 1, 2], z, alpha_steps=3, n_steps=4)
    with pytest.raises(ValueError, match="consecutive"):
        cyclic_transport(toy, [0, 1, 1, 0], z, alpha_steps=3, n_steps=4)
    with pytest.raises(ValueError, match="range"):
        cyclic_transport(toy, [0, 5, 0], z, alpha_steps=3, n_steps=4)
    with pytest.raises(ValueError, match="alpha_steps"):
        cyclic_transport(toy, [0, 1, 0], z, alpha_steps=1, n_steps=4)


def test_chained_cycle_accumulates_then_shrinks_with_steps(toy):
    x0 = generate(toy, 0, latents(n=6, seed=7), n_steps=64)
    coarse = chained_cycle_transport(toy, [0, 1, 2, 0], x0, n_steps=8)
    fine = chained_cycle_transport(toy, [0, 1, 2, 0], x0, n_steps=64)
    assert coarse.closure_distance > 0.0
    assert fine.closure_distance < coarse.closure_distance
    assert len(coarse.leg_samples) == 3
    np.testing.assert_array_equal(coarse.start, x0)


# --- barycentric -------------------------------------------------------------

def test_square_to_simplex_corners_and_sum():
    assert square_to_simplex(1.0, 0.0) == (1.0, 0.0, 0.0)
    assert square_to_simplex(0.0, 0.0) == (0.0, 1.0, 0.0)
    assert square_to_simplex(0.3, 1.0) == (0.0, 0.0, 1.0)
    for u in np.linspace(0, 1, 7):
        for v in np.linspace(0, 1, 7):
            w = square_to_simplex(u, v)
            assert abs(sum(w) - 1.0) < 1e-12
            assert all(x >= 0.0 for x in w)
    with pytest.raises(ValueError, match="unit square"):
        square_to_simplex(1.2, 0.0)


def test_barycentric_grid_weights_shape_and_rows():
    w = barycentric_grid_weights(7)
    assert w.shape == (7, 7, 3)
    np.testing.assert_allclose(w.sum(axis=2), 1.0, atol=1e-12)
    with pytest.raises(ValueError, match="resolution"):
        barycentric_grid_weights(1)


def test_barycentric_corners_are_bitwise_pure_class(toy):
    z = latents(n=1, seed=6)[0]
    res = barycentric_grid(toy, (0, 1, 2), z, resolution=3, n_steps=6)
    assert res.samples.shape == (3, 3, 2)
    pure = [generate(toy, c, z, n_steps=6) for c in (0, 1, 2)]
    # (u=1, v=0) is the first-class corner, (0, 0) the second, v=1 the third
    assert res.samples[0, 2].tobytes() == pure[0].tobytes()
    assert res.samples[0, 0].tobytes() == pure[1].tobytes()
    assert res.samples[2, 0].tobytes() == pure[2].tobytes()
    assert res.samples[2, 2].tobytes() == pure[2].tobytes()


def test_barycentric_interior_velocity_is_weighted_sum(toy):
    g = np.random.default_rng(8)
    x = g.standard_normal((16, 2)).astype(np.float32)
    w = np.array(square_to_simplex(0.4, 0.3))
    full = np.zeros(3)
    full[:3] = w
    blend = velocity(toy, x, 0.45, VelocityQuery(full))
    parts = [velocity(toy, x, 0.45, VelocityQuery.single(c, 3)) for c in range(3)]
    manual = sum(w[c] * parts[c].astype(np.float64) for c in range(3))
    np.testing.assert_allclose(blend.astype(np.float64), manual, atol=1e-6)


def test_barycentric_validation(toy):
    z = latents(n=1)[0]
    with pytest.raises(ValueError, match="three distinct"):
        barycentric_grid(toy, (0, 1, 1), z, resolution=3, n_steps=4)
    with pytest.raises(ValueError, match="range"):
        barycentric_grid(toy, (0, 1, 7), z, resolution=3, n_steps=4)
