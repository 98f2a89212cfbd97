import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynreason.errors import InvalidSpecError, TrackingError
from dynreason.estimator import (
    EstimatedScene,
    EstimatorConfig,
    NoiseModel,
    ObjectObservation,
    ObservationSequence,
    derive_dynamics,
    fuse_map,
    fuse_yaw,
    fusion_weight,
    match_events,
    moving_average,
    position_rmse,
    synthesize_observations,
    track_scene,
)
from dynreason.scene import CollisionEvent, Vec3, dumps


def test_fuse_worked_case():
    assert fuse_map(1.0, 3.0, 4.0, 1.0) == pytest.approx(3.25)


@settings(max_examples=100)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 10), st.floats(0.01, 10))
def test_fuse_between_prior_and_observation(mu, z, vp, vo):
    x = float(fuse_map(mu, vp, z, vo))
    assert min(mu, z) - 1e-12 <= x <= max(mu, z) + 1e-12


def test_fuse_limits():
    assert fuse_map(1.0, math.inf, 4.0, 1.0) == 4.0
    assert fuse_map(1.0, 0.0, 4.0, 1.0) == 1.0
    assert fuse_map(1.0, 3.0, None, 1.0) == 1.0
    assert fusion_weight(1.0, 0.0) == 1.0
    with pytest.raises(InvalidSpecError):
        fusion_weight(math.inf, math.inf)
    with pytest.raises(InvalidSpecError):
        fusion_weight(-1.0, 1.0)


def test_fuse_yaw_wraps():
    x = float(fuse_yaw(math.pi - 0.1, 1.0, -math.pi + 0.1, 1.0))
    assert abs(abs(x) - math.pi) < 1e-9


def test_moving_average_impulse_response():
    x = np.zeros(21)
    x[10] = 1.0
    y = moving_average(x, 5)
    assert np.allclose(y[8:13], 0.2)
    assert np.count_nonzero(y) == 5
    with pytest.raises(InvalidSpecError):
        moving_average(x, 4)


def test_moving_average_boundary_truncated():
    y = moving_average(np.arange(5.0), 5)
    assert y[0] == pytest.approx(1.0)  # mean of 0, 1, 2


def test_derive_dynamics_constant_acceleration():
    dt, a0 = 1 / 60, 2.5
    t = np.arange(120) * dt
    x = np.stack([0.5 * a0 * t ** 2, 0.3 * t, np.zeros_like(t)], axis=1)
    v, a = derive_dynamics(x, dt)
    assert np.abs(a[6:-6, 0] - a0).max() < 1e-6
    assert np.abs(a[6:-6, 1]).max() < 1e-6
    assert np.abs(v[6:-6, 1] - 0.3).max() < 1e-9


def test_observation_noise_statistics(scenes):
    s = scenes[0]
    obs = synthesize_observations(s, NoiseModel(0.3, 0.05, 0.2, seed=1))
    gt = np.stack([t.positions for t in s.trajectories], axis=1)
    err = (obs.positions - gt)[obs.visible]
    assert 0.25 < err.std() < 0.35
    assert 0.12 < 1 - obs.visible.mean() < 0.28


def test_observation_jsonl_roundtrip_byte_identical(scenes):
    obs = synthesize_observations(scenes[1], NoiseModel())
    text = obs.to_jsonl()
    back = ObservationSequence.from_jsonl(text)
    assert back.to_jsonl() == text
    assert np.array_equal(back.visible, obs.visible)


def test_zero_noise_tracks_exactly(scenes):
    s = scenes[2]
    est = track_scene(synthesize_observations(s, NoiseModel(0.0, 0.0, 0.0)))
    assert position_rmse(est, s) < 1e-9


def test_prior_reduces_rmse(scenes):
    prior, base = [], []
    for s in scenes:
        obs = synthesize_observations(s, NoiseModel())
        prior.append(position_rmse(track_scene(obs), s))
        base.append(position_rmse(track_scene(obs, EstimatorConfig(use_prior=False)), s))
    assert np.mean(prior) < 0.8 * np.mean(base)


def test_baseline_holds_last_estimate(scenes):
    s = scenes[0]
    obs = synthesize_observations(s, NoiseModel())
    est = track_scene(obs, EstimatorConfig(use_prior=False))
    assert est.velocity_states is None
    T, n = obs.visible.shape
    for i in range(n):
        for t in range(1, T):
            if obs.visible[t, i]:
                assert np.array_equal(est.posteriors[t, i], obs.positions[t, i])
            elif obs.visible[:t, i].any():
                assert np.array_equal(est.posteriors[t, i], est.posteriors[t - 1, i])


def test_late_first_observation_backfilled(scenes):
    s = scenes[0]
    obs = synthesize_observations(s, NoiseModel(0.0, 0.0, 0.0))
    vis = obs.visible.copy()
    vis[:5, 0] = False
    pos = obs.positions.copy()
    pos[:5, 0] = np.nan
    yaws = obs.yaws.copy()
    yaws[:5, 0] = np.nan
    obs2 = ObservationSequence(obs.scene_id, obs.ids, pos, yaws, vis, obs.config, 0.0, 0.0, obs.labels)
    est = track_scene(obs2)
    assert np.isfinite(est.posteriors).all()


def test_never_observed_object_raises(scenes):
    s = scenes[0]
    obs = synthesize_observations(s, NoiseModel())
    vis = obs.visible.copy()
    vis[:, 0] = False
    pos = obs.positions.copy()
    pos[:, 0] = np.nan
    yaws = obs.yaws.copy()
    yaws[:, 0] = np.nan
    with pytest.raises(TrackingError):
        track_scene(ObservationSequence(obs.scene_id, obs.ids, pos, yaws, vis, obs.config, 0.3, 0.05, obs.labels))


def test_estimated_scene_json_roundtrip(scenes):
    import json
    est = track_scene(synthesize_observations(scenes[3], NoiseModel()))
    text = dumps(est.to_json())
    back = EstimatedScene.from_json(json.loads(text))
    assert dumps(back.to_json()) == text
    assert np.allclose(back.velocity_states, est.velocity_states)


def test_config_inf_roundtrip():
    c = EstimatorConfig(prior_variance=math.inf)
    assert EstimatorConfig.from_json(c.to_json()).prior_variance == math.inf
    with pytest.raises(InvalidSpecError):
        EstimatorConfig(window=4)


def test_observation_invariants():
    with pytest.raises(InvalidSpecError):
        ObjectObservation(True)
    with pytest.raises(InvalidSpecError):
        NoiseModel(p_drop=1.0)


def test_match_events_tolerance():
    def ev(f, a, b):
        return CollisionEvent(f, a, b, Vec3(0.0, 0.0, 0.0), 1.0)
    truth = [ev(10, 0, 1), ev(40, 0, 1)]
    assert match_events([ev(14, 0, 1), ev(46, 0, 1)], truth) == 1
    assert match_events([ev(10, 0, 2)], truth) == 0
    assert match_events([ev(11, 0, 1), ev(12, 0, 1)], truth) == 1
