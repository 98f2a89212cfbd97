import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynreason.errors import DomainError, InvalidSpecError
from dynreason.scene import (
    ANSWER_VOCAB,
    COLORS,
    SUBTYPES,
    Camera,
    Direction,
    ObjectSpec,
    Rotation,
    SceneAnnotation,
    VelocityState,
    direction_of,
    dumps,
    mass_of,
    velocity_state_of,
)


def test_vocabulary_sizes():
    assert len(SUBTYPES) == 21
    assert len(COLORS) == 8
    assert len(ANSWER_VOCAB) == 21 + 8 + 6 + 2


@pytest.mark.parametrize("speed,state", [(0.0, "static"), (0.05, "slow"), (3.0, "slow"), (3.0001, "fast"), (6.0, "fast")])
def test_velocity_state_thresholds(speed, state):
    assert velocity_state_of(speed) == VelocityState(state)


def test_velocity_state_eps_widens_static_band():
    assert velocity_state_of(0.05, eps=0.1) == VelocityState.STATIC


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf])
def test_velocity_state_rejects(bad):
    with pytest.raises(DomainError):
        velocity_state_of(bad)


def test_direction_labels():
    cam = Camera()
    right, up, fwd = cam.basis()
    assert direction_of(right * 2, cam) == Direction.RIGHT
    assert direction_of(-right * 2, cam) == Direction.LEFT
    assert direction_of(up * 2, cam) == Direction.UP
    assert direction_of(-fwd * 2, cam) == Direction.FRONT
    with pytest.raises(DomainError):
        direction_of([0.01, 0, 0], cam)


@given(st.floats(-math.pi, math.pi))
def test_yaw_roundtrip(yaw):
    r = Rotation.from_yaw(yaw)
    assert math.isclose(math.cos(r.yaw), math.cos(yaw), abs_tol=1e-12)
    assert math.isclose(math.sin(r.yaw), math.sin(yaw), abs_tol=1e-12)
    assert r.w >= 0


def test_rotation_sign_canonical():
    assert Rotation(-1.0, 0.0, 0.0, 0.0) == Rotation(1.0, 0.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        Rotation(2.0, 0.0, 0.0, 0.0)


def test_mass_and_spec():
    o = ObjectSpec.make(0, "sedan", "red")
    assert o.mass == pytest.approx(2.7 * o.volume)
    assert ObjectSpec.from_json(o.to_json()) == o
    with pytest.raises(InvalidSpecError):
        ObjectSpec.make(0, "sedan", "orange")
    with pytest.raises(InvalidSpecError):
        mass_of(0.0)


def test_annotation_json_roundtrip_byte_identical(scenes):
    for s in scenes:
        text = dumps(s.to_json())
        again = dumps(SceneAnnotation.from_json(json.loads(text)).to_json())
        assert again == text


def test_annotation_validation(scenes):
    s = scenes[0]
    with pytest.raises(InvalidSpecError):
        s.replace(trajectories=s.trajectories[:-1])


def test_trajectory_shapes(scenes):
    s = scenes[0]
    t = s.trajectories[0]
    assert len(t) == s.config.n_frames
    assert np.asarray(t.positions).shape == (s.config.n_frames, 3)
