import math

import pytest

from dynreason.generator import generate_scene
from dynreason.physics import WorldState
from dynreason.questions import generate_questions
from dynreason.scene import DynamicState, ForceProfile, ObjectSpec, Rotation, Vec3


def body(id, subtype, pos, vel=(0.0, 0.0, 0.0), yaw=None, engine=0.0, floating=0.0, color="red"):
    if yaw is None:
        yaw = math.atan2(vel[1], vel[0]) if math.hypot(vel[0], vel[1]) > 0 else 0.0
    spec = ObjectSpec.make(id, subtype, color)
    state = DynamicState(Vec3(*map(float, pos)), Rotation.from_yaw(yaw), Vec3(*map(float, vel)), Vec3(0.0, 0.0, 0.0))
    return spec, ForceProfile(engine, floating), state


def world(*bodies) -> WorldState:
    specs, forces, states = zip(*bodies)
    return WorldState(tuple(specs), tuple(forces), tuple(states))


@pytest.fixture(scope="session")
def scenes():
    return [generate_scene(f"s{k}", 100 + k) for k in range(6)]


@pytest.fixture(scope="session")
def scene_questions(scenes):
    return [(s, generate_questions(s, seed=k)) for k, s in enumerate(scenes)]


# acceptance results are collected here and printed after the run, one line each
ACCEPTANCE: dict = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str):
    ACCEPTANCE[number] = (name, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n}. {name}: {detail}")
