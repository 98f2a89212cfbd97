import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynreason import kernels
from dynreason.generator import GeneratorConfig, sample_scene
from dynreason.physics import _Arrays
from dynreason.scene import SceneConfig

backends = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in backends, reason="compiled kernels not built")

coord = st.floats(-3.0, 3.0, allow_nan=False)
half = st.floats(0.1, 1.5, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)


def quat(yaw):
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


@needs_cython
@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord, angle, angle, half, half, half, half)
def test_box_overlap_parity(x1, y1, x2, y2, a1, a2, h1, h2, h3, h4):
    pa, pb = np.array([x1, y1, 0.0]), np.array([x2, y2, 0.0])
    ha, hb = np.array([h1, h2, 0.5]), np.array([h3, h4, 0.5])
    py = backends["python"].box_overlap(pa, quat(a1), ha, pb, quat(a2), hb)
    cy = backends["cython"].box_overlap(pa, quat(a1), ha, pb, quat(a2), hb)
    assert py == cy


@settings(max_examples=100, deadline=None)
@given(coord, coord, angle, half, half)
def test_overlap_symmetric(x, y, a, h1, h2):
    ref = backends["python"]
    pa, pb = np.zeros(3), np.array([x, y, 0.0])
    ha = hb = np.array([h1, h2, 0.5])
    r1 = ref.box_overlap(pa, quat(0.0), ha, pb, quat(a), hb)
    r2 = ref.box_overlap(pb, quat(a), hb, pa, quat(0.0), ha)
    assert (r1 is None) == (r2 is None)
    if r1 is not None:
        assert r1[3] == pytest.approx(r2[3], abs=1e-9)  # (nx, ny, nz, depth, px, py, pz)


def test_separated_boxes_do_not_overlap():
    ref = backends["python"]
    h = np.array([0.5, 0.5, 0.5])
    assert ref.box_overlap(np.zeros(3), quat(0), h, np.array([1.5, 0, 0]), quat(0), h) is None
    assert ref.box_overlap(np.zeros(3), quat(0), h, np.array([0.9, 0, 0]), quat(0), h) is not None


@needs_cython
@pytest.mark.parametrize("seed", range(5))
def test_step_parity(seed):
    cfg = SceneConfig()
    w = sample_scene(GeneratorConfig(), cfg, seed)
    outs = {}
    for name, mod in backends.items():
        a = _Arrays(w)
        contacts = []
        for _ in range(60):
            # the kernels update pos, vel and quat in place and return the raw contacts
            raw = mod.step(a.pos, a.vel, a.quat, a.half, a.inv_mass, a.engine, a.floating, cfg.gravity, cfg.dt,
                           cfg.mu_eff, cfg.restitution, cfg.rest_speed, 0.1)
            contacts.append(raw)
        outs[name] = (a.pos.copy(), a.vel.copy(), a.quat.copy())
        assert contacts
    for x, y in zip(outs["python"], outs["cython"]):
        assert np.array_equal(x, y)


def test_backend_selected():
    assert kernels.BACKEND in ("python", "cython")
