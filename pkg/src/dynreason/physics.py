"""Deterministic fixed-step rigid-body simulator.

Semi-implicit Euler at a fixed ``dt`` with no substeps, oriented-box
contacts, single-pass sequential impulses and positional projection.  The
per-step arithmetic lives in :mod:`dynreason.kernels`; this module handles
state packing, event bookkeeping and divergence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, InvalidSpecError, SimulationDivergedError
from .scene import (
    EPSILON_MOTION,
    CollisionEvent,
    DynamicState,
    ForceProfile,
    ObjectSpec,
    Rotation,
    SceneConfig,
    Trajectory,
    Vec3,
)


@dataclass(frozen=True)
class ContactManifold:
    pair: tuple[int, int]
    normal: Vec3
    depth: float
    point: Vec3
    impulse: float = 0.0

    def __post_init__(self):
        if abs(self.normal.norm() - 1.0) > 1e-9:
            raise DomainError("contact normal must be a unit vector")
        if self.depth < 0.0:
            raise DomainError("negative penetration depth")


@dataclass(frozen=True)
class WorldState:
    objects: tuple[ObjectSpec, ...]
    forces: tuple[ForceProfile, ...]
    states: tuple[DynamicState, ...]

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidSpecError("object ids must be unique")
        if not len(self.objects) == len(self.forces) == len(self.states):
            raise InvalidSpecError("objects, forces and states must align")

    @property
    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def index_of(self, obj_id: int) -> int:
        return self.ids.index(obj_id)

    def with_state(self, obj_id: int, state: DynamicState) -> "WorldState":
        i = self.index_of(obj_id)
        states = list(self.states)
        states[i] = state
        return WorldState(self.objects, self.forces, tuple(states))

    def with_force(self, obj_id: int, force: ForceProfile) -> "WorldState":
        i = self.index_of(obj_id)
        force.check_for(self.objects[i].shape)
        forces = list(self.forces)
        forces[i] = force
        return WorldState(self.objects, tuple(forces), self.states)


class _Arrays:
    """Struct-of-arrays view of a world, the layout the kernels expect."""

    def __init__(self, world: WorldState):
        n = len(world.objects)
        self.ids = world.ids
        self.pos = np.array([list(s.position) for s in world.states], dtype=float).reshape(n, 3)
        self.vel = np.array([list(s.velocity) for s in world.states], dtype=float).reshape(n, 3)
        self.quat = np.array([s.rotation.to_list() for s in world.states], dtype=float).reshape(n, 4)
        self.half = np.array([list(o.proxy_extents) for o in world.objects], dtype=float).reshape(n, 3)
        self.inv_mass = np.array([1.0 / o.mass for o in world.objects], dtype=float)
        self.engine = np.array([f.engine_accel for f in world.forces], dtype=float)
        self.floating = np.array([f.floating_force_per_mass for f in world.forces], dtype=float)

    def step(self, config: SceneConfig):
        return kernels.step(
            self.pos,
            self.vel,
            self.quat,
            self.half,
            self.inv_mass,
            self.engine,
            self.floating,
            config.gravity,
            config.dt,
            config.mu_eff,
            config.restitution,
            config.rest_speed,
            EPSILON_MOTION,
        )

    def check_finite(self, frame: int):
        bad = ~(np.isfinite(self.pos).all(axis=1) & np.isfinite(self.vel).all(axis=1))
        if bad.any():
            raise SimulationDivergedError(frame, self.ids[int(np.argmax(bad))])

    def manifolds(self, raw) -> list[ContactManifold]:
        out = []
        for i, j, nx, ny, nz, depth, px, py, pz, imp in raw:
            a, b = self.ids[i], self.ids[j]
            normal = Vec3(nx, ny, nz)
            if a > b:
                a, b = b, a
                normal = Vec3(-nx, -ny, -nz)
            out.append(ContactManifold((a, b), normal, depth, Vec3(px, py, pz), imp))
        return out


def _states_from(arrays: _Arrays, prev_vel: np.ndarray, dt: float) -> tuple[DynamicState, ...]:
    acc = (arrays.vel - prev_vel) / dt
    return tuple(
        DynamicState(
            Vec3.of(arrays.pos[i]),
            Rotation(*(float(c) for c in arrays.quat[i])),
            Vec3.of(arrays.vel[i]),
            Vec3.of(acc[i]),
        )
        for i in range(len(arrays.ids))
    )


def step(world: WorldState, config: SceneConfig, frame: int = 1) -> tuple[WorldState, list[ContactManifold]]:
    """Advance the world by one ``dt``; returns the new world and this step's contacts."""
    arrays = _Arrays(world)
    arrays.check_finite(frame - 1)
    prev_vel = arrays.vel.copy()
    raw = arrays.step(config)
    arrays.check_finite(frame)
    new = WorldState(world.objects, world.forces, _states_from(arrays, prev_vel, config.dt))
    return new, arrays.manifolds(raw)


def detect_collisions(world: WorldState) -> list[ContactManifold]:
    arrays = _Arrays(world)
    return arrays.manifolds(kernels.detect(arrays.pos, arrays.quat, arrays.half))


def resolve_collision(v1, v2, m1: float, m2: float, normal, restitution: float):
    """Velocities after an impulse along ``normal`` (pointing from body 1 to 2).

    ``m2`` may be ``math.inf`` for an immovable partner such as the floor.
    A separating or resting contact is returned unchanged.
    """
    v1 = np.asarray(list(v1), dtype=float)
    v2 = np.asarray(list(v2), dtype=float)
    n = np.asarray(list(normal), dtype=float)
    vn = float((v2 - v1) @ n)
    if vn >= 0.0:
        return v1, v2
    im1 = 0.0 if math.isinf(m1) else 1.0 / m1
    im2 = 0.0 if math.isinf(m2) else 1.0 / m2
    j = -(1.0 + restitution) * vn / (im1 + im2)
    return v1 - j * im1 * n, v2 + j * im2 * n


@dataclass(frozen=True)
class SimulationResult:
    start_frame: int
    trajectories: tuple[Trajectory, ...]
    collisions: tuple[CollisionEvent, ...]
    contact_intervals: dict
    manifolds: tuple[tuple[ContactManifold, ...], ...]  # per simulated step


class EventRecorder:
    """Turns per-frame contacts into debounced collision events.

    A pair produces a new event only after ``debounce`` contact-free frames;
    ``last_contact`` can be seeded so that a re-simulation started mid-video
    continues the episodes already in progress.
    """

    def __init__(self, debounce: int, last_contact: Optional[dict] = None):
        self.debounce = debounce
        self.last = dict(last_contact or {})
        self.events: list[CollisionEvent] = []
        self.intervals: dict = {}

    def record(self, frame: int, manifolds: Sequence[ContactManifold]):
        for m in manifolds:
            pair = m.pair
            last = self.last.get(pair)
            if last is None or frame - last - 1 >= self.debounce:
                self.events.append(CollisionEvent(frame, pair[0], pair[1], m.point, m.impulse))
            spans = self.intervals.setdefault(pair, [])
            if spans and spans[-1][1] == frame - 1:
                spans[-1] = (spans[-1][0], frame)
            else:
                spans.append((frame, frame))
            self.last[pair] = frame

    def finish(self):
        events = tuple(sorted(self.events))
        intervals = {p: tuple(s) for p, s in sorted(self.intervals.items())}
        return events, intervals


def last_contacts_before(intervals: dict, frame: int) -> dict:
    """Last contact frame strictly before ``frame`` for every pair."""
    out = {}
    for pair, spans in intervals.items():
        lasts = [min(e, frame - 1) for s, e in spans if s < frame]
        if lasts:
            out[pair] = max(lasts)
    return out


def simulate(
    initial: WorldState,
    config: SceneConfig,
    start_frame: int = 0,
    end_frame: Optional[int] = None,
    last_contact: Optional[dict] = None,
    initial_acceleration: Optional[np.ndarray] = None,
) -> SimulationResult:
    """Run from ``initial`` (the state at ``start_frame``) up to ``end_frame``.

    Frames ``start_frame .. end_frame-1`` are recorded; the first frame's
    acceleration copies the next one unless ``initial_acceleration`` is given.
    """
    end = config.n_frames if end_frame is None else end_frame
    if end <= start_frame:
        raise DomainError("end frame must follow start frame")
    arrays = _Arrays(initial)
    arrays.check_finite(start_frame)
    n = len(arrays.ids)
    length = end - start_frame
    pos = np.empty((length, n, 3))
    vel = np.empty((length, n, 3))
    quat = np.empty((length, n, 4))
    pos[0], vel[0], quat[0] = arrays.pos, arrays.vel, arrays.quat
    recorder = EventRecorder(config.debounce_frames, last_contact)
    per_step = []
    for k in range(1, length):
        frame = start_frame + k
        raw = arrays.step(config)
        arrays.check_finite(frame)
        pos[k], vel[k], quat[k] = arrays.pos, arrays.vel, arrays.quat
        manifolds = arrays.manifolds(raw)
        per_step.append(tuple(manifolds))
        recorder.record(frame, manifolds)
    acc = np.empty_like(vel)
    if length > 1:
        acc[1:] = (vel[1:] - vel[:-1]) / config.dt
        acc[0] = acc[1] if initial_acceleration is None else initial_acceleration
    else:
        acc[0] = 0.0 if initial_acceleration is None else initial_acceleration
    trajectories = tuple(
        Trajectory(pos[:, i], quat[:, i], vel[:, i], acc[:, i]) for i in range(n)
    )
    events, intervals = recorder.finish()
    return SimulationResult(start_frame, trajectories, events, intervals, tuple(per_step))


def world_at(objects, forces, trajectories, frame: int) -> WorldState:
    return WorldState(tuple(objects), tuple(forces), tuple(t.state(frame) for t in trajectories))


def kinetic_plus_potential(world: WorldState, gravity: float) -> float:
    total = 0.0
    for o, s in zip(world.objects, world.states):
        v = s.velocity
        total += 0.5 * o.mass * (v.x * v.x + v.y * v.y + v.z * v.z) + o.mass * gravity * s.position.z
    return total
