"""Program interpreter over ground-truth or estimated 4D scene states.

Both kinds of scene are wrapped in a :class:`SceneRepresentation` that
answers the same questions (smoothed dynamics at a frame, events before a
horizon, a world state to re-simulate from).  :class:`ExecContext` binds a
representation to the number of frames the question shows and refuses any
read past it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DomainError,
    ExecutionError,
    FrameOutOfRange,
    HorizonViolation,
    ProgramTypeError,
    Unanswerable,
    UniqueViolation,
)
from .estimator import EstimatedScene, derive_dynamics, moving_average
from .generator import COUNTERFACTUAL_VALUES, apply_modification
from .physics import WorldState, last_contacts_before, simulate
from .program import ANSWER_TYPES, COUNTERFACTUAL_OPS, typecheck
from .scene import (
    EPSILON_MOTION,
    DynamicState,
    ForceProfile,
    Rotation,
    SceneAnnotation,
    Vec3,
    direction_of,
    velocity_state_of,
)

SMOOTHING_WINDOW = 5


@dataclass(frozen=True)
class Thresholds:
    eps_motion: float = EPSILON_MOTION
    accel: float = 0.5  # m/s^2 along the heading
    float_height: float = 0.5
    float_vz: float = 1.0
    float_az: float = 5.0


class SceneRepresentation:
    """Common read interface; subclasses fill the per-object arrays."""

    kind = "abstract"

    def __init__(self, scene_id, objects, positions, rotations, collisions, contact_intervals, config):
        self.scene_id = scene_id
        self.objects = tuple(objects)
        self.ids = [o.id for o in self.objects]
        self.positions = positions  # (T, n, 3)
        self.rotations = rotations  # (T, n, 4)
        self.collisions = tuple(collisions)
        self.contact_intervals = contact_intervals
        self.config = config
        self._dyn_cache: dict = {}
        self._resim_cache: dict = {}

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def camera(self):
        return self.config.camera

    def index_of(self, obj_id: int) -> int:
        try:
            return self.ids.index(obj_id)
        except ValueError:
            raise ExecutionError(f"unknown object {obj_id}") from None

    def obj(self, obj_id: int):
        return self.objects[self.index_of(obj_id)]

    def yaw(self, obj_id: int, t: int) -> float:
        w, _, _, z = self.rotations[t, self.index_of(obj_id)]
        return float(2.0 * np.arctan2(z, w))

    def dynamics(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """Smoothed (velocity, acceleration), each (horizon, n, 3), seeing only frames < horizon."""
        if horizon not in self._dyn_cache:
            self._dyn_cache[horizon] = self._compute_dynamics(horizon)
        return self._dyn_cache[horizon]

    def _compute_dynamics(self, horizon: int):
        raise NotImplementedError

    def forces_at(self, t: int, horizon: int, thresholds: Thresholds) -> tuple[ForceProfile, ...]:
        raise NotImplementedError

    def events_before(self, horizon: int):
        return tuple(e for e in self.collisions if e.frame < horizon)

    def world_at(self, t: int, horizon: int, thresholds: Thresholds) -> WorldState:
        raise NotImplementedError

    def initial_world(self, thresholds: Thresholds) -> WorldState:
        return self.world_at(0, self.n_frames, thresholds)

    def cached_resim(self, key, fn):
        if key not in self._resim_cache:
            self._resim_cache[key] = fn()
        return self._resim_cache[key]


class GroundTruthScene(SceneRepresentation):
    kind = "gt"

    def __init__(self, annotation: SceneAnnotation):
        pos = np.stack([t.positions for t in annotation.trajectories], axis=1)
        rot = np.stack([t.rotations for t in annotation.trajectories], axis=1)
        super().__init__(annotation.scene_id, annotation.objects, pos, rot, annotation.collisions,
                         annotation.contact_intervals, annotation.config)
        self.annotation = annotation
        self.velocities = np.stack([t.velocities for t in annotation.trajectories], axis=1)
        self.accelerations = np.stack([t.accelerations for t in annotation.trajectories], axis=1)
        self.forces = tuple(annotation.forces)

    def _compute_dynamics(self, horizon):
        return (moving_average(self.velocities[:horizon], SMOOTHING_WINDOW),
                moving_average(self.accelerations[:horizon], SMOOTHING_WINDOW))

    def forces_at(self, t, horizon, thresholds):
        return self.forces

    def world_at(self, t, horizon, thresholds):
        states = tuple(traj.state(t) for traj in self.annotation.trajectories)
        return WorldState(self.objects, self.forces, states)


class EstimatedSceneRepresentation(SceneRepresentation):
    kind = "estimated"

    def __init__(self, estimate: EstimatedScene):
        pos = np.stack([t.positions for t in estimate.trajectories], axis=1)
        rot = np.stack([t.rotations for t in estimate.trajectories], axis=1)
        super().__init__(estimate.scene_id, estimate.objects, pos, rot, estimate.collisions,
                         estimate.contact_intervals, estimate.config)
        self.estimate = estimate

    def _compute_dynamics(self, horizon):
        if horizon < 2:
            z = np.zeros((horizon,) + self.positions.shape[1:])
            return z, z.copy()
        vs = self.estimate.velocity_states
        if vs is None:
            return derive_dynamics(self.positions[:horizon], self.config.dt, SMOOTHING_WINDOW)
        # the filter's velocity state is far less noisy than differenced positions
        v = moving_average(vs[:horizon], SMOOTHING_WINDOW)
        a = np.empty_like(v)
        a[1:] = (v[1:] - v[:-1]) / self.config.dt
        a[0] = a[1]
        return v, moving_average(a, SMOOTHING_WINDOW)

    def forces_at(self, t, horizon, thresholds):
        v, a = self.dynamics(horizon)
        out = []
        for i, o in enumerate(self.objects):
            engine = 1.0 if _forward_accel(a[t, i], self.yaw(o.id, t)) > thresholds.accel else 0.0
            floating = 10.0 if o.shape.is_plane and _floating(self.positions[t, i], v[t, i], a[t, i], thresholds) else 0.0
            out.append(ForceProfile(engine, floating))
        return tuple(out)

    def world_at(self, t, horizon, thresholds):
        v, _ = self.dynamics(horizon)
        states = []
        for i in range(len(self.objects)):
            states.append(DynamicState(
                Vec3.of(self.positions[t, i]),
                Rotation.from_quat(self.rotations[t, i]),
                Vec3.of(v[t, i]),
                Vec3(0.0, 0.0, 0.0),
            ))
        return WorldState(self.objects, self.forces_at(t, horizon, thresholds), tuple(states))


def representation_of(scene) -> SceneRepresentation:
    if isinstance(scene, SceneRepresentation):
        return scene
    if isinstance(scene, EstimatedScene):
        return EstimatedSceneRepresentation(scene)
    if isinstance(scene, SceneAnnotation):
        return GroundTruthScene(scene)
    raise TypeError(f"cannot execute over {type(scene).__name__}")


def _forward_accel(a, yaw: float) -> float:
    return float(a[0] * np.cos(yaw) + a[1] * np.sin(yaw))


def _floating(p, v, a, th: Thresholds) -> bool:
    return bool(p[2] > th.float_height and abs(v[2]) < th.float_vz and abs(a[2]) < th.float_az)


# --------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class Value:
    type: str
    data: object


@dataclass
class ExecContext:
    """A representation seen through the frames a question shows.

    ``frames_read`` records every frame index touched, which lets tests
    check that predictive programs never peek past the horizon.
    """

    scene: SceneRepresentation
    horizon: Optional[int] = None
    thresholds: Thresholds = Thresholds()
    resimulate: bool = True
    frames_read: set = field(default_factory=set)

    def __post_init__(self):
        self.scene = representation_of(self.scene)
        if self.horizon is None:
            self.horizon = self.scene.n_frames
        if not 1 <= self.horizon <= self.scene.n_frames:
            raise FrameOutOfRange(f"horizon {self.horizon} outside 1..{self.scene.n_frames}")

    def check_frame(self, t: int) -> int:
        if not 0 <= t < self.scene.n_frames:
            raise FrameOutOfRange(f"frame {t} outside 0..{self.scene.n_frames - 1}")
        if t >= self.horizon:
            raise HorizonViolation(f"frame {t} is beyond the observed horizon {self.horizon}")
        self.frames_read.add(t)
        return t

    # per-object dynamics
    def velocity(self, obj: int, t: int) -> np.ndarray:
        v, _ = self.scene.dynamics(self.horizon)
        return v[self.check_frame(t), self.scene.index_of(obj)]

    def acceleration(self, obj: int, t: int) -> np.ndarray:
        _, a = self.scene.dynamics(self.horizon)
        return a[self.check_frame(t), self.scene.index_of(obj)]

    def speed(self, obj: int, t: int) -> float:
        return float(np.linalg.norm(self.velocity(obj, t)))

    def position(self, obj: int, t: int) -> np.ndarray:
        return self.scene.positions[self.check_frame(t), self.scene.index_of(obj)]

    def velocity_state(self, obj: int, t: int):
        return velocity_state_of(self.speed(obj, t), self.thresholds.eps_motion)

    def is_accelerating(self, obj: int, t: int) -> bool:
        a = self.acceleration(obj, t)
        return _forward_accel(a, self.scene.yaw(obj, t)) > self.thresholds.accel

    def is_floating(self, obj: int, t: int) -> bool:
        if not self.scene.obj(obj).shape.is_plane:
            return False
        return _floating(self.position(obj, t), self.velocity(obj, t), self.acceleration(obj, t), self.thresholds)

    def events(self):
        self.frames_read.update(range(self.horizon))
        return self.scene.events_before(self.horizon)

    def future_events(self):
        if not self.resimulate:
            raise Unanswerable("re-simulation disabled")
        h = self.horizon
        if h >= self.scene.n_frames:
            raise Unanswerable("no frames remain after the horizon")
        start = self.check_frame(h - 1)

        def run():
            world = self.scene.world_at(start, h, self.thresholds)
            seed = last_contacts_before(self.scene.contact_intervals, h)
            res = simulate(world, self.scene.config, start_frame=start, end_frame=self.scene.n_frames,
                           last_contact=seed)
            return tuple(e for e in res.collisions if e.frame >= h)

        return self.scene.cached_resim(("future", h), run)

    def counterfactual(self, obj: int, which: str):
        if not self.resimulate:
            raise Unanswerable("re-simulation disabled")
        prop, value = COUNTERFACTUAL_VALUES[which]
        self.scene.index_of(obj)
        self.check_frame(0)

        def run():
            world = self.scene.initial_world(self.thresholds)
            modified = apply_modification(world, obj, prop, value)
            return simulate(modified, self.scene.config).collisions

        return self.scene.cached_resim(("cf", which, obj), run)


# --------------------------------------------------------------------------
# operations


def _frame_arg(ctx: ExecContext, v: Value) -> int:
    return int(v.data)


def _objects(ctx, args, ins):
    return Value("ObjectSet", tuple(sorted(ctx.scene.ids)))


def _events(ctx, args, ins):
    return Value("CollisionEventSet", tuple(sorted(ctx.events())))


def _future_events(ctx, args, ins):
    return Value("CollisionEventSet", tuple(sorted(ctx.future_events())))


def _frame(ctx, args, ins):
    t = 0 if args["anchor"] == "begin" else ctx.horizon - 1
    return Value("FrameID", ctx.check_frame(t))


def _filter_attributes(ctx, args, ins):
    (objs,) = ins
    key, val = next(iter(args.items()))
    if key == "color":
        keep = [o for o in objs.data if ctx.scene.obj(o).color == val]
    else:
        keep = [o for o in objs.data if ctx.scene.obj(o).shape.subtype == val]
    return Value("ObjectSet", tuple(keep))


def _filter_static(ctx, args, ins):
    objs, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("ObjectSet", tuple(o for o in objs.data if ctx.speed(o, t) <= ctx.thresholds.eps_motion))


def _filter_moving_velocity(ctx, args, ins):
    objs, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("ObjectSet", tuple(o for o in objs.data if ctx.velocity_state(o, t).value == args["state"]))


def _filter_accelerating(ctx, args, ins):
    objs, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("ObjectSet", tuple(o for o in objs.data if ctx.is_accelerating(o, t)))


def _filter_floating(ctx, args, ins):
    objs, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("ObjectSet", tuple(o for o in objs.data if ctx.is_floating(o, t)))


def _query_attributes(ctx, args, ins):
    (o,) = ins
    spec = ctx.scene.obj(o.data)
    if args["attribute"] == "color":
        return Value("Color", spec.color)
    return Value("Shape", spec.shape.subtype)


def _is_static(ctx, args, ins):
    o, fr = ins
    return Value("Bool", ctx.speed(o.data, _frame_arg(ctx, fr)) <= ctx.thresholds.eps_motion)


def _query_moving_velocity(ctx, args, ins):
    o, fr = ins
    return Value("VelocityState", ctx.velocity_state(o.data, _frame_arg(ctx, fr)).value)


def _query_moving_direction(ctx, args, ins):
    o, fr = ins
    v = ctx.velocity(o.data, _frame_arg(ctx, fr))
    try:
        return Value("Direction", direction_of(v, ctx.scene.camera, ctx.thresholds.eps_motion).value)
    except DomainError as exc:
        raise Unanswerable(f"object {o.data} is not moving") from exc


def _is_accelerating(ctx, args, ins):
    o, fr = ins
    return Value("Bool", ctx.is_accelerating(o.data, _frame_arg(ctx, fr)))


def _is_floating(ctx, args, ins):
    o, fr = ins
    return Value("Bool", ctx.is_floating(o.data, _frame_arg(ctx, fr)))


def _faster(ctx, args, ins):
    a, b, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("Bool", ctx.speed(a.data, t) > ctx.speed(b.data, t))


def _slower(ctx, args, ins):
    a, b, fr = ins
    t = _frame_arg(ctx, fr)
    return Value("Bool", ctx.speed(a.data, t) < ctx.speed(b.data, t))


def _filter_collision(ctx, args, ins):
    evs, o = ins
    return Value("CollisionEventSet", tuple(e for e in evs.data if e.involves(o.data)))


def _get_all_col_partners(ctx, args, ins):
    evs, o = ins
    return Value("ObjectSet", tuple(sorted({e.partner(o.data) for e in evs.data if e.involves(o.data)})))


def _get_frame(ctx, args, ins):
    (e,) = ins
    return Value("FrameID", ctx.check_frame(e.data.frame))


def _come_in_frame(ctx, args, ins):
    (o,) = ins
    i = ctx.scene.index_of(o.data)
    half_z = ctx.scene.obj(o.data).proxy_extents.z
    for t in range(ctx.horizon):
        p = ctx.position(o.data, t)
        if ctx.scene.camera.in_view(p + np.array([0.0, 0.0, half_z])):
            return Value("FrameID", t)
    raise Unanswerable(f"object {o.data} never enters the view")


def _unique(ctx, args, ins):
    (s,) = ins
    if len(s.data) != 1:
        raise UniqueViolation(f"unique over a set of {len(s.data)}")
    return Value("Object" if s.type == "ObjectSet" else "CollisionEvent", s.data[0])


def _exist(ctx, args, ins):
    (s,) = ins
    return Value("Bool", len(s.data) > 0)


def _equal(ctx, args, ins):
    (v,) = ins
    return Value("Bool", v.data == args["value"])


def _make_counterfactual(which):
    def op(ctx, args, ins):
        (o,) = ins
        return Value("CollisionEventSet", tuple(sorted(ctx.counterfactual(o.data, which))))

    return op


HANDLERS = {
    "objects": _objects,
    "events": _events,
    "future_events": _future_events,
    "frame": _frame,
    "filter_attributes": _filter_attributes,
    "filter_static": _filter_static,
    "filter_moving_velocity": _filter_moving_velocity,
    "filter_accelerating": _filter_accelerating,
    "filter_floating": _filter_floating,
    "query_attributes": _query_attributes,
    "is_static": _is_static,
    "query_moving_velocity": _query_moving_velocity,
    "query_moving_direction": _query_moving_direction,
    "is_accelerating": _is_accelerating,
    "is_floating": _is_floating,
    "faster_velocity": _faster,
    "slower_velocity": _slower,
    "filter_collision": _filter_collision,
    "get_all_col_partners": _get_all_col_partners,
    "get_frame": _get_frame,
    "come_in_frame": _come_in_frame,
    "unique": _unique,
    "exist": _exist,
    "equal": _equal,
}
for _op in COUNTERFACTUAL_OPS:
    HANDLERS[_op] = _make_counterfactual(_op[len("counterfactual_"):])


def run_program(program, ctx: ExecContext) -> list[Value]:
    """Evaluate every node; returns the list of node values."""
    types = typecheck(program)
    values: list[Value] = []
    for node, expected in zip(program, types):
        ins = [values[k] for k in node.inputs]
        v = HANDLERS[node.op](ctx, node.arg, ins)
        if v.type != expected:
            raise ProgramTypeError(f"{node.op} produced {v.type}, expected {expected}")
        values.append(v)
    return values


def answer_token(value: Value) -> str:
    if value.type not in ANSWER_TYPES:
        raise ProgramTypeError(f"{value.type} is not an answer")
    if value.type == "Bool":
        return "true" if value.data else "false"
    return str(value.data)


def execute(program, scene, horizon: Optional[int] = None, **kwargs) -> str:
    """Answer token for ``program`` over ``scene`` (annotation, estimate or representation)."""
    ctx = scene if isinstance(scene, ExecContext) else ExecContext(scene, horizon, **kwargs)
    return answer_token(run_program(program, ctx)[-1])
