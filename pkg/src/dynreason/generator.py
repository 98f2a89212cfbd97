"""Scene sampling and counterfactual variants."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GenerationError, InvalidSpecError, Unanswerable
from .physics import WorldState, detect_collisions, simulate, world_at
from .scene import (
    COLORS,
    SUBTYPE_CLASS,
    SUBTYPES,
    CounterfactualRecord,
    DynamicState,
    ForceProfile,
    ObjectSpec,
    Rotation,
    SceneAnnotation,
    SceneConfig,
    Vec3,
    VelocityState,
    velocity_state_of,
)

STATE_SPEEDS = {VelocityState.STATIC: 0.0, VelocityState.SLOW: 3.0, VelocityState.FAST: 6.0}


@dataclass(frozen=True)
class GeneratorConfig:
    n_objects_min: int = 3
    n_objects_max: int = 6
    beta_a: float = 2.0
    beta_b: float = 2.0
    plane_z_min: float = 1.0
    plane_z_max: float = 5.0
    orientation_noise_deg: float = 15.0
    speeds: tuple = (0.0, 3.0, 6.0)
    p_engine: float = 0.4
    p_floating: float = 0.5
    placement_margin: float = 0.1
    max_attempts: int = 500
    n_counterfactuals: int = 2

    def __post_init__(self):
        if not 3 <= self.n_objects_min <= self.n_objects_max:
            raise InvalidSpecError("need 3 <= n_objects_min <= n_objects_max (one object per velocity state)")
        if self.n_objects_max > len(SUBTYPES) * len(COLORS):
            raise InvalidSpecError("more objects than distinct (shape, color) pairs")
        if self.plane_z_min > self.plane_z_max:
            raise InvalidSpecError("empty plane height range")
        if len(self.speeds) != 3 or any(s < 0 for s in self.speeds):
            raise InvalidSpecError("speeds must be three non-negative values")

    def to_json(self) -> dict:
        d = asdict(self)
        d["speeds"] = list(self.speeds)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "speeds" in d:
            d["speeds"] = tuple(d["speeds"])
        return cls(**d)


def _state_speed(config: GeneratorConfig, state: VelocityState) -> float:
    return config.speeds[[VelocityState.STATIC, VelocityState.SLOW, VelocityState.FAST].index(state)]


def sample_scene(config: GeneratorConfig, scene_config: SceneConfig, seed: int) -> WorldState:
    """Draw an overlap-free initial world covering all three velocity states."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(config.n_objects_min, config.n_objects_max + 1))
    states = [VelocityState.STATIC, VelocityState.SLOW, VelocityState.FAST]
    states += [states[int(k)] for k in rng.integers(0, 3, size=n - 3)]
    states = [states[int(k)] for k in rng.permutation(n)]

    pairs = [(s, c) for s in SUBTYPES for c in COLORS]
    chosen = [pairs[int(k)] for k in rng.choice(len(pairs), size=n, replace=False)]

    radius = scene_config.arena_radius
    sigma = math.radians(config.orientation_noise_deg)
    objects, forces, world_states = [], [], []
    for i, ((subtype, color), vstate) in enumerate(zip(chosen, states)):
        spec = ObjectSpec.make(i, subtype, color)
        is_plane = SUBTYPE_CLASS[subtype] == "plane"
        engine = 1.0 if rng.random() < config.p_engine else 0.0
        floating = 10.0 if is_plane and rng.random() < config.p_floating else 0.0
        speed = _state_speed(config, vstate)
        for _ in range(config.max_attempts):
            x = (2.0 * rng.beta(config.beta_a, config.beta_b) - 1.0) * radius
            y = (2.0 * rng.beta(config.beta_a, config.beta_b) - 1.0) * radius
            z = float(rng.uniform(config.plane_z_min, config.plane_z_max)) if is_plane else 0.0
            yaw = math.atan2(-y, -x) + float(rng.normal(0.0, sigma))
            yaw = math.atan2(math.sin(yaw), math.cos(yaw))
            rot = Rotation.from_yaw(yaw)
            vel = Vec3(speed * math.cos(yaw), speed * math.sin(yaw), 0.0)
            state = DynamicState(Vec3(float(x), float(y), z), rot, vel, Vec3(0.0, 0.0, 0.0))
            if not _overlaps_any(spec, state, objects, world_states, config.placement_margin):
                break
        else:
            raise GenerationError(f"could not place object {i} after {config.max_attempts} attempts (seed {seed})")
        objects.append(spec)
        forces.append(ForceProfile(engine, floating))
        world_states.append(state)
    return WorldState(tuple(objects), tuple(forces), tuple(world_states))


def _overlaps_any(spec, state, objects, states, margin) -> bool:
    if not objects:
        return False
    grown = ObjectSpec.make(spec.id, spec.shape.subtype, spec.color,
                            tuple(h + margin for h in spec.proxy_extents))
    probe = WorldState(
        tuple(objects) + (grown,),
        tuple(ForceProfile() for _ in range(len(objects) + 1)),
        tuple(states) + (state,),
    )
    return any(spec.id in m.pair for m in detect_collisions(probe))


# --------------------------------------------------------------------------
# modifications shared by counterfactual generation, the executor and the CLI

COUNTERFACTUAL_VALUES = {
    "static": ("velocity", "static"),
    "moving_slow": ("velocity", "slow"),
    "moving_fast": ("velocity", "fast"),
    "accelerating": ("accelerating", True),
    "floating": ("floating", True),
}


def initial_property(world: WorldState, obj_id: int, prop: str):
    i = world.index_of(obj_id)
    if prop == "velocity":
        v = world.states[i].velocity
        speed = math.hypot(v.x, v.y)
        # initial speeds are exact set members up to rounding of the heading
        return min(STATE_SPEEDS, key=lambda s: abs(STATE_SPEEDS[s] - speed)).value
    if prop == "accelerating":
        return world.forces[i].accelerating
    if prop == "floating":
        return world.forces[i].floating
    raise InvalidSpecError(f"unknown property {prop!r}")


def apply_modification(world: WorldState, obj_id: int, prop: str, value, speeds=(0.0, 3.0, 6.0)) -> WorldState:
    """Return ``world`` with one initial property of one object replaced.

    ``prop`` is ``velocity`` (value static/slow/fast), ``speed_delta`` (value
    in m/s added along the heading), ``accelerating`` or ``floating`` (bool).
    """
    i = world.index_of(obj_id)
    state = world.states[i]
    force = world.forces[i]
    yaw = state.rotation.yaw
    if prop in ("velocity", "speed_delta"):
        if prop == "velocity":
            speed = speeds[["static", "slow", "fast"].index(VelocityState(value).value)]
        else:
            v = state.velocity
            speed = math.hypot(v.x, v.y) + float(value)
        vel = Vec3(speed * math.cos(yaw), speed * math.sin(yaw), state.velocity.z)
        if state.velocity == vel:
            return world
        return world.with_state(obj_id, DynamicState(state.position, state.rotation, vel, state.acceleration))
    if prop == "accelerating":
        return world.with_force(obj_id, ForceProfile(1.0 if value else 0.0, force.floating_force_per_mass))
    if prop == "floating":
        if not world.objects[i].shape.is_plane:
            raise Unanswerable(f"object {obj_id} is not a plane and cannot float")
        return world.with_force(obj_id, ForceProfile(force.engine_accel, 10.0 if value else 0.0))
    raise InvalidSpecError(f"unknown modification {prop!r}")


def initial_world(annotation: SceneAnnotation) -> WorldState:
    return world_at(annotation.objects, annotation.forces, annotation.trajectories, 0)


def make_counterfactual(annotation: SceneAnnotation, seed) -> CounterfactualRecord:
    """Change one initial property of one random object and re-simulate."""
    rng = np.random.default_rng(seed)
    world = initial_world(annotation)
    obj = annotation.objects[int(rng.integers(len(annotation.objects)))]
    options = ["velocity"]
    if not initial_property(world, obj.id, "accelerating"):
        options.append("accelerating")
    if obj.shape.is_plane and not initial_property(world, obj.id, "floating"):
        options.append("floating")
    prop = options[int(rng.integers(len(options)))]
    original = initial_property(world, obj.id, prop)
    if prop == "velocity":
        alternatives = [s for s in ("static", "slow", "fast") if s != original]
        new = alternatives[int(rng.integers(len(alternatives)))]
    else:
        new = True
    modified = apply_modification(world, obj.id, prop, new)
    events = simulate(modified, annotation.config).collisions
    return CounterfactualRecord(obj.id, prop, original, new, events)


def replay_counterfactual(annotation: SceneAnnotation, record: CounterfactualRecord):
    world = apply_modification(initial_world(annotation), record.object_id, record.property, record.new_value)
    return simulate(world, annotation.config).collisions


def generate_scene(
    scene_id: str,
    seed: int,
    config: GeneratorConfig = GeneratorConfig(),
    scene_config: SceneConfig = SceneConfig(),
) -> SceneAnnotation:
    scene_config = SceneConfig(**{**{n: getattr(scene_config, n) for n in scene_config.__dataclass_fields__}, "seed": seed})
    world = sample_scene(config, scene_config, seed)
    result = simulate(world, scene_config)
    annotation = SceneAnnotation(
        scene_id,
        world.objects,
        world.forces,
        result.trajectories,
        result.collisions,
        result.contact_intervals,
        (),
        scene_config,
    )
    records = tuple(make_counterfactual(annotation, [seed, 7, k]) for k in range(config.n_counterfactuals))
    return annotation.replace(counterfactuals=records)
