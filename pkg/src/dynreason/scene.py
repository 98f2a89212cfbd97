"""Domain types for objects, 4D states, collisions and the answer taxonomy.

Everything here is an immutable value object.  Trajectories keep their frames
in read-only numpy arrays so that a 120-frame scene does not turn into
thousands of small Python objects, but they still behave as values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidSpecError

DENSITY = 2.7
EPSILON_MOTION = 0.1
SLOW_MAX_SPEED = 3.0

COLORS = ("gray", "red", "brown", "yellow", "green", "cyan", "blue", "purple")
SHAPE_CLASSES = ("car", "plane", "bicycle", "motorbike", "bus")


def _load_shape_table():
    raw = json.loads(resources.files("dynreason").joinpath("data/shapes.json").read_text())
    classes = {}
    extents = {}
    for cls, members in raw["classes"].items():
        for subtype, half in members.items():
            classes[subtype] = cls
            extents[subtype] = tuple(float(h) for h in half)
    return classes, extents


SUBTYPE_CLASS, SUBTYPE_EXTENTS = _load_shape_table()
SUBTYPES = tuple(sorted(SUBTYPE_CLASS))


class VelocityState(str, Enum):
    STATIC = "static"
    SLOW = "slow"
    FAST = "fast"


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    FRONT = "front"
    BACK = "back"


ANSWER_VOCAB = frozenset(SUBTYPES) | frozenset(COLORS) | {d.value for d in Direction} | {"true", "false"}


# --------------------------------------------------------------------------
# small value types


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise DomainError(f"non-finite vector ({self.x}, {self.y}, {self.z})")

    @classmethod
    def of(cls, seq: Iterable[float]) -> "Vec3":
        x, y, z = seq
        return cls(float(x), float(y), float(z))

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dot(self, other) -> float:
        ox, oy, oz = other
        return self.x * ox + self.y * oy + self.z * oz

    def to_list(self) -> list:
        return [self.x, self.y, self.z]


@dataclass(frozen=True, slots=True)
class Rotation:
    """Unit quaternion (w, x, y, z), sign-canonicalized so that q == -q."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        comps = (self.w, self.x, self.y, self.z)
        if not all(math.isfinite(c) for c in comps):
            raise DomainError("non-finite quaternion")
        n = math.sqrt(sum(c * c for c in comps))
        if abs(n - 1.0) > 1e-9:
            raise DomainError(f"quaternion norm {n} is not 1")
        first = next((c for c in comps if c != 0.0), 1.0)
        if self.w < 0.0 or (self.w == 0.0 and first < 0.0):
            for name, c in zip("wxyz", comps):
                object.__setattr__(self, name, -c)

    @classmethod
    def from_quat(cls, q: Sequence[float]) -> "Rotation":
        w, x, y, z = (float(c) for c in q)
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0 or not math.isfinite(n):
            raise DomainError("cannot normalize quaternion")
        if abs(n - 1.0) > 1e-12:
            w, x, y, z = w / n, x / n, y / n, z / n
        return cls(w, x, y, z)

    @classmethod
    def from_yaw(cls, yaw: float) -> "Rotation":
        w, z = yaw_quaternion(yaw)
        return cls(w, 0.0, 0.0, z)

    @property
    def yaw(self) -> float:
        w, x, y, z = self.w, self.x, self.y, self.z
        return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))

    @property
    def pitch(self) -> float:
        w, x, y, z = self.w, self.x, self.y, self.z
        return math.asin(max(-1.0, min(1.0, 2.0 * (w * y - z * x))))

    @property
    def roll(self) -> float:
        w, x, y, z = self.w, self.x, self.y, self.z
        return math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))

    def to_list(self) -> list:
        return [self.w, self.x, self.y, self.z]

    def matrix(self) -> np.ndarray:
        return quat_matrix(self.w, self.x, self.y, self.z)


def yaw_quaternion(yaw: float) -> tuple[float, float]:
    """(w, z) components of a pure-yaw rotation with w >= 0."""
    w = math.cos(0.5 * yaw)
    z = math.sin(0.5 * yaw)
    if w < 0.0 or (w == 0.0 and z < 0.0):
        w, z = -w, -z
    return w, z


def quat_matrix(w, x, y, z) -> np.ndarray:
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True, slots=True)
class ShapeCategory:
    cls: str
    subtype: str

    def __post_init__(self):
        if SUBTYPE_CLASS.get(self.subtype) != self.cls:
            raise InvalidSpecError(f"subtype {self.subtype!r} is not a {self.cls!r}")

    @classmethod
    def of(cls, subtype: str) -> "ShapeCategory":
        if subtype not in SUBTYPE_CLASS:
            raise InvalidSpecError(f"unknown subtype {subtype!r}")
        return cls(SUBTYPE_CLASS[subtype], subtype)

    @property
    def is_plane(self) -> bool:
        return self.cls == "plane"


def mass_of(volume: float) -> float:
    """Mass in kg of a proxy with the given volume (m^3) at the fixed density."""
    if not (volume > 0.0 and math.isfinite(volume)):
        raise InvalidSpecError(f"volume must be positive, got {volume}")
    return DENSITY * volume


@dataclass(frozen=True, slots=True)
class ObjectSpec:
    id: int
    shape: ShapeCategory
    color: str
    proxy_extents: Vec3
    volume: float
    mass: float

    def __post_init__(self):
        if self.color not in COLORS:
            raise InvalidSpecError(f"unknown color {self.color!r}")
        if not self.volume > 0.0:
            raise InvalidSpecError("volume must be positive")
        if abs(self.mass - DENSITY * self.volume) > 1e-9 * max(1.0, self.mass):
            raise InvalidSpecError("mass must equal density x volume")

    @classmethod
    def make(cls, id: int, subtype: str, color: str, extents=None) -> "ObjectSpec":
        hx, hy, hz = extents if extents is not None else SUBTYPE_EXTENTS[subtype]
        volume = 8.0 * hx * hy * hz
        return cls(int(id), ShapeCategory.of(subtype), color, Vec3(hx, hy, hz), volume, mass_of(volume))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "shape": {"class": self.shape.cls, "subtype": self.shape.subtype},
            "color": self.color,
            "proxy_extents": self.proxy_extents.to_list(),
            "volume": self.volume,
            "mass": self.mass,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObjectSpec":
        return cls(
            d["id"],
            ShapeCategory(d["shape"]["class"], d["shape"]["subtype"]),
            d["color"],
            Vec3.of(d["proxy_extents"]),
            d["volume"],
            d["mass"],
        )


@dataclass(frozen=True, slots=True)
class ForceProfile:
    engine_accel: float = 0.0
    floating_force_per_mass: float = 0.0

    def __post_init__(self):
        if self.engine_accel not in (0.0, 1.0):
            raise InvalidSpecError("engine acceleration must be 0 or 1 m/s^2")
        if self.floating_force_per_mass not in (0.0, 10.0):
            raise InvalidSpecError("floating force must be 0 or 10 m/s^2")

    def check_for(self, shape: ShapeCategory):
        if self.floating_force_per_mass and not shape.is_plane:
            raise InvalidSpecError(f"{shape.subtype} cannot float")

    @property
    def accelerating(self) -> bool:
        return self.engine_accel > 0.0

    @property
    def floating(self) -> bool:
        return self.floating_force_per_mass > 0.0

    def to_json(self) -> dict:
        return {"engine_accel": self.engine_accel, "floating_force_per_mass": self.floating_force_per_mass}

    @classmethod
    def from_json(cls, d: dict) -> "ForceProfile":
        return cls(float(d["engine_accel"]), float(d["floating_force_per_mass"]))


@dataclass(frozen=True, slots=True)
class DynamicState:
    position: Vec3
    rotation: Rotation
    velocity: Vec3
    acceleration: Vec3

    def to_json(self) -> dict:
        return {
            "position": self.position.to_list(),
            "rotation": self.rotation.to_list(),
            "velocity": self.velocity.to_list(),
            "acceleration": self.acceleration.to_list(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DynamicState":
        return cls(
            Vec3.of(d["position"]),
            Rotation(*d["rotation"]),
            Vec3.of(d["velocity"]),
            Vec3.of(d["acceleration"]),
        )


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-frame states of one object, stored column-wise."""

    positions: np.ndarray  # (T, 3)
    rotations: np.ndarray  # (T, 4) quaternions w, x, y, z
    velocities: np.ndarray  # (T, 3)
    accelerations: np.ndarray  # (T, 3)

    def __post_init__(self):
        for name in ("positions", "rotations", "velocities", "accelerations"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.positions)
        if not (len(self.rotations) == len(self.velocities) == len(self.accelerations) == n):
            raise DomainError("trajectory columns differ in length")
        for name in ("positions", "rotations", "velocities", "accelerations"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"non-finite {name} in trajectory")

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("positions", "rotations", "velocities", "accelerations")
        )

    def state(self, t: int) -> DynamicState:
        return DynamicState(
            Vec3.of(self.positions[t]),
            Rotation(*(float(c) for c in self.rotations[t])),
            Vec3.of(self.velocities[t]),
            Vec3.of(self.accelerations[t]),
        )

    @property
    def states(self) -> list[DynamicState]:
        return [self.state(t) for t in range(len(self))]

    def yaw(self, t: int) -> float:
        w, _, _, z = self.rotations[t]
        return math.atan2(2.0 * w * z, 1.0 - 2.0 * z * z)

    def to_json(self) -> list:
        return [
            {
                "position": [float(c) for c in self.positions[t]],
                "rotation": [float(c) for c in self.rotations[t]],
                "velocity": [float(c) for c in self.velocities[t]],
                "acceleration": [float(c) for c in self.accelerations[t]],
            }
            for t in range(len(self))
        ]

    @classmethod
    def from_json(cls, frames: list) -> "Trajectory":
        return cls(
            [f["position"] for f in frames],
            [f["rotation"] for f in frames],
            [f["velocity"] for f in frames],
            [f["acceleration"] for f in frames],
        )


@dataclass(frozen=True, slots=True, order=True)
class CollisionEvent:
    frame: int
    a: int
    b: int
    contact_point: Optional[Vec3] = field(default=None, compare=False)
    impulse_magnitude: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        if self.a == self.b:
            raise DomainError("collision pair needs two distinct objects")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        if self.frame < 0:
            raise DomainError("negative collision frame")

    @property
    def pair(self) -> tuple[int, int]:
        return (self.a, self.b)

    def involves(self, obj: int) -> bool:
        return obj == self.a or obj == self.b

    def partner(self, obj: int) -> int:
        return self.b if obj == self.a else self.a

    def key(self) -> tuple[int, int, int]:
        return (self.frame, self.a, self.b)

    def to_json(self) -> dict:
        d = {"frame": self.frame, "pair": [self.a, self.b]}
        if self.contact_point is not None:
            d["contact_point"] = self.contact_point.to_list()
        if self.impulse_magnitude is not None:
            d["impulse_magnitude"] = self.impulse_magnitude
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CollisionEvent":
        cp = d.get("contact_point")
        return cls(
            d["frame"],
            d["pair"][0],
            d["pair"][1],
            Vec3.of(cp) if cp is not None else None,
            d.get("impulse_magnitude"),
        )


def event_keys(events: Iterable[CollisionEvent]) -> list[tuple[int, int, int]]:
    return sorted(e.key() for e in events)


# --------------------------------------------------------------------------
# classification helpers


def velocity_state_of(speed: float, eps: float = 0.0) -> VelocityState:
    """Discretize a speed (m/s).

    ``eps`` widens the static band; the executor passes ``EPSILON_MOTION`` to
    absorb integrator and filter noise, the bare classification uses 0.
    """
    if not math.isfinite(speed) or speed < 0.0:
        raise DomainError(f"speed must be finite and non-negative, got {speed}")
    if speed <= eps:
        return VelocityState.STATIC
    if speed <= SLOW_MAX_SPEED:
        return VelocityState.SLOW
    return VelocityState.FAST


@dataclass(frozen=True, slots=True)
class Camera:
    position: Vec3 = Vec3(0.0, -12.0, 8.0)
    look_at: Vec3 = Vec3(0.0, 0.0, 0.0)
    fov_deg: float = 60.0
    width: int = 480
    height: int = 320

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit (right, up, forward) vectors in world coordinates."""
        forward = np.array(list(self.look_at)) - np.array(list(self.position))
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, [0.0, 0.0, 1.0])
        if np.linalg.norm(right) < 1e-12:
            right = np.array([1.0, 0.0, 0.0])
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return right, up, forward

    def project(self, point) -> Optional[tuple[float, float]]:
        """Pixel coordinates of a world point, or None behind the camera."""
        right, up, forward = self.basis()
        rel = np.asarray(point, dtype=float) - np.array(list(self.position))
        depth = float(rel @ forward)
        if depth <= 0.0:
            return None
        f = 0.5 * self.width / math.tan(math.radians(self.fov_deg) / 2.0)
        u = 0.5 * self.width + f * float(rel @ right) / depth
        v = 0.5 * self.height - f * float(rel @ up) / depth
        return u, v

    def in_view(self, point) -> bool:
        uv = self.project(point)
        return uv is not None and 0.0 <= uv[0] < self.width and 0.0 <= uv[1] < self.height

    def to_json(self) -> dict:
        return {
            "position": self.position.to_list(),
            "look_at": self.look_at.to_list(),
            "fov_deg": self.fov_deg,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Camera":
        return cls(Vec3.of(d["position"]), Vec3.of(d["look_at"]), d["fov_deg"], d["width"], d["height"])


def direction_of(velocity, camera: Camera, eps: float = EPSILON_MOTION) -> Direction:
    """Label the dominant axis of motion in camera coordinates.

    Ties go to the first axis in x, y, z order.
    """
    v = np.asarray(list(velocity), dtype=float)
    if float(np.linalg.norm(v)) <= eps:
        raise DomainError("object is not moving")
    right, up, forward = camera.basis()
    comps = (float(v @ right), float(v @ up), float(v @ forward))
    labels = ((Direction.RIGHT, Direction.LEFT), (Direction.UP, Direction.DOWN), (Direction.BACK, Direction.FRONT))
    best = 0
    for i in (1, 2):
        if abs(comps[i]) > abs(comps[best]):
            best = i
    pos, neg = labels[best]
    return pos if comps[best] >= 0.0 else neg


# --------------------------------------------------------------------------
# scene-level records


@dataclass(frozen=True, slots=True)
class SceneConfig:
    gravity: float = 10.0
    dt: float = 1.0 / 60.0
    n_frames: int = 120
    friction_object: float = 0.2
    friction_floor: float = 0.4
    restitution: float = 0.5
    arena_radius: float = 4.0
    seed: int = 0
    debounce_frames: int = 10
    # floor impacts slower than this come to rest instead of bouncing
    rest_speed: float = 0.5
    camera: Camera = Camera()

    def __post_init__(self):
        if not self.dt > 0.0:
            raise InvalidSpecError("dt must be positive")
        if self.n_frames <= 0:
            raise InvalidSpecError("n_frames must be positive")
        if not 0.0 <= self.restitution <= 1.0:
            raise InvalidSpecError("restitution must lie in [0, 1]")
        if self.friction_object < 0.0 or self.friction_floor < 0.0:
            raise InvalidSpecError("friction coefficients must be non-negative")

    @property
    def mu_eff(self) -> float:
        return self.friction_object * self.friction_floor

    def to_json(self) -> dict:
        return {
            "gravity": self.gravity,
            "dt": self.dt,
            "n_frames": self.n_frames,
            "friction_object": self.friction_object,
            "friction_floor": self.friction_floor,
            "restitution": self.restitution,
            "arena_radius": self.arena_radius,
            "seed": self.seed,
            "debounce_frames": self.debounce_frames,
            "rest_speed": self.rest_speed,
            "camera": self.camera.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        d["camera"] = Camera.from_json(d["camera"])
        return cls(**d)


@dataclass(frozen=True, slots=True)
class CounterfactualRecord:
    """One re-simulated variant: a single initial property of one object changed."""

    object_id: int
    property: str  # "velocity" | "accelerating" | "floating"
    original_value: object
    new_value: object
    events: tuple[CollisionEvent, ...]

    def to_json(self) -> dict:
        return {
            "object_id": self.object_id,
            "property": self.property,
            "original_value": self.original_value,
            "new_value": self.new_value,
            "events": [e.to_json() for e in self.events],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CounterfactualRecord":
        return cls(
            d["object_id"],
            d["property"],
            d["original_value"],
            d["new_value"],
            tuple(CollisionEvent.from_json(e) for e in d["events"]),
        )


ContactIntervals = dict  # (a, b) -> tuple of (first_frame, last_frame), inclusive


def contact_intervals_to_json(intervals: ContactIntervals) -> list:
    return [
        {"pair": [a, b], "intervals": [[s, e] for s, e in spans]}
        for (a, b), spans in sorted(intervals.items())
    ]


def contact_intervals_from_json(items: list) -> ContactIntervals:
    return {tuple(d["pair"]): tuple((s, e) for s, e in d["intervals"]) for d in items}


@dataclass(frozen=True, eq=False)
class SceneAnnotation:
    scene_id: str
    objects: tuple[ObjectSpec, ...]
    forces: tuple[ForceProfile, ...]
    trajectories: tuple[Trajectory, ...]
    collisions: tuple[CollisionEvent, ...]
    contact_intervals: ContactIntervals
    counterfactuals: tuple[CounterfactualRecord, ...]
    config: SceneConfig

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidSpecError("object ids must be unique")
        if not (len(self.objects) == len(self.forces) == len(self.trajectories)):
            raise InvalidSpecError("objects, forces and trajectories must align")
        for o, f in zip(self.objects, self.forces):
            f.check_for(o.shape)
        known = set(ids)
        for e in self.collisions:
            if e.a not in known or e.b not in known:
                raise InvalidSpecError(f"collision references unknown object: {e}")
            if e.frame >= self.config.n_frames:
                raise InvalidSpecError(f"collision frame {e.frame} beyond horizon")
        for t in self.trajectories:
            if len(t) != self.config.n_frames:
                raise InvalidSpecError("trajectory length differs from n_frames")

    @property
    def camera(self) -> Camera:
        return self.config.camera

    @property
    def object_ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def index_of(self, obj_id: int) -> int:
        for i, o in enumerate(self.objects):
            if o.id == obj_id:
                return i
        raise KeyError(obj_id)

    def obj(self, obj_id: int) -> ObjectSpec:
        return self.objects[self.index_of(obj_id)]

    def force(self, obj_id: int) -> ForceProfile:
        return self.forces[self.index_of(obj_id)]

    def trajectory(self, obj_id: int) -> Trajectory:
        return self.trajectories[self.index_of(obj_id)]

    def replace(self, **changes) -> "SceneAnnotation":
        fields_ = {n: getattr(self, n) for n in self.__dataclass_fields__}
        fields_.update(changes)
        return SceneAnnotation(**fields_)

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "objects": [
                {**o.to_json(), "force": f.to_json()} for o, f in zip(self.objects, self.forces)
            ],
            "trajectories": [t.to_json() for t in self.trajectories],
            "collisions": [e.to_json() for e in self.collisions],
            "contact_intervals": contact_intervals_to_json(self.contact_intervals),
            "counterfactuals": [c.to_json() for c in self.counterfactuals],
            "camera": self.config.camera.to_json(),
            "config": self.config.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SceneAnnotation":
        return cls(
            d["scene_id"],
            tuple(ObjectSpec.from_json(o) for o in d["objects"]),
            tuple(ForceProfile.from_json(o["force"]) for o in d["objects"]),
            tuple(Trajectory.from_json(t) for t in d["trajectories"]),
            tuple(CollisionEvent.from_json(e) for e in d["collisions"]),
            contact_intervals_from_json(d["contact_intervals"]),
            tuple(CounterfactualRecord.from_json(c) for c in d["counterfactuals"]),
            SceneConfig.from_json(d["config"]),
        )


def dumps(data) -> str:
    """Canonical compact JSON text used for every file we write."""
    return json.dumps(data, separators=(",", ":"), allow_nan=False)
