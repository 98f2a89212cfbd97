"""4D state estimation from noisy per-frame observations.

A single-hypothesis Bayes filter: every frame the previous posterior is
pushed one step through the physics engine (the prior mean), then fused
with the frame's observation by the closed-form maximizer of the product
of two isotropic Gaussians.  Velocities and accelerations are derived from
the posterior positions afterwards, and collisions come from the contacts
the prior steps produced.

Setting ``use_prior=False`` gives the observation-only baseline: raw
observations where visible, the previous estimate where not, and
collisions from per-frame overlap tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidSpecError, TrackingError
from .physics import EventRecorder
from .scene import (
    EPSILON_MOTION,
    SUBTYPE_CLASS,
    CollisionEvent,
    ForceProfile,
    ObjectSpec,
    SceneAnnotation,
    SceneConfig,
    Trajectory,
    dumps,
    yaw_quaternion,
)


@dataclass(frozen=True)
class NoiseModel:
    sigma_obs: float = 0.3  # m, per axis
    sigma_rot: float = 0.05  # rad, yaw
    p_drop: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.sigma_obs < 0 or self.sigma_rot < 0:
            raise InvalidSpecError("noise standard deviations must be >= 0")
        if not 0.0 <= self.p_drop < 1.0:
            raise InvalidSpecError("p_drop must lie in [0, 1)")


@dataclass(frozen=True)
class ObjectObservation:
    visible: bool
    position: Optional[tuple] = None
    yaw: Optional[float] = None

    def __post_init__(self):
        if self.visible != (self.position is not None):
            raise InvalidSpecError("visible entries need a pose and invisible ones must not carry one")


@dataclass(frozen=True)
class ObservationFrame:
    frame: int
    entries: dict  # object id -> ObjectObservation


@dataclass(frozen=True)
class ObjectLabel:
    id: int
    shape: str
    color: str


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """All observations of one scene, stored as dense arrays.

    ``positions`` is (T, n, 3) and ``yaws`` (T, n); both are NaN where
    ``visible`` is False.  ``sigma_obs``/``sigma_rot`` are the noise levels
    the front end declares for its measurements.
    """

    scene_id: str
    ids: tuple
    positions: np.ndarray
    yaws: np.ndarray
    visible: np.ndarray
    config: SceneConfig
    sigma_obs: float
    sigma_rot: float
    labels: Optional[tuple] = None  # ObjectLabel per id, if the front end provides them

    def __post_init__(self):
        T, n = self.visible.shape
        if self.positions.shape != (T, n, 3) or self.yaws.shape != (T, n) or len(self.ids) != n:
            raise InvalidSpecError("observation arrays do not align")
        if np.isnan(self.positions[self.visible]).any() or not np.isnan(self.positions[~self.visible]).all():
            raise InvalidSpecError("visible entries need a pose and invisible ones must not carry one")

    @property
    def n_frames(self) -> int:
        return self.visible.shape[0]

    def frame(self, t: int) -> ObservationFrame:
        entries = {}
        for i, oid in enumerate(self.ids):
            if self.visible[t, i]:
                entries[oid] = ObjectObservation(True, tuple(float(c) for c in self.positions[t, i]),
                                                 float(self.yaws[t, i]))
            else:
                entries[oid] = ObjectObservation(False)
        return ObservationFrame(t, entries)

    @classmethod
    def from_frames(cls, scene_id, ids, frames: Sequence[ObservationFrame], config, sigma_obs, sigma_rot, labels=None):
        T, n = len(frames), len(ids)
        pos = np.full((T, n, 3), np.nan)
        yaw = np.full((T, n), np.nan)
        vis = np.zeros((T, n), dtype=bool)
        for t, fr in enumerate(frames):
            for i, oid in enumerate(ids):
                ob = fr.entries.get(oid)
                if ob is not None and ob.visible:
                    vis[t, i] = True
                    pos[t, i] = ob.position
                    yaw[t, i] = ob.yaw
        return cls(scene_id, tuple(ids), pos, yaw, vis, config, sigma_obs, sigma_rot, labels)

    # JSONL: a header line, then one line per frame
    def to_jsonl(self) -> str:
        header = {
            "scene_id": self.scene_id,
            "ids": list(self.ids),
            "config": self.config.to_json(),
            "sigma_obs": self.sigma_obs,
            "sigma_rot": self.sigma_rot,
            "labels": None if self.labels is None else [asdict(lb) for lb in self.labels],
        }
        lines = [dumps(header)]
        for t in range(self.n_frames):
            objs = []
            for i, oid in enumerate(self.ids):
                if self.visible[t, i]:
                    objs.append({"id": oid, "visible": True, "position": self.positions[t, i].tolist(),
                                 "yaw": float(self.yaws[t, i])})
                else:
                    objs.append({"id": oid, "visible": False})
            lines.append(dumps({"frame": t, "objects": objs}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "ObservationSequence":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows:
            raise InvalidSpecError("empty observation file")
        head, body = rows[0], rows[1:]
        ids = tuple(head["ids"])
        frames = []
        for row in body:
            entries = {}
            for o in row["objects"]:
                if o["visible"]:
                    entries[o["id"]] = ObjectObservation(True, tuple(o["position"]), o["yaw"])
                else:
                    entries[o["id"]] = ObjectObservation(False)
            frames.append(ObservationFrame(row["frame"], entries))
        labels = head.get("labels")
        labels = None if labels is None else tuple(ObjectLabel(**lb) for lb in labels)
        return cls.from_frames(head["scene_id"], ids, frames, SceneConfig.from_json(head["config"]),
                               head["sigma_obs"], head["sigma_rot"], labels)


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi


def synthesize_observations(annotation: SceneAnnotation, noise: NoiseModel) -> ObservationSequence:
    """Ground-truth poses plus Gaussian noise, with random per-object dropout."""
    rng = np.random.default_rng([noise.seed, annotation.config.seed])
    pos = np.stack([t.positions for t in annotation.trajectories], axis=1)
    yaw = np.stack([[t.yaw(k) for k in range(len(t))] for t in annotation.trajectories], axis=1)
    pos = pos + rng.normal(0.0, 1.0, pos.shape) * noise.sigma_obs
    yaw = wrap_angle(yaw + rng.normal(0.0, 1.0, yaw.shape) * noise.sigma_rot)
    visible = rng.random(pos.shape[:2]) >= noise.p_drop
    pos[~visible] = np.nan
    yaw[~visible] = np.nan
    labels = tuple(ObjectLabel(o.id, o.shape.subtype, o.color) for o in annotation.objects)
    return ObservationSequence(annotation.scene_id, tuple(annotation.object_ids), pos, yaw, visible,
                               annotation.config, noise.sigma_obs, noise.sigma_rot, labels)


# --------------------------------------------------------------------------
# fusion


def fusion_weight(var_prior: float, var_obs: float) -> float:
    """Weight of the observation in the MAP estimate."""
    if var_prior < 0 or var_obs < 0:
        raise InvalidSpecError("variances must be non-negative")
    if math.isinf(var_prior) and math.isinf(var_obs):
        raise InvalidSpecError("prior and observation cannot both be uninformative")
    if math.isinf(var_prior) or var_obs == 0.0:
        return 1.0
    if math.isinf(var_obs) or var_prior == 0.0:
        return 0.0
    return var_prior / (var_prior + var_obs)


def fuse_map(mu, var_prior: float, z, var_obs: float):
    """Maximizer of N(x; mu, var_prior) * N(z; x, var_obs), per axis.

    ``z`` may be None (missing observation), in which case the prior mean
    is returned.  The result always lies between ``mu`` and ``z``.
    """
    mu = np.asarray(mu, dtype=float)
    if z is None:
        return mu.copy()
    z = np.asarray(z, dtype=float)
    w = fusion_weight(var_prior, var_obs)
    if w == 1.0:
        return z.copy()
    if w == 0.0:
        return mu.copy()
    x = (mu / var_prior + z / var_obs) / (1.0 / var_prior + 1.0 / var_obs)
    return np.clip(x, np.minimum(mu, z), np.maximum(mu, z))


def fuse_yaw(mu, var_prior: float, z, var_obs: float):
    """Yaw fusion on the wrapped difference; missing observation keeps ``mu``."""
    mu = np.asarray(mu, dtype=float)
    if z is None:
        return mu.copy()
    w = fusion_weight(var_prior, var_obs)
    return wrap_angle(mu + w * wrap_angle(np.asarray(z, dtype=float) - mu))


# --------------------------------------------------------------------------
# dynamics attributes


def moving_average(x, window: int = 5) -> np.ndarray:
    """Centered moving average along axis 0; the window shrinks at the ends."""
    if window < 1 or window % 2 == 0:
        raise InvalidSpecError("window must be a positive odd integer")
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    half = window // 2
    total = np.zeros_like(x)
    count = np.zeros(T)
    for off in range(-half, half + 1):
        lo, hi = max(0, -off), min(T, T - off)
        if lo >= hi:
            continue
        total[lo:hi] += x[lo + off:hi + off]
        count[lo:hi] += 1
    return total / count.reshape((T,) + (1,) * (x.ndim - 1))


def derive_dynamics(positions, dt: float, window: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed velocity and acceleration from a position track (axis 0 = time).

    Velocity is the backward difference (v_0 copies v_1), smoothed; the
    acceleration is the backward difference of the smoothed velocity, smoothed
    again with the same window.
    """
    x = np.asarray(positions, dtype=float)
    if x.shape[0] < 2:
        raise InvalidSpecError("need at least two frames")
    v = np.empty_like(x)
    v[1:] = (x[1:] - x[:-1]) / dt
    v[0] = v[1]
    v = moving_average(v, window)
    a = np.empty_like(v)
    a[1:] = (v[1:] - v[:-1]) / dt
    a[0] = a[1]
    return v, moving_average(a, window)


# --------------------------------------------------------------------------
# filter


@dataclass(frozen=True)
class EstimatorConfig:
    # prior variance grows with prediction time: m^2 per second, so one
    # frame of prediction contributes prior_variance * dt
    prior_variance: float = 3.0
    window: int = 5
    obs_variance: Optional[float] = None  # defaults to the sequence's declared sigma_obs^2
    rot_obs_variance: Optional[float] = None
    # velocity correction per unit position innovation; None = critically
    # damped alpha-beta gain for the fusion weight
    velocity_gain: Optional[float] = None
    use_prior: bool = True
    infer_forces: bool = True
    force_window: int = 10
    accel_threshold: float = 0.5
    float_height: float = 0.5
    float_vz: float = 1.0

    def __post_init__(self):
        if not self.prior_variance > 0:
            raise InvalidSpecError("prior variance must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise InvalidSpecError("smoothing window must be odd")
        if self.force_window < 4:
            raise InvalidSpecError("force window too short")

    def frame_prior_variance(self, dt: float) -> float:
        return self.prior_variance * dt

    def to_json(self) -> dict:
        d = asdict(self)
        if math.isinf(d["prior_variance"]):
            d["prior_variance"] = "inf"
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EstimatorConfig":
        d = dict(d)
        if d.get("prior_variance") == "inf":
            d["prior_variance"] = math.inf
        return cls(**d)


def classify_static_attributes(obs: ObservationSequence, hook: Optional[Callable] = None) -> tuple[ObjectSpec, ...]:
    """Shape and color per object, from the stream's labels or from ``hook``.

    ``hook(obs)`` must return ``(id, subtype, color)`` triples.
    """
    if hook is not None:
        triples = [tuple(x) for x in hook(obs)]
    elif obs.labels is not None:
        triples = [(lb.id, lb.shape, lb.color) for lb in obs.labels]
    else:
        raise TrackingError("observations carry no identity labels and no classifier hook is registered")
    by_id = {t[0]: t for t in triples}
    missing = [i for i in obs.ids if i not in by_id]
    if missing:
        raise TrackingError(f"no static attributes for objects {missing}")
    for oid, subtype, _ in triples:
        if subtype not in SUBTYPE_CLASS:
            raise TrackingError(f"object {oid}: unknown shape {subtype!r}")
    return tuple(ObjectSpec.make(oid, by_id[oid][1], by_id[oid][2]) for oid in obs.ids)


@dataclass
class FilterState:
    """Posterior at one frame, in the kernels' array layout."""

    pos: np.ndarray  # (n, 3)
    vel: np.ndarray  # (n, 3) engine velocity state
    quat: np.ndarray  # (n, 4)
    engine: np.ndarray  # (n,)
    floating: np.ndarray  # (n,)

    def copy(self) -> "FilterState":
        return FilterState(self.pos.copy(), self.vel.copy(), self.quat.copy(), self.engine.copy(), self.floating.copy())


@dataclass(frozen=True)
class PriorPrediction:
    pos: np.ndarray
    vel: np.ndarray
    quat: np.ndarray
    contacts: list  # kernel contact tuples (index-based)


def predict_prior(state: FilterState, objects: Sequence[ObjectSpec], config: SceneConfig) -> PriorPrediction:
    """One physics-engine step from the previous posterior."""
    s = state.copy()
    half = np.array([list(o.proxy_extents) for o in objects], dtype=float).reshape(len(objects), 3)
    inv_mass = np.array([1.0 / o.mass for o in objects], dtype=float)
    raw = kernels.step(s.pos, s.vel, s.quat, half, inv_mass, s.engine, s.floating,
                       config.gravity, config.dt, config.mu_eff, config.restitution,
                       config.rest_speed, EPSILON_MOTION)
    return PriorPrediction(s.pos, s.vel, s.quat, raw)


def _contacts_to_manifolds(raw, ids):
    from .physics import ContactManifold
    from .scene import Vec3

    out = []
    for i, j, nx, ny, nz, depth, px, py, pz, imp in raw:
        a, b = ids[i], ids[j]
        n = Vec3(nx, ny, nz) if a < b else Vec3(-nx, -ny, -nz)
        out.append(ContactManifold((min(a, b), max(a, b)), n, depth, Vec3(px, py, pz), imp))
    return out


def _quat_yaw(quat: np.ndarray) -> np.ndarray:
    w, z = quat[:, 0], quat[:, 3]
    return wrap_angle(2.0 * np.arctan2(z, w))


def _yaw_quat(yaw: np.ndarray) -> np.ndarray:
    q = np.zeros((len(yaw), 4))
    for i, y in enumerate(yaw):
        c, s = yaw_quaternion(float(y))
        q[i, 0], q[i, 3] = c, s
    return q


def infer_forces_online(track: np.ndarray, quat: np.ndarray, is_plane: np.ndarray, dt: float, config: EstimatorConfig):
    """Engine and floating forces implied by the last ``force_window`` posterior frames."""
    v = (track[1:] - track[:-1]) / dt
    k = min(3, len(v) // 2)
    span = (len(v) - k) * dt
    acc = (v[-k:].mean(axis=0) - v[:k].mean(axis=0)) / span
    yaw = _quat_yaw(quat)
    forward = acc[:, 0] * np.cos(yaw) + acc[:, 1] * np.sin(yaw)
    engine = (forward > config.accel_threshold).astype(float)
    hovering = (track[-1, :, 2] > config.float_height) & (np.abs(v[:, :, 2].mean(axis=0)) < config.float_vz)
    floating = np.where(is_plane & hovering, 10.0, 0.0)
    return engine, floating


@dataclass(frozen=True, eq=False)
class EstimatedScene:
    scene_id: str
    objects: tuple
    trajectories: tuple  # Trajectory with smoothed velocity/acceleration
    collisions: tuple
    contact_intervals: dict
    prior_means: np.ndarray  # (T, n, 3); frame 0 holds the initial observation
    observations: np.ndarray  # (T, n, 3), NaN where not visible
    posteriors: np.ndarray  # (T, n, 3)
    velocity_states: Optional[np.ndarray]  # (T, n, 3) filter velocity, None for the baseline
    forces: tuple  # force profile inferred at the last frame
    config: SceneConfig
    estimator: EstimatorConfig

    @property
    def object_ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def to_annotation(self) -> SceneAnnotation:
        return SceneAnnotation(self.scene_id, self.objects, self.forces, self.trajectories,
                               self.collisions, self.contact_intervals, (), self.config)

    def to_json(self) -> dict:
        d = self.to_annotation().to_json()
        d["estimated"] = True
        d["estimator"] = self.estimator.to_json()
        d["diagnostics"] = {
            "prior_means": np.round(self.prior_means, 12).tolist(),
            "observations": [[None if np.isnan(p[0]) else p.tolist() for p in frame] for frame in self.observations],
        }
        if self.velocity_states is not None:
            d["diagnostics"]["velocity_states"] = self.velocity_states.tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EstimatedScene":
        ann = SceneAnnotation.from_json(d)
        diag = d.get("diagnostics", {})
        post = np.stack([t.positions for t in ann.trajectories], axis=1)
        prior = np.asarray(diag.get("prior_means", post), dtype=float)
        obs_rows = diag.get("observations")
        if obs_rows is None:
            obs = np.full_like(post, np.nan)
        else:
            obs = np.array([[[np.nan] * 3 if p is None else p for p in frame] for frame in obs_rows], dtype=float)
        vs = diag.get("velocity_states")
        vs = None if vs is None else np.asarray(vs, dtype=float)
        return cls(ann.scene_id, ann.objects, ann.trajectories, ann.collisions, ann.contact_intervals,
                   prior, obs, post, vs, ann.forces, ann.config, EstimatorConfig.from_json(d.get("estimator", {})))


def _first_observed(obs: ObservationSequence) -> np.ndarray:
    seen = obs.visible.any(axis=0)
    if not seen.all():
        missing = [obs.ids[i] for i in np.flatnonzero(~seen)]
        raise TrackingError(f"objects {missing} are never observed")
    return np.argmax(obs.visible, axis=0)


def track_scene(obs: ObservationSequence, config: EstimatorConfig = EstimatorConfig(),
                classifier: Optional[Callable] = None) -> EstimatedScene:
    """Run the filter over a whole observation sequence."""
    objects = classify_static_attributes(obs, classifier)
    scfg = obs.config
    dt = scfg.dt
    T, n = obs.visible.shape
    ids = list(obs.ids)
    first = _first_observed(obs)
    # objects missing at frame 0 start from their first sighting
    init_pos = obs.positions[first, np.arange(n)]
    init_yaw = obs.yaws[first, np.arange(n)]

    var_obs = obs.sigma_obs ** 2 if config.obs_variance is None else config.obs_variance
    var_rot = obs.sigma_rot ** 2 if config.rot_obs_variance is None else config.rot_obs_variance
    var_prior = config.frame_prior_variance(dt)
    w = fusion_weight(var_prior, var_obs)
    beta = w * w / (2.0 - w) if config.velocity_gain is None else config.velocity_gain
    is_plane = np.array([o.shape.is_plane for o in objects])

    post = np.empty((T, n, 3))
    vstates = np.zeros((T, n, 3))
    prior_means = np.empty((T, n, 3))
    quats = np.empty((T, n, 4))
    post[0] = init_pos
    prior_means[0] = init_pos
    quats[0] = _yaw_quat(init_yaw)
    state = FilterState(init_pos.copy(), np.zeros((n, 3)), quats[0].copy(), np.zeros(n), np.zeros(n))
    recorder = EventRecorder(scfg.debounce_frames)
    half = np.array([list(o.proxy_extents) for o in objects], dtype=float).reshape(n, 3)

    for t in range(1, T):
        vis = obs.visible[t]
        if not config.use_prior:
            mu, mu_q = post[t - 1].copy(), quats[t - 1].copy()
            x = mu.copy()
            x[vis] = obs.positions[t, vis]
            yaw = _quat_yaw(mu_q)
            yaw[vis] = obs.yaws[t, vis]
            post[t], prior_means[t], quats[t] = x, mu, _yaw_quat(yaw)
            raw = kernels.detect(np.ascontiguousarray(x), np.ascontiguousarray(quats[t]), half)
            recorder.record(t, _contacts_to_manifolds(raw, ids))
            continue
        if config.infer_forces and t >= config.force_window:
            state.engine, state.floating = infer_forces_online(
                post[t - config.force_window:t], state.quat, is_plane, dt, config)
        pred = predict_prior(state, objects, scfg)
        recorder.record(t, _contacts_to_manifolds(pred.contacts, ids))
        mu = pred.pos
        x = mu.copy()
        if vis.any():
            x[vis] = fuse_map(mu[vis], var_prior, obs.positions[t, vis], var_obs)
        x[:, 2] = np.maximum(x[:, 2], 0.0)
        yaw = _quat_yaw(pred.quat)
        if vis.any():
            yaw[vis] = fuse_yaw(yaw[vis], var_prior, obs.yaws[t, vis], var_rot)
        q = _yaw_quat(yaw)
        vel = pred.vel + beta * (x - mu) / dt
        post[t], prior_means[t], quats[t], vstates[t] = x, mu, q, vel
        state = FilterState(x.copy(), vel, q.copy(), state.engine, state.floating)

    if not np.isfinite(post).all():
        raise TrackingError("estimate diverged")
    trajectories = []
    for i in range(n):
        v, a = derive_dynamics(post[:, i], dt, config.window)
        trajectories.append(Trajectory(post[:, i], quats[:, i], v, a))
    events, intervals = recorder.finish()
    forces = tuple(
        ForceProfile(float(state.engine[i]), float(state.floating[i]) if objects[i].shape.is_plane else 0.0)
        for i in range(n)
    )
    observed = obs.positions.copy()
    return EstimatedScene(obs.scene_id, objects, tuple(trajectories), events, intervals,
                          prior_means, observed, post, vstates if config.use_prior else None,
                          forces, scfg, config)


# --------------------------------------------------------------------------
# metrics


def position_rmse(estimate: EstimatedScene, annotation: SceneAnnotation) -> float:
    gt = np.stack([annotation.trajectory(i).positions for i in estimate.object_ids], axis=1)
    return float(np.sqrt(((estimate.posteriors - gt) ** 2).sum(axis=-1).mean()))


def match_events(predicted: Sequence[CollisionEvent], truth: Sequence[CollisionEvent], tolerance: int = 5) -> int:
    """Number of one-to-one matches (same pair, frames within ``tolerance``).

    Candidate matches are taken greedily in order of frame distance, which
    is optimal here because events of one pair are at least the debounce
    interval apart.
    """
    cands = sorted(
        (abs(p.frame - g.frame), pi, gi)
        for pi, p in enumerate(predicted)
        for gi, g in enumerate(truth)
        if p.pair == g.pair and abs(p.frame - g.frame) <= tolerance
    )
    used_p, used_g = set(), set()
    for _, pi, gi in cands:
        if pi not in used_p and gi not in used_g:
            used_p.add(pi)
            used_g.add(gi)
    return len(used_p)


@dataclass
class EventCounts:
    matched: int = 0
    predicted: int = 0
    truth: int = 0

    def add(self, predicted, truth, tolerance: int = 5) -> "EventCounts":
        self.matched += match_events(predicted, truth, tolerance)
        self.predicted += len(predicted)
        self.truth += len(truth)
        return self

    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 1.0

    @property
    def recall(self) -> float:
        return self.matched / self.truth if self.truth else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def collision_f1(predicted, truth, tolerance: int = 5) -> float:
    return EventCounts().add(predicted, truth, tolerance).f1
