"""Dataset pipeline: generation, estimation, answering and evaluation on disk.

Every file is written with canonical compact JSON so identical inputs give
identical bytes.  Scene-level work is fanned out over a process pool and
gathered in scene-id order.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import (
    DynReasonError,
    ExecutionError,
    GenerationError,
    ParseError,
    TrackingError,
    UniqueViolation,
)
from .estimator import (
    EstimatedScene,
    EstimatorConfig,
    NoiseModel,
    EventCounts,
    position_rmse,
    synthesize_observations,
    track_scene,
)
from .executor import ExecContext, EstimatedSceneRepresentation, GroundTruthScene, execute
from .generator import GeneratorConfig, apply_modification, generate_scene, initial_world
from .parser import parse
from .physics import simulate
from .questions import QUESTION_TYPES, Question, QuestionMix, generate_questions
from .scene import SceneAnnotation, SceneConfig, dumps, event_keys

WORKERS_ENV = "DYNREASON_WORKERS"
FACTUAL_SUBTYPES = ("velocity", "acceleration", "collision")
ERROR_CLASSES = ("wrong-answer", "unique-violation", "unanswerable", "parse-failure")

PRESETS = {
    "desk": {"test": 100},
    "full": {"train": 1000, "val": 100, "test": 100},
}

DEFAULT_THRESHOLDS = {
    "gt": {"overall": 1.0},
    "estimated": {"overall": 0.0},
}


# --------------------------------------------------------------------------
# small IO helpers


def worker_count(explicit: Optional[int] = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def pool_map(fn: Callable, items: list, workers: int) -> list:
    """Ordered map; results come back in input order whatever the pool does."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n", encoding="utf-8")


def read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path: Path, rows: Iterable) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(dumps(r) + "\n")


def read_jsonl(path: Path) -> list:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def hash_tree(root: Path, skip: Iterable[str] = ("manifest.json",)) -> dict:
    """Relative path -> sha256 for every file under ``root``."""
    root = Path(root)
    skip = set(skip)
    return {
        p.relative_to(root).as_posix(): sha256_file(p)
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.relative_to(root).as_posix() not in skip
    }


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def scene_seed(seed: int, split: str, index: int) -> int:
    salt = int.from_bytes(hashlib.sha256(split.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence([seed, salt, index]).generate_state(1)[0])


# --------------------------------------------------------------------------
# generate


@dataclass(frozen=True)
class SceneJob:
    scene_id: str
    split: str
    seed: int
    generator: dict
    scene: dict
    mix: tuple


def _generate_one(job: SceneJob) -> tuple[str, str, list]:
    try:
        ann = generate_scene(job.scene_id, job.seed, GeneratorConfig.from_json(job.generator),
                             SceneConfig.from_json(job.scene))
        qs = generate_questions(ann, QuestionMix(*job.mix), seed=job.seed)
    except DynReasonError as e:
        raise GenerationError(f"scene {job.scene_id} (seed {job.seed}): {e}") from e
    rows = [{**q.to_json(), "split": job.split} for q in qs]
    return job.scene_id, dumps(ann.to_json()), rows


def generate_dataset(out: Path, seed: int = 0, splits: Optional[dict] = None,
                     generator: GeneratorConfig = GeneratorConfig(), scene: SceneConfig = SceneConfig(),
                     mix: QuestionMix = QuestionMix(), thresholds: Optional[dict] = None,
                     workers: int = 1, preset: str = "desk") -> dict:
    out = Path(out)
    splits = dict(PRESETS[preset] if splits is None else splits)
    jobs = []
    for split, count in splits.items():
        for i in range(count):
            sid = f"{split}_{i:05d}"
            jobs.append(SceneJob(sid, split, scene_seed(seed, split, i), generator.to_json(), scene.to_json(),
                                 (mix.factual, mix.predictive, mix.counterfactual)))
    results = pool_map(_generate_one, jobs, workers)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    questions = []
    for sid, text, rows in results:
        (out / "scenes" / f"{sid}.json").write_text(text + "\n", encoding="utf-8")
        questions += rows
    write_jsonl(out / "questions.jsonl", questions)
    counts = {t: sum(q["type"] == t for q in questions) for t in QUESTION_TYPES}
    manifest = {
        "kind": "dataset",
        "preset": preset,
        "seed": seed,
        "splits": splits,
        "scenes": [{"scene_id": j.scene_id, "split": j.split, "seed": j.seed} for j in jobs],
        "generator": generator.to_json(),
        "scene_config": scene.to_json(),
        "mix": asdict(mix),
        "question_counts": counts,
        "thresholds": DEFAULT_THRESHOLDS if thresholds is None else thresholds,
        "build": git_describe(),
        "hashes": hash_tree(out),
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def load_scene(dataset: Path, scene_id: str) -> SceneAnnotation:
    path = Path(dataset) / "scenes" / f"{scene_id}.json"
    if not path.exists():
        raise FileNotFoundError(f"no scene {scene_id!r} in {dataset}")
    return SceneAnnotation.from_json(read_json(path))


def load_questions(dataset: Path) -> list[Question]:
    return [Question.from_json(d) for d in read_jsonl(Path(dataset) / "questions.jsonl")]


def scene_ids(dataset: Path, split: Optional[str] = None) -> list[str]:
    m = read_json(Path(dataset) / "manifest.json")
    return [s["scene_id"] for s in m["scenes"] if split is None or s["split"] == split]


# --------------------------------------------------------------------------
# estimate


@dataclass(frozen=True)
class EstimateJob:
    dataset: str
    scene_id: str
    noise: dict
    estimator: dict


def _estimate_one(job: EstimateJob) -> dict:
    ann = load_scene(Path(job.dataset), job.scene_id)
    obs = synthesize_observations(ann, NoiseModel(**job.noise))
    diag = {"scene_id": job.scene_id}
    try:
        est = track_scene(obs, EstimatorConfig.from_json(job.estimator))
    except TrackingError as e:
        return {"diag": {**diag, "error": str(e)}, "observations": obs.to_jsonl(), "estimate": None}
    counts = EventCounts().add(est.collisions, ann.collisions)
    diag.update({
        "events_matched": counts.matched,
        "events_predicted": counts.predicted,
        "events_truth": counts.truth,
        "rmse": position_rmse(est, ann),
        "collision_precision": counts.precision,
        "collision_recall": counts.recall,
        "collision_f1": counts.f1,
        "error": None,
    })
    return {"diag": diag, "observations": obs.to_jsonl(), "estimate": dumps(est.to_json())}


def estimate_dataset(dataset: Path, out: Path, noise: NoiseModel = NoiseModel(),
                     config: EstimatorConfig = EstimatorConfig(), split: Optional[str] = None,
                     workers: int = 1) -> dict:
    dataset, out = Path(dataset), Path(out)
    ids = scene_ids(dataset, split)
    jobs = [EstimateJob(str(dataset), sid, asdict(noise), config.to_json()) for sid in ids]
    results = pool_map(_estimate_one, jobs, workers)
    (out / "estimates").mkdir(parents=True, exist_ok=True)
    (out / "observations").mkdir(parents=True, exist_ok=True)
    diags = []
    for sid, r in zip(ids, results):
        (out / "observations" / f"{sid}.jsonl").write_text(r["observations"], encoding="utf-8")
        if r["estimate"] is not None:
            (out / "estimates" / f"{sid}.json").write_text(r["estimate"] + "\n", encoding="utf-8")
        diags.append(r["diag"])
    write_jsonl(out / "diagnostics.jsonl", diags)
    ok = [d for d in diags if d["error"] is None]
    summary = {
        "n_scenes": len(diags),
        "n_failed": len(diags) - len(ok),
        "mean_rmse": float(np.mean([d["rmse"] for d in ok])) if ok else None,
        "collision_f1": EventCounts(sum(d["events_matched"] for d in ok), sum(d["events_predicted"] for d in ok),
                                    sum(d["events_truth"] for d in ok)).f1 if ok else None,
    }
    manifest = {
        "kind": "estimates",
        "dataset": read_json(dataset / "manifest.json")["hashes"],
        "split": split,
        "noise": asdict(noise),
        "estimator": config.to_json(),
        "summary": summary,
        "build": git_describe(),
        "hashes": hash_tree(out),
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def load_estimate(estimates: Path, scene_id: str) -> Optional[EstimatedScene]:
    path = Path(estimates) / "estimates" / f"{scene_id}.json"
    if not path.exists():
        return None
    return EstimatedScene.from_json(read_json(path))


# --------------------------------------------------------------------------
# answer


def error_class(exc: Exception) -> str:
    if isinstance(exc, ParseError):
        return "parse-failure"
    if isinstance(exc, UniqueViolation):
        return "unique-violation"
    return "unanswerable"


@dataclass(frozen=True)
class AnswerJob:
    dataset: str
    scene_id: str
    questions: tuple
    states: str
    parser: str
    estimates: Optional[str]


def _answer_one(job: AnswerJob) -> list[dict]:
    qs = [Question.from_json(d) for d in job.questions]
    if job.states == "gt":
        rep = GroundTruthScene(load_scene(Path(job.dataset), job.scene_id))
    else:
        est = load_estimate(Path(job.estimates), job.scene_id)
        rep = None if est is None else EstimatedSceneRepresentation(est)
    rows = []
    for q in qs:
        row = {"question_id": q.question_id, "scene_id": q.scene_id, "states": job.states,
               "parser": job.parser, "answer": None, "error": None}
        try:
            if rep is None:
                raise TrackingError(f"no estimate for scene {q.scene_id}")
            program = parse(q.text) if job.parser == "nl" else q.program
            row["answer"] = execute(program, ExecContext(rep, q.observed_frames))
        except (ExecutionError, ParseError, TrackingError) as e:
            row["error"] = error_class(e)
            row["detail"] = str(e)
        rows.append(row)
    return rows


def answer_questions(dataset: Path, out: Path, states: str = "gt", parser: str = "stored",
                     estimates: Optional[Path] = None, split: Optional[str] = None,
                     workers: int = 1) -> list[dict]:
    if states not in ("gt", "estimated"):
        raise ValueError(f"unknown states {states!r}")
    if parser not in ("stored", "nl"):
        raise ValueError(f"unknown parser {parser!r}")
    if states == "estimated" and estimates is None:
        raise ValueError("states=estimated needs an estimates directory")
    by_scene: dict = {}
    for d in read_jsonl(Path(dataset) / "questions.jsonl"):
        if split is None or d.get("split") == split:
            by_scene.setdefault(d["scene_id"], []).append(d)
    jobs = [AnswerJob(str(dataset), sid, tuple(rows), states, parser, None if estimates is None else str(estimates))
            for sid, rows in sorted(by_scene.items())]
    rows = [r for chunk in pool_map(_answer_one, jobs, workers) for r in chunk]
    write_jsonl(Path(out), rows)
    return rows


# --------------------------------------------------------------------------
# eval


def _acc(correct: int, total: int) -> Optional[float]:
    return correct / total if total else None


@dataclass
class EvalReport:
    overall: Optional[float]
    n: int
    per_type: dict = field(default_factory=dict)  # type -> {"accuracy", "n"}
    factual_subtypes: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    states: Optional[str] = None

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        def fmt(x):
            return "  n/a" if x is None else f"{100 * x:5.1f}"
        lines = [f"{'group':<16}{'acc':>7}{'n':>7}", f"{'overall':<16}{fmt(self.overall):>7}{self.n:>7}"]
        for k, v in self.per_type.items():
            lines.append(f"{k:<16}{fmt(v['accuracy']):>7}{v['n']:>7}")
        for k, v in self.factual_subtypes.items():
            lines.append(f"{'  ' + k:<16}{fmt(v['accuracy']):>7}{v['n']:>7}")
        lines.append("errors: " + " ".join(f"{k}={v}" for k, v in self.errors.items()))
        return "\n".join(lines)


def evaluate(answers: list[dict], questions: list[Question]) -> EvalReport:
    qmap = {q.question_id: q for q in questions}
    amap = {a["question_id"]: a for a in answers}
    if set(qmap) != set(amap):
        missing = sorted(set(qmap) ^ set(amap))[:5]
        raise ValueError(f"question ids do not match answers, e.g. {missing}")
    errors = dict.fromkeys(ERROR_CLASSES, 0)
    tally: dict = {}
    for qid, q in qmap.items():
        a = amap[qid]
        ok = a.get("error") is None and a.get("answer") == q.answer
        if not ok:
            errors[a.get("error") or "wrong-answer"] += 1
        for key in ("all", q.type, (q.type, q.subtype)):
            c, n = tally.get(key, (0, 0))
            tally[key] = (c + ok, n + 1)
    per_type = {t: {"accuracy": _acc(*tally.get(t, (0, 0))), "n": tally.get(t, (0, 0))[1]} for t in QUESTION_TYPES}
    sub = {s: {"accuracy": _acc(*tally.get(("factual", s), (0, 0))), "n": tally.get(("factual", s), (0, 0))[1]}
           for s in FACTUAL_SUBTYPES}
    states = {a.get("states") for a in answers}
    c, n = tally.get("all", (0, 0))
    return EvalReport(_acc(c, n), n, per_type, sub, errors, states.pop() if len(states) == 1 else None)


def threshold_failures(report: EvalReport, thresholds: dict) -> list[str]:
    """Human-readable list of thresholds the report misses."""
    fails = []
    for key, need in thresholds.items():
        have = report.overall if key == "overall" else (report.per_type.get(key) or {}).get("accuracy")
        if have is None:
            continue
        if have < need:
            fails.append(f"{key}: {have:.4f} < {need:.4f}")
    return fails


# --------------------------------------------------------------------------
# resimulate


@dataclass
class ResimDiff:
    scene_id: str
    modification: dict
    base_events: list
    new_events: list
    removed: list
    added: list
    max_divergence: dict  # object id -> max position difference over the clip
    first_divergent_frame: dict  # object id -> first frame that differs, or None

    def to_json(self) -> dict:
        return asdict(self)


def resimulate(annotation: SceneAnnotation, obj_id: int, prop: str, value) -> ResimDiff:
    world = apply_modification(initial_world(annotation), obj_id, prop, value)
    result = simulate(world, annotation.config)
    base, new = event_keys(annotation.collisions), event_keys(result.collisions)
    max_div, first = {}, {}
    for o, old_t, new_t in zip(annotation.objects, annotation.trajectories, result.trajectories):
        d = np.linalg.norm(np.asarray(old_t.positions) - np.asarray(new_t.positions), axis=1)
        oid = o.id
        max_div[oid] = float(d.max())
        hits = np.nonzero(d > 0.0)[0]
        first[oid] = int(hits[0]) if len(hits) else None
    return ResimDiff(
        annotation.scene_id,
        {"object_id": obj_id, "property": prop, "value": value},
        [list(k) for k in base],
        [list(k) for k in new],
        [list(k) for k in base if k not in set(new)],
        [list(k) for k in new if k not in set(base)],
        max_div,
        first,
    )
