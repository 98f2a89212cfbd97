"""Question templates, program construction and per-scene question generation.

Templates live in ``data/templates.json``.  Each has a text pattern with
``{slot}`` markers and a program skeleton whose rows are
``[label, op, inputs, args]``; two pseudo-ops expand slots into node runs:

* ``$object`` - a descriptor: objects -> filter color -> filter shape -> unique
  (shape-only and color-only descriptors drop one filter);
* ``$anchor`` - a frame: ``frame(begin|end)`` or the frame of the unique
  collision between two described objects.

An op written as ``$slot`` takes its name from a vocabulary slot, and an
argument value written as ``$slot`` takes the slot's value.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ExecutionError, GenerationError, TemplateError
from .executor import ExecContext, GroundTruthScene, answer_token, run_program
from .program import Node, program_to_json, program_from_json, typecheck
from .scene import ANSWER_VOCAB, SceneAnnotation

QUESTION_TYPES = ("factual", "predictive", "counterfactual")
PREDICTIVE_HORIZON = 30
CF_OPS = {
    ("velocity", "static"): "counterfactual_static",
    ("velocity", "slow"): "counterfactual_moving_slow",
    ("velocity", "fast"): "counterfactual_moving_fast",
    ("accelerating", True): "counterfactual_accelerating",
    ("floating", True): "counterfactual_floating",
}


@dataclass(frozen=True)
class Template:
    id: str
    type: str
    subtype: str
    text: str
    slots: dict  # slot name -> kind
    program: tuple
    enabled: bool = True
    distinct: tuple = ()
    only_planes: tuple = ()
    bind: Optional[str] = None

    @property
    def horizon_kind(self) -> str:
        return "predictive" if self.type == "predictive" else "full"


@dataclass(frozen=True)
class TemplateSet:
    templates: tuple
    vocab: dict  # vocab slot kind -> {value: phrase}

    def by_id(self, tid: str) -> Template:
        for t in self.templates:
            if t.id == tid:
                return t
        raise TemplateError(f"unknown template {tid!r}")

    def enabled(self, qtype: Optional[str] = None) -> list[Template]:
        return [t for t in self.templates if t.enabled and (qtype is None or t.type == qtype)]


def load_templates(path=None) -> TemplateSet:
    if path is None:
        text = resources.files("dynreason").joinpath("data/templates.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    temps = []
    for t in raw["templates"]:
        if t["type"] not in QUESTION_TYPES:
            raise TemplateError(f"{t['id']}: bad question type {t['type']!r}")
        temps.append(Template(
            t["id"], t["type"], t["subtype"], t["text"], dict(t["slots"]),
            tuple(tuple(row) for row in t["program"]), t.get("enabled", True),
            tuple(tuple(p) for p in t.get("distinct", ())), tuple(t.get("only_planes", ())), t.get("bind"),
        ))
    ids = [t.id for t in temps]
    if len(set(ids)) != len(ids):
        raise TemplateError("duplicate template ids")
    return TemplateSet(tuple(temps), raw["vocab"])


_DEFAULT: Optional[TemplateSet] = None


def default_templates() -> TemplateSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_templates()
    return _DEFAULT


# --------------------------------------------------------------------------
# bindings

@dataclass(frozen=True)
class Descriptor:
    color: Optional[str]
    shape: Optional[str]

    def text(self) -> str:
        if self.color and self.shape:
            return f"the {self.color} {self.shape}"
        if self.shape:
            return f"the {self.shape}"
        return f"the {self.color} object"


@dataclass(frozen=True)
class Anchor:
    kind: str  # begin | end | collision
    a: Optional[Descriptor] = None
    b: Optional[Descriptor] = None

    def text(self) -> str:
        if self.kind == "begin":
            return "at the beginning"
        if self.kind == "end":
            return "at the end"
        if self.kind == "collision":
            return f"when {self.a.text()} collides with {self.b.text()}"
        raise TemplateError(f"unknown anchor kind {self.kind!r}")


def _descriptor_nodes(d: Descriptor, base: int) -> list[Node]:
    nodes = [Node.make("objects")]
    if d.color:
        nodes.append(Node.make("filter_attributes", [base + len(nodes) - 1], color=d.color))
    if d.shape:
        nodes.append(Node.make("filter_attributes", [base + len(nodes) - 1], shape=d.shape))
    nodes.append(Node.make("unique", [base + len(nodes) - 1]))
    return nodes


def _anchor_nodes(a: Anchor, base: int) -> list[Node]:
    if a.kind in ("begin", "end"):
        return [Node.make("frame", anchor=a.kind)]
    if a.kind != "collision":
        raise TemplateError(f"unknown anchor kind {a.kind!r}")
    nodes = [Node.make("events")]
    da = _descriptor_nodes(a.a, base + 1)
    nodes += da
    nodes.append(Node.make("filter_collision", [base, base + len(nodes) - 1]))
    fa = base + len(nodes) - 1
    db = _descriptor_nodes(a.b, base + len(nodes))
    nodes += db
    nodes.append(Node.make("filter_collision", [fa, base + len(nodes) - 1]))
    nodes.append(Node.make("unique", [base + len(nodes) - 1]))
    nodes.append(Node.make("get_frame", [base + len(nodes) - 1]))
    return nodes


def build_program(template: Template, bindings: dict) -> tuple:
    """Expand a template skeleton with concrete slot bindings."""
    nodes: list[Node] = []
    where: dict = {}
    for row in template.program:
        label, op = row[0], row[1]
        if op in ("$object", "$anchor"):
            slot = row[2]
            if slot not in bindings:
                raise TemplateError(f"{template.id}: slot {slot!r} is unbound")
            fn = _descriptor_nodes if op == "$object" else _anchor_nodes
            nodes += fn(bindings[slot], len(nodes))
        else:
            if op.startswith("$"):
                op = bindings.get(op[1:])
                if op is None:
                    raise TemplateError(f"{template.id}: slot {row[1][1:]!r} is unbound")
            inputs = [where[x] for x in row[2]]
            args = {}
            for k, v in row[3].items():
                if isinstance(v, str) and v.startswith("$"):
                    if v[1:] not in bindings:
                        raise TemplateError(f"{template.id}: slot {v[1:]!r} is unbound")
                    v = bindings[v[1:]]
                args[k] = v
            nodes.append(Node.make(op, inputs, **args))
        where[label] = len(nodes) - 1
    return tuple(nodes)


def render_text(template: Template, bindings: dict, vocab: Optional[dict] = None) -> str:
    vocab = default_templates().vocab if vocab is None else vocab
    parts = {}
    for slot, kind in template.slots.items():
        if slot not in bindings:
            raise TemplateError(f"{template.id}: slot {slot!r} is unbound")
        value = bindings[slot]
        if kind in ("object", "shape_only", "color_only", "anchor"):
            parts[slot] = value.text()
        else:
            parts[slot] = vocab[kind][value]
    text = template.text.format(**parts)
    return text[0].upper() + text[1:]


# --------------------------------------------------------------------------
# questions

@dataclass(frozen=True)
class Question:
    scene_id: str
    question_id: str
    template_id: str
    type: str
    subtype: str
    text: str
    program: tuple
    answer: str
    observed_frames: int

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "question_id": self.question_id,
            "template_id": self.template_id,
            "type": self.type,
            "subtype": self.subtype,
            "text": self.text,
            "program": program_to_json(self.program),
            "answer": self.answer,
            "observed_frames": self.observed_frames,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Question":
        return cls(d["scene_id"], d["question_id"], d["template_id"], d["type"], d["subtype"], d["text"],
                   program_from_json(d["program"]), d["answer"], d["observed_frames"])


@dataclass(frozen=True)
class QuestionMix:
    factual: int = 8
    predictive: int = 3
    counterfactual: int = 1

    def count(self, qtype: str) -> int:
        return getattr(self, qtype)


def horizon_for(qtype: str, n_frames: int) -> int:
    return PREDICTIVE_HORIZON if qtype == "predictive" else n_frames


def _descriptor(scene: SceneAnnotation, oid: int) -> Descriptor:
    o = scene.obj(oid)
    return Descriptor(o.color, o.shape.subtype)


def _anchors(scene: SceneAnnotation, horizon: int) -> list[Anchor]:
    out = [Anchor("begin"), Anchor("end")]
    counts: dict = {}
    for e in scene.collisions:
        if e.frame < horizon:
            counts[e.pair] = counts.get(e.pair, 0) + 1
    for (a, b), k in sorted(counts.items()):
        if k == 1:
            out.append(Anchor("collision", _descriptor(scene, a), _descriptor(scene, b)))
    return out


def enumerate_bindings(template: Template, scene: SceneAnnotation, templates: TemplateSet) -> list[dict]:
    """Every slot assignment of ``template`` that is well formed on ``scene``."""
    horizon = horizon_for(template.type, scene.config.n_frames)
    ids = scene.object_ids
    choices: dict[str, list] = {}
    for slot, kind in template.slots.items():
        if kind == "object":
            pool = ids
            if slot in template.only_planes:
                pool = [i for i in ids if scene.obj(i).shape.is_plane]
            choices[slot] = [("obj", i) for i in pool]
        elif kind == "shape_only":
            shapes = [scene.obj(i).shape.subtype for i in ids]
            choices[slot] = [("shape", s) for s in sorted(set(shapes)) if shapes.count(s) == 1]
        elif kind == "color_only":
            colors = [scene.obj(i).color for i in ids]
            choices[slot] = [("color", c) for c in sorted(set(colors)) if colors.count(c) == 1]
        elif kind == "anchor":
            choices[slot] = [("anchor", a) for a in _anchors(scene, horizon)]
        elif kind in templates.vocab:
            choices[slot] = [("word", w) for w in templates.vocab[kind]]
        else:
            raise TemplateError(f"{template.id}: unknown slot kind {kind!r}")

    if template.bind == "counterfactual":
        records = []
        for rec in scene.counterfactuals:
            op = CF_OPS.get((rec.property, rec.new_value))
            if op is not None:
                records.append((rec.object_id, op))
        choices["obj"] = [("obj", oid) for oid, _ in records]
        choices["cf"] = [("word", op) for _, op in records]

    slots = list(template.slots)
    out = []
    if template.bind == "counterfactual":
        rest = [s for s in slots if s not in ("obj", "cf")]
        combos = [
            dict(zip(["obj", "cf"] + rest, (o, c) + tuple(r)))
            for (o, c) in zip(choices["obj"], choices["cf"])
            for r in itertools.product(*(choices[s] for s in rest))
        ]
    else:
        combos = [dict(zip(slots, vals)) for vals in itertools.product(*(choices[s] for s in slots))]
    for combo in combos:
        if any(combo[a] == combo[b] for a, b in template.distinct):
            continue
        binding = {}
        for slot, (tag, val) in combo.items():
            if tag == "obj":
                binding[slot] = _descriptor(scene, val)
            elif tag == "shape":
                binding[slot] = Descriptor(None, val)
            elif tag == "color":
                binding[slot] = Descriptor(val, None)
            else:
                binding[slot] = val
        out.append(binding)
    return out


def instantiate(template: Template, bindings: dict, scene: SceneAnnotation, ctx: ExecContext,
                templates: TemplateSet) -> Optional[tuple]:
    """(text, program, answer) or None when the binding has no valid answer on this scene."""
    program = build_program(template, bindings)
    typecheck(program)
    try:
        value = run_program(program, ctx)[-1]
    except ExecutionError:
        return None
    answer = answer_token(value)
    if answer not in ANSWER_VOCAB:
        raise TemplateError(f"{template.id}: answer {answer!r} outside the vocabulary")
    return render_text(template, bindings, templates.vocab), program, answer


def balance_answers(questions: Sequence, seed=0, key=lambda q: (q.template_id, q.answer)) -> list:
    """Subsample true/false answers per template toward a 60/40 split.

    ``key`` maps an item to (template id, answer).  Templates whose answers
    are not boolean, or that have only one answer value, are left alone.
    """
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for k, q in enumerate(questions):
        tid, ans = key(q)
        groups.setdefault(tid, {}).setdefault(ans, []).append(k)
    drop = set()
    for tid, by_ans in sorted(groups.items()):
        if set(by_ans) != {"true", "false"}:
            continue
        small, big = sorted(by_ans.values(), key=len)
        limit = (3 * len(small)) // 2
        if len(big) > limit:
            picked = rng.choice(len(big), size=len(big) - limit, replace=False)
            drop.update(big[int(i)] for i in picked)
    return [q for k, q in enumerate(questions) if k not in drop]


def scene_candidates(scene: SceneAnnotation, templates: Optional[TemplateSet] = None,
                     qtypes: Iterable[str] = QUESTION_TYPES) -> dict:
    """All answerable (template, text, program, answer) per question type."""
    templates = default_templates() if templates is None else templates
    rep = GroundTruthScene(scene)
    out = {}
    for qtype in qtypes:
        ctx = ExecContext(rep, horizon_for(qtype, scene.config.n_frames))
        rows = []
        for t in templates.enabled(qtype):
            for b in enumerate_bindings(t, scene, templates):
                r = instantiate(t, b, scene, ctx, templates)
                if r is not None:
                    rows.append((t, *r))
        out[qtype] = rows
    return out


def generate_questions(scene: SceneAnnotation, mix: QuestionMix = QuestionMix(), seed=0,
                       templates: Optional[TemplateSet] = None) -> list[Question]:
    """Sample a balanced question set for one scene.

    Per type: pick a template uniformly among those with candidates, then an
    answer value uniformly, then a candidate with that answer.
    """
    templates = default_templates() if templates is None else templates
    rng = np.random.default_rng([seed, 11])
    cands = scene_candidates(scene, templates)
    questions = []
    for qtype in QUESTION_TYPES:
        rows = balance_answers(cands[qtype], seed=[seed, 13], key=lambda r: (r[0].id, r[3]))
        pools: dict = {}
        for r in rows:
            pools.setdefault(r[0].id, {}).setdefault(r[3], []).append(r)
        seen_text = set()
        for _ in range(mix.count(qtype)):
            live = sorted(tid for tid, by in pools.items() if any(by.values()))
            if not live:
                break
            tid = live[int(rng.integers(len(live)))]
            answers = sorted(a for a, lst in pools[tid].items() if lst)
            ans = answers[int(rng.integers(len(answers)))]
            lst = pools[tid][ans]
            t, text, program, answer = lst.pop(int(rng.integers(len(lst))))
            if text in seen_text:
                continue
            seen_text.add(text)
            k = len(questions)
            questions.append(Question(scene.scene_id, f"{scene.scene_id}-q{k:02d}", t.id, qtype, t.subtype, text,
                                      program, answer, horizon_for(qtype, scene.config.n_frames)))
    if not questions:
        raise GenerationError(f"scene {scene.scene_id}: no template produced a question")
    return questions
