"""Reasoning programs: typed operation nodes and a static type checker.

A program is a sequence of nodes.  Each node names an operation, refers to
earlier nodes by index for its inputs, and carries literal arguments
(attribute values, anchors, velocity states).  The last node's value is the
answer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ProgramTypeError
from .scene import COLORS, SUBTYPES, VelocityState

OBJECT = "Object"
OBJECT_SET = "ObjectSet"
EVENT = "CollisionEvent"
EVENT_SET = "CollisionEventSet"
FRAME = "FrameID"
BOOL = "Bool"
SHAPE = "Shape"
COLOR = "Color"
VELOCITY = "VelocityState"
DIRECTION = "Direction"

ANSWER_TYPES = {BOOL, SHAPE, COLOR, DIRECTION}

COUNTERFACTUAL_OPS = (
    "counterfactual_static",
    "counterfactual_moving_slow",
    "counterfactual_moving_fast",
    "counterfactual_accelerating",
    "counterfactual_floating",
)


@dataclass(frozen=True)
class OpSpec:
    inputs: tuple  # each entry a type name or a tuple of accepted type names
    output: object  # a type name, or a callable mapping input types to one
    args: Mapping[str, tuple] = None  # allowed literal values per argument


def _element_of(types):
    return OBJECT if types[0] == OBJECT_SET else EVENT


OPS: dict[str, OpSpec] = {
    # input operations
    "objects": OpSpec((), OBJECT_SET),
    "events": OpSpec((), EVENT_SET),
    "future_events": OpSpec((), EVENT_SET),
    # event operations
    "filter_collision": OpSpec((EVENT_SET, OBJECT), EVENT_SET),
    "get_all_col_partners": OpSpec((EVENT_SET, OBJECT), OBJECT_SET),
    "get_frame": OpSpec((EVENT,), FRAME),
    "come_in_frame": OpSpec((OBJECT,), FRAME),
    # object filters
    "filter_attributes": OpSpec((OBJECT_SET,), OBJECT_SET, {"color": COLORS, "shape": SUBTYPES}),
    "filter_static": OpSpec((OBJECT_SET, FRAME), OBJECT_SET),
    "filter_moving_velocity": OpSpec(
        (OBJECT_SET, FRAME), OBJECT_SET, {"state": tuple(s.value for s in VelocityState)}
    ),
    "filter_accelerating": OpSpec((OBJECT_SET, FRAME), OBJECT_SET),
    "filter_floating": OpSpec((OBJECT_SET, FRAME), OBJECT_SET),
    # object queries
    "query_attributes": OpSpec((OBJECT,), lambda t, args: COLOR if args["attribute"] == "color" else SHAPE,
                               {"attribute": ("color", "shape")}),
    "is_static": OpSpec((OBJECT, FRAME), BOOL),
    "query_moving_velocity": OpSpec((OBJECT, FRAME), VELOCITY),
    "query_moving_direction": OpSpec((OBJECT, FRAME), DIRECTION),
    "is_accelerating": OpSpec((OBJECT, FRAME), BOOL),
    "is_floating": OpSpec((OBJECT, FRAME), BOOL),
    # comparisons
    "faster_velocity": OpSpec((OBJECT, OBJECT, FRAME), BOOL),
    "slower_velocity": OpSpec((OBJECT, OBJECT, FRAME), BOOL),
    # others
    "unique": OpSpec(((OBJECT_SET, EVENT_SET),), lambda t, args: _element_of(t)),
    "exist": OpSpec(((OBJECT_SET, EVENT_SET),), BOOL),
    # literals and comparison against a constant (not in the original table)
    "frame": OpSpec((), FRAME, {"anchor": ("begin", "end")}),
    "equal": OpSpec(((VELOCITY, COLOR, SHAPE, DIRECTION),), BOOL),
}
for _name in COUNTERFACTUAL_OPS:
    OPS[_name] = OpSpec((OBJECT,), EVENT_SET)

PAPER_OPS = frozenset(OPS) - {"frame", "equal"}


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple = ()
    args: tuple = ()  # sorted (key, value) pairs

    @classmethod
    def make(cls, op: str, inputs: Iterable[int] = (), **args) -> "Node":
        return cls(op, tuple(inputs), tuple(sorted(args.items())))

    @property
    def arg(self) -> dict:
        return dict(self.args)

    def to_json(self) -> dict:
        return {"op": self.op, "inputs": list(self.inputs), "args": dict(self.args)}

    @classmethod
    def from_json(cls, d: Mapping) -> "Node":
        return cls(d["op"], tuple(d.get("inputs", ())), tuple(sorted(d.get("args", {}).items())))


Program = tuple  # tuple[Node, ...]


def program_to_json(program) -> list:
    return [n.to_json() for n in program]


def program_from_json(items) -> tuple:
    if isinstance(items, str):
        items = json.loads(items)
    return tuple(Node.from_json(d) for d in items)


def typecheck(program) -> list[str]:
    """Infer the type of every node; raises ProgramTypeError on any mismatch."""
    if not program:
        raise ProgramTypeError("empty program")
    types: list[str] = []
    for k, node in enumerate(program):
        spec = OPS.get(node.op)
        if spec is None:
            raise ProgramTypeError(f"node {k}: unknown operation {node.op!r}")
        if len(node.inputs) != len(spec.inputs):
            raise ProgramTypeError(
                f"node {k}: {node.op} takes {len(spec.inputs)} inputs, got {len(node.inputs)}"
            )
        in_types = []
        for ref, expected in zip(node.inputs, spec.inputs):
            if not 0 <= ref < k:
                raise ProgramTypeError(f"node {k}: input {ref} does not refer to an earlier node")
            got = types[ref]
            accepted = expected if isinstance(expected, tuple) else (expected,)
            if got not in accepted:
                raise ProgramTypeError(f"node {k}: {node.op} expects {expected}, got {got}")
            in_types.append(got)
        args = node.arg
        allowed = spec.args or {}
        if node.op == "equal":
            if set(args) != {"value"}:
                raise ProgramTypeError(f"node {k}: equal needs exactly a 'value' argument")
        elif node.op in ("filter_attributes",):
            if len(args) != 1 or not set(args) <= set(allowed):
                raise ProgramTypeError(f"node {k}: filter_attributes needs one of color/shape")
        elif set(args) != set(allowed):
            raise ProgramTypeError(f"node {k}: {node.op} arguments {sorted(args)} != {sorted(allowed)}")
        for key, value in args.items():
            if key in allowed and value not in allowed[key]:
                raise ProgramTypeError(f"node {k}: {value!r} is not a valid {key}")
        out = spec.output(in_types, args) if callable(spec.output) else spec.output
        types.append(out)
    return types


def answer_type(program) -> str:
    out = typecheck(program)[-1]
    if out not in ANSWER_TYPES:
        raise ProgramTypeError(f"program ends in {out}, which is not an answer type")
    return out
