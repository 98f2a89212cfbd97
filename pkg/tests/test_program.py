import pytest

from dynreason.errors import ProgramTypeError
from dynreason.program import (
    OPS,
    PAPER_OPS,
    Node,
    answer_type,
    program_from_json,
    program_to_json,
    typecheck,
)

N = Node.make


def desc(base, color, shape):
    return [N("objects"), N("filter_attributes", [base], color=color), N("filter_attributes", [base + 1], shape=shape),
            N("unique", [base + 2])]


def test_operation_table_complete():
    expected = {
        "objects", "events", "future_events", "filter_collision", "get_all_col_partners", "get_frame",
        "come_in_frame", "filter_attributes", "filter_static", "filter_moving_velocity", "filter_accelerating",
        "filter_floating", "query_attributes", "is_static", "query_moving_velocity", "query_moving_direction",
        "is_accelerating", "is_floating", "faster_velocity", "slower_velocity", "unique", "exist",
        "counterfactual_static", "counterfactual_moving_slow", "counterfactual_moving_fast",
        "counterfactual_accelerating", "counterfactual_floating",
    }
    assert PAPER_OPS == expected
    assert set(OPS) == expected | {"frame", "equal"}


def test_typecheck_velocity_program():
    p = tuple(desc(0, "red", "sedan") + [N("frame", anchor="begin"), N("query_moving_velocity", [3, 4]),
                                         N("equal", [5], value="slow")])
    assert typecheck(p)[-2:] == ["VelocityState", "Bool"]
    assert answer_type(p) == "Bool"


def test_query_attribute_types():
    p = tuple(desc(0, "red", "sedan") + [N("query_attributes", [3], attribute="color")])
    assert answer_type(p) == "Color"
    p = tuple(desc(0, "red", "sedan") + [N("query_attributes", [3], attribute="shape")])
    assert answer_type(p) == "Shape"


@pytest.mark.parametrize("program,msg", [
    ((), "empty"),
    ((N("objects"), N("bogus", [0])), "unknown operation"),
    ((N("objects"), N("exist", [1])), "earlier node"),
    ((N("objects"), N("is_static", [0, 0])), "expects"),
    ((N("objects"), N("filter_attributes", [0], color="orange")), "not a valid"),
    ((N("objects"), N("filter_attributes", [0], color="red", shape="sedan")), "one of"),
    ((N("frame", anchor="middle"),), "not a valid"),
    ((N("events"), N("unique", [0]), N("get_frame", [1]), N("exist", [2])), "expects"),
])
def test_typecheck_rejects(program, msg):
    with pytest.raises(ProgramTypeError, match=msg):
        typecheck(program)


def test_non_answer_ending_rejected():
    with pytest.raises(ProgramTypeError):
        answer_type((N("objects"),))


def test_json_roundtrip():
    p = tuple(desc(0, "red", "sedan") + [N("frame", anchor="end"), N("is_static", [3, 4])])
    assert program_from_json(program_to_json(p)) == p
    assert Node.from_json({"op": "objects"}) == N("objects")
