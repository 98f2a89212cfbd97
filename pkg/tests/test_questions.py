import json
from collections import Counter

import pytest

from dynreason.errors import TemplateError
from dynreason.executor import ExecContext
from dynreason.program import answer_type, typecheck
from dynreason.questions import (
    PREDICTIVE_HORIZON,
    QuestionMix,
    Question,
    balance_answers,
    build_program,
    default_templates,
    generate_questions,
    load_templates,
)
from dynreason.scene import ANSWER_VOCAB


def test_templates_load_and_typecheck(scene_questions):
    ts = default_templates()
    assert {t.type for t in ts.enabled()} == {"factual", "predictive", "counterfactual"}
    for _, qs in scene_questions:
        for q in qs:
            answer_type(q.program)


def test_mix_and_ids(scene_questions):
    for scene, qs in scene_questions:
        c = Counter(q.type for q in qs)
        assert c["factual"] <= 8 and c["predictive"] <= 3 and c["counterfactual"] <= 1
        assert len({q.question_id for q in qs}) == len(qs)
        assert len({q.text for q in qs}) == len(qs)
        assert all(q.question_id.startswith(scene.scene_id) for q in qs)


def test_horizons(scene_questions):
    for scene, qs in scene_questions:
        for q in qs:
            want = PREDICTIVE_HORIZON if q.type == "predictive" else scene.config.n_frames
            assert q.observed_frames == want


def test_answers_in_vocabulary(scene_questions):
    for _, qs in scene_questions:
        for q in qs:
            assert q.answer in ANSWER_VOCAB


def test_deterministic(scenes):
    a = generate_questions(scenes[1], seed=3)
    b = generate_questions(scenes[1], seed=3)
    assert [q.to_json() for q in a] == [q.to_json() for q in b]


def test_question_json_roundtrip(scene_questions):
    for _, qs in scene_questions:
        for q in qs:
            assert Question.from_json(json.loads(json.dumps(q.to_json()))) == q


def test_balance_caps_majority():
    rows = [("t", "true")] * 10 + [("t", "false")] * 2 + [("u", "red")] * 5
    out = balance_answers(rows, key=lambda r: r)
    c = Counter(out)
    assert c[("t", "true")] == 3 and c[("t", "false")] == 2 and c[("u", "red")] == 5


def test_bool_answers_reasonably_balanced(scene_questions):
    c = Counter(q.answer for _, qs in scene_questions for q in qs if q.answer in ("true", "false"))
    assert min(c.values()) / sum(c.values()) > 0.25


def test_build_program_missing_binding():
    t = default_templates().by_id("static_is")
    with pytest.raises((TemplateError, KeyError)):
        build_program(t, {})


def test_bad_template_file(tmp_path):
    bad = {"vocab": {}, "templates": [{"id": "x", "type": "weird", "subtype": "velocity", "text": "?",
                                        "slots": {}, "program": []}]}
    p = tmp_path / "t.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(TemplateError):
        load_templates(p)


def test_empty_mix_raises(scenes):
    from dynreason.errors import GenerationError
    with pytest.raises(GenerationError):
        generate_questions(scenes[0], QuestionMix(0, 0, 0))
