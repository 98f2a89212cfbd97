import json

import pytest

from dynreason.cli import main
from dynreason.pipeline import (
    evaluate,
    generate_dataset,
    hash_tree,
    load_questions,
    load_scene,
    read_jsonl,
    resimulate,
)
from dynreason.schemas import validate, validate_file, validate_tree


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["generate", "--out", str(root / "data"), "--scenes", "5", "--seed", "3"]) == 0
    assert main(["estimate", str(root / "data"), "--out", str(root / "est")]) == 0
    return root


def test_files_validate(dataset):
    assert validate_tree(dataset / "data") > 0
    assert validate_tree(dataset / "est") > 0


def test_gt_answers_all_correct_and_ci_passes(dataset, tmp_path):
    out = tmp_path / "a.jsonl"
    assert main(["answer", str(dataset / "data"), "--out", str(out)]) == 0
    validate_file(out, "answer")
    rep = tmp_path / "r.json"
    assert main(["eval", str(out), str(dataset / "data"), "--ci", "--out", str(rep)]) == 0
    r = json.loads(rep.read_text())
    validate("eval_report", r)
    assert r["overall"] == 1.0


def test_nl_parser_matches_stored(dataset, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["answer", str(dataset / "data"), "--out", str(a)])
    main(["answer", str(dataset / "data"), "--out", str(b), "--parser", "nl"])
    ra, rb = read_jsonl(a), read_jsonl(b)
    assert [x["answer"] for x in ra] == [x["answer"] for x in rb]


def test_estimated_answers_and_threshold_exit(dataset, tmp_path):
    out = tmp_path / "e.jsonl"
    assert main(["answer", str(dataset / "data"), "--out", str(out), "--states", "estimated",
                 "--estimates", str(dataset / "est")]) == 0
    assert main(["eval", str(out), str(dataset / "data"), "--threshold", "overall", "1.01"]) == 1
    assert main(["eval", str(out), str(dataset / "data"), "--threshold", "overall", "0.0"]) == 0


def test_estimate_zero_noise_rmse(dataset, tmp_path):
    assert main(["estimate", str(dataset / "data"), "--out", str(tmp_path / "z"), "--sigma-obs", "0",
                 "--sigma-rot", "0", "--dropout", "0"]) == 0
    m = json.loads((tmp_path / "z" / "manifest.json").read_text())
    assert m["summary"]["mean_rmse"] < 1e-9


def test_no_physics_prior_flag(dataset, tmp_path):
    assert main(["estimate", str(dataset / "data"), "--out", str(tmp_path / "b"), "--no-physics-prior"]) == 0
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["estimator"]["use_prior"] is False


def test_usage_errors(dataset, capsys):
    assert main([]) == 2
    assert main(["generate"]) == 2
    assert main(["answer", str(dataset / "data"), "--out", "x", "--states", "estimated"]) == 2
    assert main(["resimulate", str(dataset / "data"), "test_00000", "--modification", "0:colour=red"]) == 2
    assert main(["resimulate", str(dataset / "data"), "nope", "--counterfactual", "0"]) == 2
    assert main(["eval", "missing.jsonl", str(dataset / "data")]) == 3


def test_resimulate_recorded_counterfactual(dataset):
    ann = load_scene(dataset / "data", "test_00000")
    rec = ann.counterfactuals[0]
    diff = resimulate(ann, rec.object_id, rec.property, rec.new_value)
    assert diff.new_events == [[e.frame, *e.pair] for e in sorted(rec.events, key=lambda e: e.key())]
    assert main(["resimulate", str(dataset / "data"), "test_00000", "--counterfactual", "0"]) == 0


def test_resimulate_identity_is_empty(dataset):
    ann = load_scene(dataset / "data", "test_00001")
    from dynreason.generator import initial_property, initial_world
    oid = ann.objects[0].id
    state = initial_property(initial_world(ann), oid, "velocity")
    diff = resimulate(ann, oid, "velocity", state)
    assert diff.removed == [] and diff.added == []
    assert all(d == 0.0 for d in diff.max_divergence.values())


def test_resimulate_isolated_object_bump():
    from dynreason.generator import generate_scene
    from dynreason.physics import simulate

    from conftest import body, world
    w = world(body(0, "sedan", (-3.0, 0.0, 0.0), (2.0, 0.0, 0.0)),
              body(1, "sedan", (3.0, 0.0, 0.0), (-2.0, 0.0, 0.0), color="blue"),
              body(2, "jet", (0.0, 3.8, 4.0), (0.0, 0.5, 0.0), floating=10.0, color="green"))
    ann = generate_scene("tmp", 0)
    res = simulate(w, ann.config)
    iso = ann.replace(objects=w.objects, forces=w.forces, trajectories=res.trajectories,
                      collisions=res.collisions, contact_intervals=res.contact_intervals, counterfactuals=())
    diff = resimulate(iso, 2, "speed_delta", 0.5)
    assert diff.removed == [] and diff.added == []
    assert diff.max_divergence[2] > 0.0
    assert diff.max_divergence[0] == 0.0


def test_eval_arithmetic(dataset):
    qs = load_questions(dataset / "data")[:4]
    answers = [{"question_id": q.question_id, "scene_id": q.scene_id, "states": "gt", "parser": "stored",
                "answer": q.answer, "error": None} for q in qs]
    answers[0] = {**answers[0], "answer": "not-an-answer"}
    r = evaluate(answers, qs)
    assert r.overall == 0.75
    assert r.errors["wrong-answer"] == 1


def test_eval_subtypes_weighted_mean(dataset):
    qs = load_questions(dataset / "data")
    answers = [{"question_id": q.question_id, "scene_id": q.scene_id, "states": "gt", "parser": "stored",
                "answer": q.answer if k % 3 else "x", "error": None} for k, q in enumerate(qs)]
    r = evaluate(answers, qs)
    sub = [v for v in r.factual_subtypes.values() if v["n"]]
    mean = sum(v["accuracy"] * v["n"] for v in sub) / sum(v["n"] for v in sub)
    assert mean == pytest.approx(r.per_type["factual"]["accuracy"])
    assert sum(v["n"] for v in r.per_type.values()) == r.n


def test_eval_id_mismatch_fatal(dataset):
    qs = load_questions(dataset / "data")
    with pytest.raises(ValueError):
        evaluate([], qs)


def test_parse_command(tmp_path, capsys):
    src = tmp_path / "in.jsonl"
    src.write_text(json.dumps({"text": "Is the red sedan static at the end?"}) + "\n"
                   + json.dumps({"text": "How heavy is the bus?"}) + "\n")
    out = tmp_path / "out.jsonl"
    assert main(["parse", str(src), "--out", str(out)]) == 0
    rows = read_jsonl(out)
    assert rows[0]["program"] and rows[1]["program"] is None and "error" in rows[1]
    assert main(["parse", str(src), "--out", str(out), "--strict"]) == 1


def test_generate_deterministic(tmp_path):
    generate_dataset(tmp_path / "a", seed=1, splits={"test": 3})
    generate_dataset(tmp_path / "b", seed=1, splits={"test": 3})
    assert hash_tree(tmp_path / "a", skip=()) == hash_tree(tmp_path / "b", skip=())


def test_desk_preset_size(tmp_path):
    from dynreason.pipeline import PRESETS
    assert PRESETS["desk"] == {"test": 100}
    assert PRESETS["full"] == {"train": 1000, "val": 100, "test": 100}


def test_question_type_ratio(tmp_path):
    m = generate_dataset(tmp_path / "r", seed=0, splits={"val": 40})
    c = m["question_counts"]
    total = sum(c.values())
    target = {"factual": 7850, "predictive": 2750, "counterfactual": 989}
    tt = sum(target.values())
    for k in target:
        assert abs(c[k] / total - target[k] / tt) / (target[k] / tt) < 0.10
