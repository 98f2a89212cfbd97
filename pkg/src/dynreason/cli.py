"""Command-line entry point.

Exit codes: 0 ok, 1 threshold failure or strict-mode parse failure, 2 usage
error, 3 internal error.  Worker count comes from --workers or the
DYNREASON_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DynReasonError, InvalidSpecError, ParseError
from .estimator import EstimatorConfig, NoiseModel
from .generator import COUNTERFACTUAL_VALUES, GeneratorConfig
from .parser import parse
from .pipeline import (
    PRESETS,
    WORKERS_ENV,
    answer_questions,
    estimate_dataset,
    evaluate,
    generate_dataset,
    load_questions,
    load_scene,
    read_json,
    read_jsonl,
    resimulate,
    threshold_failures,
    worker_count,
    write_json,
    write_jsonl,
)
from .program import program_to_json
from .questions import QuestionMix
from .scene import SceneConfig, dumps

EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("dynreason")


class UsageError(Exception):
    pass


def _workers(args) -> int:
    return worker_count(args.workers)


def cmd_generate(args) -> int:
    splits = None
    if args.scenes is not None:
        splits = {args.split or "test": args.scenes}
    gen = GeneratorConfig(n_objects_min=args.min_objects, n_objects_max=args.max_objects)
    scene = SceneConfig(n_frames=args.frames)
    mix = QuestionMix(*args.mix)
    manifest = generate_dataset(Path(args.out), args.seed, splits, gen, scene, mix,
                                workers=_workers(args), preset=args.preset)
    c = manifest["question_counts"]
    print(f"wrote {len(manifest['scenes'])} scenes, "
          f"{c['factual']}/{c['predictive']}/{c['counterfactual']} questions to {args.out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    noise = NoiseModel(args.sigma_obs, args.sigma_rot, args.dropout, args.noise_seed)
    config = EstimatorConfig(prior_variance=args.prior_variance, window=args.window,
                             use_prior=not args.no_physics_prior, infer_forces=not args.no_force_inference)
    m = estimate_dataset(Path(args.dataset), Path(args.out), noise, config, args.split, _workers(args))
    s = m["summary"]
    print(f"estimated {s['n_scenes']} scenes ({s['n_failed']} failed); "
          f"mean rmse {s['mean_rmse']:.4f} m, collision F1 {s['collision_f1']:.3f}")
    return EXIT_OK


def cmd_answer(args) -> int:
    if args.states == "estimated" and args.estimates is None:
        raise UsageError("--states estimated needs --estimates DIR")
    rows = answer_questions(Path(args.dataset), Path(args.out), args.states, args.parser,
                            None if args.estimates is None else Path(args.estimates), args.split, _workers(args))
    n_err = sum(r["error"] is not None for r in rows)
    print(f"answered {len(rows)} questions ({n_err} errors) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    answers = read_jsonl(Path(args.answers))
    qids = {a["question_id"] for a in answers}
    questions = [q for q in load_questions(Path(args.dataset)) if q.question_id in qids or not args.subset]
    report = evaluate(answers, questions)
    print(report.table())
    if args.out:
        write_json(Path(args.out), report.to_json())
    try:
        thresholds = {k: float(x) for k, x in args.threshold or ()}
    except ValueError:
        raise UsageError("--threshold MIN must be a number") from None
    if args.ci:
        table = read_json(Path(args.dataset) / "manifest.json").get("thresholds", {})
        thresholds = {**table.get(report.states or "", {}), **thresholds}
    fails = threshold_failures(report, thresholds)
    for f in fails:
        print(f"below threshold: {f}", file=sys.stderr)
    return EXIT_THRESHOLD if fails else EXIT_OK


def _parse_modification(text: str):
    """``OBJ:PROP=VALUE`` with PROP in velocity|speed_delta|accelerating|floating."""
    try:
        obj, rest = text.split(":", 1)
        prop, value = rest.split("=", 1)
        obj = int(obj)
    except ValueError:
        raise UsageError(f"modification must look like OBJ:PROP=VALUE, got {text!r}") from None
    if prop == "velocity":
        if value not in ("static", "slow", "fast"):
            raise UsageError("velocity must be static, slow or fast")
        return obj, prop, value
    if prop == "speed_delta":
        try:
            return obj, prop, float(value)
        except ValueError:
            raise UsageError("speed_delta needs a number") from None
    if prop in ("accelerating", "floating"):
        if value.lower() not in ("true", "false"):
            raise UsageError(f"{prop} must be true or false")
        return obj, prop, value.lower() == "true"
    if prop == "counterfactual" and value in COUNTERFACTUAL_VALUES:
        return (obj,) + COUNTERFACTUAL_VALUES[value]
    raise UsageError(f"unknown modification property {prop!r}")


def cmd_resimulate(args) -> int:
    try:
        ann = load_scene(Path(args.dataset), args.scene_id)
    except FileNotFoundError as e:
        raise UsageError(str(e)) from None
    if (args.modification is None) == (args.counterfactual is None):
        raise UsageError("give exactly one of --modification or --counterfactual")
    if args.counterfactual is not None:
        if not 0 <= args.counterfactual < len(ann.counterfactuals):
            raise UsageError(f"scene has {len(ann.counterfactuals)} recorded counterfactuals")
        rec = ann.counterfactuals[args.counterfactual]
        obj, prop, value = rec.object_id, rec.property, rec.new_value
    else:
        obj, prop, value = _parse_modification(args.modification)
    if obj not in ann.object_ids:
        raise UsageError(f"scene has no object {obj}")
    try:
        diff = resimulate(ann, obj, prop, value)
    except InvalidSpecError as e:
        raise UsageError(str(e)) from None
    if args.json:
        print(dumps(diff.to_json()))
        return EXIT_OK
    print(f"scene {ann.scene_id}: object {obj} {prop} -> {value}")
    print(f"base events        {diff.base_events}")
    print(f"modified events    {diff.new_events}")
    print(f"removed            {diff.removed}")
    print(f"added              {diff.added}")
    for oid, d in diff.max_divergence.items():
        first = diff.first_divergent_frame[oid]
        print(f"object {oid}: max divergence {d:.4f} m" + ("" if first is None else f" from frame {first}"))
    return EXIT_OK


def cmd_parse(args) -> int:
    src = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    rows, failed = [], 0
    with src:
        for lineno, line in enumerate(src, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            try:
                rows.append({**d, "program": program_to_json(parse(d["text"]))})
            except ParseError as e:
                failed += 1
                rows.append({**d, "program": None, "error": str(e)})
                print(f"line {lineno}: {e}", file=sys.stderr)
    if args.out:
        write_jsonl(Path(args.out), rows)
    else:
        for r in rows:
            print(dumps(r))
    return EXIT_THRESHOLD if failed and args.strict else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynreason", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def workers(sp):
        sp.add_argument("--workers", type=int, default=None, help=f"process count (default ${WORKERS_ENV} or 1)")

    g = sub.add_parser("generate", help="generate scenes and questions")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    g.add_argument("--scenes", type=int, default=None, help="override the preset with one split of N scenes")
    g.add_argument("--split", default=None)
    g.add_argument("--min-objects", type=int, default=3)
    g.add_argument("--max-objects", type=int, default=6)
    g.add_argument("--frames", type=int, default=120)
    g.add_argument("--mix", type=int, nargs=3, default=(8, 3, 1), metavar=("F", "P", "C"))
    workers(g)
    g.set_defaults(fn=cmd_generate)

    e = sub.add_parser("estimate", help="track noisy observations into estimated scenes")
    e.add_argument("dataset")
    e.add_argument("--out", required=True)
    e.add_argument("--split", default=None)
    e.add_argument("--sigma-obs", type=float, default=0.3)
    e.add_argument("--sigma-rot", type=float, default=0.05)
    e.add_argument("--dropout", type=float, default=0.2)
    e.add_argument("--noise-seed", type=int, default=0)
    e.add_argument("--prior-variance", type=float, default=3.0, help="m^2 per second of prediction")
    e.add_argument("--window", type=int, default=5)
    e.add_argument("--no-physics-prior", action="store_true", help="observation-only baseline")
    e.add_argument("--no-force-inference", action="store_true")
    workers(e)
    e.set_defaults(fn=cmd_estimate)

    a = sub.add_parser("answer", help="execute question programs")
    a.add_argument("dataset")
    a.add_argument("--out", required=True)
    a.add_argument("--states", choices=("gt", "estimated"), default="gt")
    a.add_argument("--parser", choices=("stored", "nl"), default="stored")
    a.add_argument("--estimates", default=None)
    a.add_argument("--split", default=None)
    workers(a)
    a.set_defaults(fn=cmd_answer)

    v = sub.add_parser("eval", help="score answers against the dataset")
    v.add_argument("answers")
    v.add_argument("dataset")
    v.add_argument("--out", default=None)
    v.add_argument("--subset", action="store_true", help="score only the questions present in the answers")
    v.add_argument("--ci", action="store_true", help="apply the manifest thresholds")
    v.add_argument("--threshold", nargs=2, action="append", metavar=("KEY", "MIN"),
                   help="minimum accuracy for overall or a question type; repeatable")
    v.set_defaults(fn=cmd_eval)

    r = sub.add_parser("resimulate", help="re-run one scene with a modified initial property")
    r.add_argument("dataset")
    r.add_argument("scene_id")
    r.add_argument("--modification", default=None, help="OBJ:PROP=VALUE")
    r.add_argument("--counterfactual", type=int, default=None, help="replay recorded counterfactual K")
    r.add_argument("--json", action="store_true")
    r.set_defaults(fn=cmd_resimulate)

    q = sub.add_parser("parse", help="parse a JSONL of {text} rows into programs")
    q.add_argument("input", help="JSONL path or - for stdin")
    q.add_argument("--out", default=None)
    q.add_argument("--strict", action="store_true", help="exit 1 if any line fails")
    q.set_defaults(fn=cmd_parse)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DynReasonError, OSError, ValueError) as e:
        log.debug("failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
