"""Shipped JSON schemas and validation of emitted files."""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path

import jsonschema

SCHEMA_DIR = Path(__file__).parent / "data" / "schemas"
SCHEMA_NAMES = tuple(sorted(p.name.removesuffix(".schema.json") for p in SCHEMA_DIR.glob("*.schema.json")))


@lru_cache(maxsize=None)
def validator(name: str):
    schema = json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls(schema)


def validate(name: str, data) -> None:
    """Raise jsonschema.ValidationError if ``data`` does not match schema ``name``."""
    validator(name).validate(data)


def _rows(path: Path) -> list:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def validate_file(path: Path, name: str) -> int:
    """Validate a .json file or every row of a .jsonl file; returns the record count."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = _rows(path)
        for r in rows:
            validate(name, r)
        return len(rows)
    validate(name, json.loads(path.read_text(encoding="utf-8")))
    return 1


def validate_tree(root: Path) -> int:
    """Validate every known file under a dataset or estimates directory."""
    root = Path(root)
    n = 0
    manifest = root / "manifest.json"
    if manifest.exists():
        kind = json.loads(manifest.read_text(encoding="utf-8")).get("kind")
        n += validate_file(manifest, f"{kind}_manifest")
    for p in sorted((root / "scenes").glob("*.json")):
        n += validate_file(p, "scene")
    for p in sorted((root / "estimates").glob("*.json")):
        n += validate_file(p, "estimate")
    for p in sorted((root / "observations").glob("*.jsonl")):
        rows = _rows(p)
        validate("observation_header", rows[0])
        for r in rows[1:]:
            validate("observation_frame", r)
        n += len(rows)
    if (root / "questions.jsonl").exists():
        n += validate_file(root / "questions.jsonl", "question")
    if (root / "diagnostics.jsonl").exists():
        n += validate_file(root / "diagnostics.jsonl", "diagnostics")
    return n
