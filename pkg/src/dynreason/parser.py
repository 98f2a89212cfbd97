"""Grammar-based question parser and its inverse.

The grammar is the template set itself: each template's text pattern is
tokenized into literals and typed slots, and a question parses when exactly
one template matches the whole token string.  Multiword shape names are
matched greedily, longest first.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from typing import Optional

from .errors import ParseError, TemplateError
from .program import Node
from .questions import Anchor, Descriptor, Template, TemplateSet, build_program, default_templates, render_text
from .scene import COLORS, SUBTYPES

_SLOT = re.compile(r"\{(\w+)\}")


def tokenize(text: str) -> list[str]:
    return re.sub(r"[^\w\s]", " ", text.lower()).split()


_SHAPES = sorted((tuple(s.split()) for s in SUBTYPES), key=len, reverse=True)
_COLORS = frozenset(COLORS)


def _match_shape(tokens, i):
    for shape in _SHAPES:
        if tuple(tokens[i:i + len(shape)]) == shape:
            return " ".join(shape), i + len(shape)
    return None


def _match_descriptor(tokens, i, kind):
    if i >= len(tokens) or tokens[i] != "the":
        return []
    i += 1
    if kind == "shape_only":
        m = _match_shape(tokens, i)
        return [] if m is None else [(Descriptor(None, m[0]), m[1])]
    if i >= len(tokens) or tokens[i] not in _COLORS:
        return []
    color = tokens[i]
    i += 1
    if kind == "color_only":
        return [(Descriptor(color, None), i + 1)] if i < len(tokens) and tokens[i] == "object" else []
    m = _match_shape(tokens, i)
    return [] if m is None else [(Descriptor(color, m[0]), m[1])]


def _match_words(tokens, i, words):
    n = len(words)
    return tokens[i:i + n] == words


def _match_anchor(tokens, i):
    out = []
    if _match_words(tokens, i, ["at", "the", "beginning"]):
        out.append((Anchor("begin"), i + 3))
    if _match_words(tokens, i, ["at", "the", "end"]):
        out.append((Anchor("end"), i + 3))
    if _match_words(tokens, i, ["when"]):
        for a, j in _match_descriptor(tokens, i + 1, "object"):
            if _match_words(tokens, j, ["collides", "with"]):
                for b, k in _match_descriptor(tokens, j + 2, "object"):
                    out.append((Anchor("collision", a, b), k))
    return out


@dataclass(frozen=True)
class _Pattern:
    template: Template
    items: tuple  # ("lit", token) | ("slot", name, kind)


class Grammar:
    """Compiled template patterns; read-only after construction.

    Only enabled templates are compiled unless ``include_disabled`` is set,
    so the accepted language is exactly what the generator can emit.
    """

    def __init__(self, templates: Optional[TemplateSet] = None, include_disabled: bool = False):
        self.templates = default_templates() if templates is None else templates
        self.active = tuple(self.templates.templates if include_disabled else self.templates.enabled())
        self.vocab = {
            kind: sorted(((tokenize(phrase), value) for value, phrase in table.items()),
                         key=lambda x: len(x[0]), reverse=True)
            for kind, table in self.templates.vocab.items()
        }
        self.patterns = []
        for t in self.active:
            items = []
            pos = 0
            for m in _SLOT.finditer(t.text):
                items += [("lit", w) for w in tokenize(t.text[pos:m.start()])]
                name = m.group(1)
                if name not in t.slots:
                    raise TemplateError(f"{t.id}: text slot {name!r} has no binding rule")
                items.append(("slot", name, t.slots[name]))
                pos = m.end()
            items += [("lit", w) for w in tokenize(t.text[pos:])]
            self.patterns.append(_Pattern(t, tuple(items)))

    def _slot(self, tokens, i, kind):
        if kind in ("object", "shape_only", "color_only"):
            return _match_descriptor(tokens, i, kind)
        if kind == "anchor":
            return _match_anchor(tokens, i)
        out = []
        for words, value in self.vocab.get(kind, ()):
            if _match_words(tokens, i, words):
                out.append((value, i + len(words)))
        return out

    def _match(self, items, tokens, i, bound):
        if not items:
            if i == len(tokens):
                yield dict(bound)
            return
        head, rest = items[0], items[1:]
        if head[0] == "lit":
            if i < len(tokens) and tokens[i] == head[1]:
                yield from self._match(rest, tokens, i + 1, bound)
            return
        _, name, kind = head
        for value, j in self._slot(tokens, i, kind):
            bound[name] = value
            yield from self._match(rest, tokens, j, bound)
            del bound[name]

    def matches(self, text: str) -> list[tuple[Template, dict]]:
        tokens = tokenize(text)
        out = []
        for p in self.patterns:
            for b in self._match(p.items, tokens, 0, {}):
                out.append((p.template, b))
        return out

    def nearest(self, text: str) -> str:
        probe = " ".join(tokenize(text))
        best, score = None, -1.0
        for p in self.patterns:
            skel = " ".join(w[1] if w[0] == "lit" else f"<{w[2]}>" for w in p.items)
            r = difflib.SequenceMatcher(None, probe, skel).ratio()
            if r > score:
                best, score = p.template, r
        return f"{best.id}: {best.text!r}"

    def parse_with_template(self, text: str) -> tuple[Template, dict, tuple]:
        found = self.matches(text)
        if not found:
            raise ParseError(f"no template matches {text!r}; nearest is {self.nearest(text)}")
        programs = {}
        for t, b in found:
            programs.setdefault(build_program(t, b), (t, b))
        if len(programs) > 1:
            ids = sorted({t.id for t, _ in programs.values()})
            raise ParseError(f"ambiguous question {text!r}: templates {ids}")
        (prog, (t, b)), = programs.items()
        return t, b, prog

    def parse(self, text: str) -> tuple:
        return self.parse_with_template(text)[2]

    # ------------------------------------------------------------------
    # inverse

    def _unify_desc(self, program, i, kind):
        """Descriptor starting at node ``i``; returns (Descriptor, next index) or None."""
        n = len(program)
        if i >= n or program[i] != Node.make("objects"):
            return None
        color = shape = None
        j = i + 1
        if kind != "shape_only":
            if j >= n or program[j].op != "filter_attributes" or "color" not in program[j].arg:
                return None
            color = program[j].arg["color"]
            j += 1
        if kind != "color_only":
            if j >= n or program[j].op != "filter_attributes" or "shape" not in program[j].arg:
                return None
            shape = program[j].arg["shape"]
            j += 1
        if j >= n or program[j].op != "unique":
            return None
        return Descriptor(color, shape), j + 1

    def _unify_anchor(self, program, i):
        if i < len(program) and program[i].op == "frame":
            return Anchor(program[i].arg.get("anchor")), i + 1
        if i < len(program) and program[i].op == "events":
            a = self._unify_desc(program, i + 1, "object")
            if a is None:
                return None
            j = a[1] + 1
            b = self._unify_desc(program, j, "object")
            if b is None:
                return None
            return Anchor("collision", a[0], b[0]), b[1] + 3
        return None

    def _bindings_for(self, template: Template, program) -> Optional[dict]:
        bindings: dict = {}
        i = 0
        for row in template.program:
            label, op = row[0], row[1]
            if op == "$object":
                r = self._unify_desc(program, i, template.slots[row[2]])
                if r is None:
                    return None
                bindings[row[2]], i = r
                continue
            if op == "$anchor":
                r = self._unify_anchor(program, i)
                if r is None:
                    return None
                bindings[row[2]], i = r
                continue
            if i >= len(program):
                return None
            node = program[i]
            if op.startswith("$"):
                bindings[op[1:]] = node.op
            for k, v in row[3].items():
                if isinstance(v, str) and v.startswith("$"):
                    if k not in node.arg:
                        return None
                    bindings[v[1:]] = node.arg[k]
            i += 1
        return bindings if i == len(program) else None

    def unparse(self, program) -> str:
        program = tuple(program)
        for t in self.active:
            b = self._bindings_for(t, program)
            if b is None or set(b) != set(t.slots):
                continue
            try:
                rebuilt = build_program(t, b)
                text = render_text(t, b, self.templates.vocab)
            except (TemplateError, KeyError, AttributeError):
                continue
            if rebuilt == program:
                return text
        raise ParseError("program does not instantiate any template")


_GRAMMAR: Optional[Grammar] = None


def default_grammar() -> Grammar:
    global _GRAMMAR
    if _GRAMMAR is None:
        _GRAMMAR = Grammar()
    return _GRAMMAR


def parse(text: str, grammar: Optional[Grammar] = None) -> tuple:
    return (grammar or default_grammar()).parse(text)


def unparse(program, grammar: Optional[Grammar] = None) -> str:
    return (grammar or default_grammar()).unparse(program)
