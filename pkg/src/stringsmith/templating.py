"""Question templating.

Every task gets exactly three English phrasings. Atomic tasks read theirs
from a versioned bank (data/templates.json); composites get three
clause-chained descriptions assembled from the catalog's per-op clauses.
An optional LLM path asks a client for k paraphrases and a ranking, and
falls back to the builtin phrasings whenever the client misbehaves.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

from .catalog import AtomicOp, atomic_catalog
from .lang import LitInt, LitStr, ParamRef, StepRef, TaskProgram
from .values import Kind, Value, canonicalize_answer

log = logging.getLogger(__name__)

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class QuestionTemplate:
    task_id: str
    template_id: int
    text: str
    placeholders: Mapping[str, Kind] = field(compare=False)
    provenance: str = "builtin"

    def __post_init__(self):
        names = set(_PLACEHOLDER_RE.findall(self.text))
        if names != set(self.placeholders):
            raise TemplateError(
                f"template for {self.task_id} names {sorted(names)} but "
                f"params are {sorted(self.placeholders)}")


def placeholder_names(text: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(text))


def _render_value(value: Value) -> str:
    # Str operands go inside double quotes with NO escaping: the quoted
    # text must be byte-identical to the string under test.
    if isinstance(value, str):
        return f'"{value}"'
    return canonicalize_answer(value)


def render_question(template: QuestionTemplate,
                    bindings: Mapping[str, Value]) -> str:
    """Substitute bindings into the template in a single pass.

    Values are never re-scanned, so operand text that happens to contain
    brace patterns cannot trigger a second substitution.
    """
    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise TemplateError(
                f"no binding for placeholder {{{name}}} in task "
                f"{template.task_id}")
        return _render_value(bindings[name])

    return _PLACEHOLDER_RE.sub(sub, template.text)


# ------------------------------------------------------------- builtin bank

_BANK: Optional[dict[str, list[str]]] = None


def _template_bank() -> dict[str, list[str]]:
    global _BANK
    if _BANK is None:
        raw = (resources.files("stringsmith") / "data"
               / "templates.json").read_text(encoding="utf-8")
        data = json.loads(raw)
        bank = data["templates"]
        by_id = {op.op_id: op for op in atomic_catalog()}
        if set(bank) != set(by_id):
            missing = set(by_id) - set(bank)
            extra = set(bank) - set(by_id)
            raise TemplateError(
                f"template bank out of sync: missing={sorted(missing)} "
                f"extra={sorted(extra)}")
        for op_id, texts in bank.items():
            if len(texts) != 3 or len(set(texts)) != 3:
                raise TemplateError(f"{op_id}: need 3 distinct phrasings")
            want = {p.name for p in by_id[op_id].params}
            for t in texts:
                if placeholder_names(t) != want:
                    raise TemplateError(
                        f"{op_id}: placeholders {placeholder_names(t)} != "
                        f"params {want}")
        _BANK = bank
    return _BANK


def _param_kinds(task: TaskProgram) -> dict[str, Kind]:
    return {p.name: p.kind for p in task.params}


def _clause_for(op: AtomicOp, step_index: int, args) -> str:
    slots = []
    for arg in args:
        if isinstance(arg, ParamRef):
            slots.append(f"{{{arg.name}}}")
        elif isinstance(arg, StepRef):
            if arg.index == step_index - 1:
                slots.append("the previous result")
            else:
                slots.append(f"the result of step {arg.index + 1}")
        elif isinstance(arg, LitStr):
            slots.append(f'"{arg.value}"')
        elif isinstance(arg, LitInt):
            slots.append(str(arg.value))
        else:  # pragma: no cover - parser emits only the four kinds above
            raise TemplateError(f"unrenderable argument {arg!r}")
    return op.clause.format(*slots)


def _composite_texts(task: TaskProgram) -> list[str]:
    by_id = {op.op_id: op for op in atomic_catalog()}
    clauses = [_clause_for(by_id[s.op_id], i, s.args)
               for i, s in enumerate(task.steps)]

    sentences = []
    for i, c in enumerate(clauses):
        lead = "First," if i == 0 else (
            "Finally," if i == len(clauses) - 1 else "Then")
        sentences.append(f"{lead} {c}.")
    staged = " ".join(sentences) + " Report the final result."

    inline = clauses[0][0].upper() + clauses[0][1:]
    if len(clauses) > 1:
        inline += ", then " + ", then ".join(clauses[1:])
    inline += "; give the final result."

    numbered = "Carry out these steps in order: " + "; ".join(
        f"({i + 1}) {c}" for i, c in enumerate(clauses))
    numbered += ". Answer with the result of the last step."

    return [staged, inline, numbered]


def builtin_templates(task: TaskProgram) -> list[QuestionTemplate]:
    """Three fixed phrasings for the task, bank-backed for atomic ops."""
    if task.origin == "atomic":
        texts = _template_bank()[task.steps[0].op_id]
    else:
        texts = _composite_texts(task)
    kinds = _param_kinds(task)
    return [QuestionTemplate(task.task_id, i, t, kinds, "builtin")
            for i, t in enumerate(texts)]


# ---------------------------------------------------------------- LLM path

_GENERATION_PROMPT = """\
Rewrite the following question template in {k} different ways.

Template: {text}

Rules:
- Keep every placeholder exactly as written, braces included: {names}.
- Do not add, drop, or rename placeholders.
- Each rewrite must ask for exactly the same computation.
- Reply with one rewrite per line and nothing else.
"""

_RANKING_PROMPT = """\
Below are {n} numbered question templates that all ask the same thing.
Pick the three clearest, most natural ones.

{listing}

Reply with the three numbers only, comma-separated, best first.
"""


class ParaphraseError(RuntimeError):
    pass


def _extract_candidates(reply: str, want: set[str], limit: int) -> list[str]:
    seen = []
    for line in reply.splitlines():
        text = line.strip()
        text = re.sub(r"^(?:\d+[.):]\s*|[-*]\s*)", "", text).strip()
        if text.startswith('"') and text.endswith('"') and len(text) > 1:
            inner = text[1:-1]
            # only unwrap quoting that is not a placeholder rendering
            if placeholder_names(inner) == want:
                text = inner
        if not text or placeholder_names(text) != want:
            continue
        if text not in seen:
            seen.append(text)
        if len(seen) == limit:
            break
    return seen


def _parse_ranking(reply: str, n: int) -> list[int]:
    picks = []
    for token in re.findall(r"\d+", reply):
        i = int(token) - 1
        if 0 <= i < n and i not in picks:
            picks.append(i)
    return picks


def llm_paraphrase(client, task: TaskProgram,
                   k: int = 10) -> list[QuestionTemplate]:
    """Ask the client for k paraphrases, have it rank them, keep 3.

    Any client failure, or output that does not yield three
    placeholder-consistent templates, falls back to builtin_templates.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    base = builtin_templates(task)
    want = {p.name for p in task.params}
    try:
        reply = client.complete(_GENERATION_PROMPT.format(
            k=k, text=base[0].text,
            names=", ".join("{%s}" % n for n in sorted(want))))
        candidates = _extract_candidates(reply, want, k)
        if len(candidates) < 3:
            raise ParaphraseError(
                f"only {len(candidates)} usable paraphrases")
        listing = "\n".join(f"{i + 1}. {c}"
                            for i, c in enumerate(candidates))
        ranked = client.complete(_RANKING_PROMPT.format(
            n=len(candidates), listing=listing))
        picks = _parse_ranking(ranked, len(candidates))
        if len(picks) < 3:
            raise ParaphraseError("ranking reply unusable")
        chosen = [candidates[i] for i in picks[:3]]
    except Exception as exc:
        log.warning("paraphrase fallback for %s: %s", task.task_id, exc)
        return base
    kinds = _param_kinds(task)
    return [QuestionTemplate(task.task_id, i, t, kinds, "llm-paraphrase")
            for i, t in enumerate(chosen)]


def templates_for(task: TaskProgram, client=None,
                  k: int = 10) -> list[QuestionTemplate]:
    if client is None:
        return builtin_templates(task)
    return llm_paraphrase(client, task, k)
