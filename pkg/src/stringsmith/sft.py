"""Instruction-tuning export: turn the train split into program-style
records and mix in auxiliary corpora.

A record's output is a fenced Python block (binding literals, then the
task's code) followed by the canonical answer line. Every record is
oracle-verified at export time.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .catalog import full_task_set
from .client import encode_answer_line
from .dataset import MalformedLineError, QASample
from .harness import get_strategy
from .lang import TaskProgram, eval_program
from .values import canonicalize_answer, kind_of


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class SftRecord:
    instruction: str
    input: str
    output: str
    sample_id: str = ""  # audit handle, not part of the exported schema

    def as_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input,
                "output": self.output}


_FIELDS = ("instruction", "input", "output")


def _code_block(task: TaskProgram, bindings: dict) -> str:
    lines = [f"{p.name} = {bindings[p.name]!r}" for p in task.params]
    lines.append(task.code_text)
    return "```python\n" + "\n".join(lines) + "\n```"


def export_sft(samples: Sequence[QASample],
               tasks: Optional[Sequence[TaskProgram]] = None) -> list[SftRecord]:
    """One verified record per sample. Raises on any oracle mismatch."""
    by_id = {t.task_id: t for t in (tasks if tasks is not None else full_task_set())}
    directive = get_strategy("pot").instruction
    records: list[SftRecord] = []
    for sample in samples:
        task = by_id.get(sample.task_id)
        if task is None:
            raise ExportError(f"unknown task {sample.task_id!r}")
        bindings = dict(sample.bindings)
        answer = canonicalize_answer(eval_program(task, bindings))
        if answer != sample.answer:
            raise ExportError(
                f"{sample.sample_id}: stored answer {sample.answer!r} "
                f"does not match the oracle ({answer!r})")
        output = _code_block(task, bindings) + "\n" + \
            encode_answer_line(answer, sample.answer_kind.value)
        records.append(SftRecord(
            instruction=sample.question + "\n\n" + directive,
            input="", output=output, sample_id=sample.sample_id))
    return records


def audit_records(records: Iterable[SftRecord]) -> int:
    """Execute each record's code block and check it reprints the answer
    line. Only meant for self-generated records (the code is trusted).
    Returns the number of failures."""
    failures = 0
    for rec in records:
        body, _, answer_line = rec.output.rpartition("\n")
        code = body.strip()
        if not (code.startswith("```python\n") and code.endswith("```")):
            failures += 1
            continue
        namespace: dict = {}
        try:
            exec(code[len("```python\n"):-3], namespace)  # noqa: S102
            got = canonicalize_answer(namespace["ans"])
            kind = kind_of(namespace["ans"]).value
        except Exception:
            failures += 1
            continue
        if encode_answer_line(got, kind) != answer_line:
            failures += 1
    return failures


def write_sft(records: Iterable[SftRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(), ensure_ascii=False,
                                separators=(",", ":")) + "\n")


def read_sft(path: Union[str, Path]) -> list[SftRecord]:
    out: list[SftRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(str(path), line_no, str(exc))
            if not isinstance(d, dict) or set(_FIELDS) - set(d):
                raise MalformedLineError(str(path), line_no,
                                         f"expected fields {_FIELDS}")
            out.append(SftRecord(instruction=d["instruction"],
                                 input=d["input"], output=d["output"]))
    return out


# ------------------------------------------------------------------ mixing

@dataclass(frozen=True)
class MixPlan:
    sources: tuple  # of (path, weight)
    seed: int = 0

    def __post_init__(self):
        for path, weight in self.sources:
            if weight < 0:
                raise ValueError(f"negative weight for {path}")
        if not any(w > 0 for _, w in self.sources):
            raise ValueError("at least one source needs positive weight")


@dataclass(frozen=True)
class MixReport:
    counts: dict  # path -> records taken
    total: int
    seed: int

    def as_dict(self) -> dict:
        return {"counts": dict(self.counts), "total": self.total,
                "seed": self.seed}


def mix_corpora(plan: MixPlan,
                out_path: Optional[Union[str, Path]] = None
                ) -> tuple[list[SftRecord], MixReport]:
    """Merge corpora by quota interleave: the next record always comes
    from the source with the lowest emitted/weight ratio, so equal
    weights alternate exactly. Each source is shuffled under the seed
    first; the whole merge is a pure function of (plan files, seed)."""
    pools: list[list[SftRecord]] = []
    weights: list[float] = []
    paths: list[str] = []
    for i, (path, weight) in enumerate(plan.sources):
        if weight == 0:
            continue
        records = read_sft(path)
        random.Random(f"{plan.seed}:{i}").shuffle(records)
        pools.append(records)
        weights.append(float(weight))
        paths.append(str(path))

    emitted = [0] * len(pools)
    cursor = [0] * len(pools)
    merged: list[SftRecord] = []
    while True:
        live = [i for i in range(len(pools)) if cursor[i] < len(pools[i])]
        if not live:
            break
        nxt = min(live, key=lambda i: (emitted[i] / weights[i], i))
        merged.append(pools[nxt][cursor[nxt]])
        cursor[nxt] += 1
        emitted[nxt] += 1

    report = MixReport(counts={p: n for p, n in zip(paths, emitted)},
                       total=len(merged), seed=plan.seed)
    if out_path is not None:
        write_sft(merged, out_path)
    return merged, report
