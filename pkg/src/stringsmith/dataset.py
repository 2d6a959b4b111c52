"""QA dataset construction: task x template x sampled strings.

Every emitted sample carries its bindings, so the gold answer can be
re-derived by running the oracle at any later point. Building is a pure
function of (tasks, config, seed); per-task RNG streams keep the output
stable even if task processing is ever parallelized.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from .catalog import full_task_set
from .lang import TaskProgram, eval_program
from .samplers import (Corpus, bundled_corpus, sample_hash,
                       sample_multilingual, sample_random)
from .samplers import bindings_for
from .templating import QuestionTemplate, builtin_templates, render_question
from .values import DomainError, Kind, Value, canonicalize_answer

DATASET_KINDS = ("multilingual", "hash", "random")

# attempts per wanted sample before a (task, template) pair is left short
_RETRY_FACTOR = 4


@dataclass(frozen=True)
class QASample:
    sample_id: str
    dataset_kind: str
    task_id: str
    template_id: int
    question: str
    bindings: Mapping[str, Value]
    answer: str
    answer_kind: Kind

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "dataset_kind": self.dataset_kind,
            "task_id": self.task_id,
            "template_id": self.template_id,
            "question": self.question,
            "bindings": dict(self.bindings),
            "answer": self.answer,
            "answer_kind": self.answer_kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QASample":
        return cls(
            sample_id=d["sample_id"],
            dataset_kind=d["dataset_kind"],
            task_id=d["task_id"],
            template_id=int(d["template_id"]),
            question=d["question"],
            bindings=d["bindings"],
            answer=d["answer"],
            answer_kind=Kind(d["answer_kind"]),
        )


@dataclass
class BuildReport:
    dataset_kind: str
    requested: int = 0
    emitted: int = 0
    dropped: dict = field(default_factory=dict)  # reason -> count
    underfilled_tasks: list = field(default_factory=list)

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    def as_dict(self) -> dict:
        return {
            "dataset_kind": self.dataset_kind,
            "requested": self.requested,
            "emitted": self.emitted,
            "dropped": dict(sorted(self.dropped.items())),
            "underfilled_tasks": list(self.underfilled_tasks),
        }


@dataclass(frozen=True)
class BuildResult:
    samples: list
    report: BuildReport


def _operand_source(kind: str, corpus: Optional[Corpus],
                    len_range: tuple[int, int],
                    rng: random.Random) -> Callable[[], str]:
    if kind == "multilingual":
        c = corpus or bundled_corpus()
        return lambda: sample_multilingual(c, rng)
    if kind == "hash":
        c = corpus or bundled_corpus()
        return lambda: sample_hash(c, rng)[0]
    if kind == "random":
        return lambda: sample_random(rng, len_range)
    raise ValueError(f"unknown dataset kind {kind!r}")


def build_dataset(kind: str,
                  tasks: Optional[Sequence[TaskProgram]] = None,
                  *,
                  corpus: Optional[Corpus] = None,
                  len_range: tuple[int, int] = (20, 60),
                  n_per_template: int = 5,
                  seed: int = 0,
                  template_bank: Optional[Mapping[str, Sequence[QuestionTemplate]]] = None,
                  ) -> BuildResult:
    """Emit up to n_per_template samples per (task, template) pair.

    Draws that leave an operation's domain are dropped and retried up to a
    fixed budget; the report carries per-reason counts. Output order is
    (task order, template_id, sample index).
    """
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if n_per_template < 1:
        raise ValueError("n_per_template must be positive")
    if tasks is None:
        tasks = full_task_set()

    report = BuildReport(dataset_kind=kind)
    samples: list[QASample] = []

    for task in tasks:
        # independent stream per task: insertion order of tasks does not
        # perturb sibling tasks' draws
        rng = random.Random(f"{seed}:{kind}:{task.task_id}")
        draw = _operand_source(kind, corpus, len_range, rng)
        templates = (template_bank[task.task_id] if template_bank
                     else builtin_templates(task))
        for template in templates:
            report.requested += n_per_template
            got = 0
            attempts = 0
            budget = n_per_template * _RETRY_FACTOR
            while got < n_per_template and attempts < budget:
                attempts += 1
                try:
                    bindings = bindings_for(task, rng, draw)
                    value = eval_program(task, bindings)
                except DomainError:
                    report.drop("domain_error")
                    continue
                question = render_question(template, bindings)
                samples.append(QASample(
                    sample_id=(f"{kind}:{task.task_id}"
                               f":t{template.template_id}:s{got}"),
                    dataset_kind=kind,
                    task_id=task.task_id,
                    template_id=template.template_id,
                    question=question,
                    bindings=bindings,
                    answer=canonicalize_answer(value),
                    answer_kind=task.output_kind,
                ))
                got += 1
            if got < n_per_template:
                report.drop("retry_budget_exhausted")
                report.underfilled_tasks.append(
                    f"{task.task_id}:t{template.template_id}")
    report.emitted = len(samples)
    return BuildResult(samples=samples, report=report)


def post_process(samples: Sequence[QASample],
                 tasks: Optional[Sequence[TaskProgram]] = None,
                 ) -> list[QASample]:
    """Drop exact-duplicate questions and any sample whose stored answer
    the oracle cannot reproduce. Order is preserved."""
    if tasks is None:
        tasks = full_task_set()
    by_id = {t.task_id: t for t in tasks}
    seen_questions: set[str] = set()
    out = []
    for s in samples:
        if s.question in seen_questions:
            continue
        task = by_id.get(s.task_id)
        if task is None:
            continue
        try:
            value = eval_program(task, dict(s.bindings))
        except Exception:
            continue
        if canonicalize_answer(value) != s.answer:
            continue
        seen_questions.add(s.question)
        out.append(s)
    return out


@dataclass(frozen=True)
class SplitManifest:
    test_sample_ids: tuple
    train_sample_ids: tuple
    seed: int
    ratio: float

    def as_dict(self) -> dict:
        return {
            "test_sample_ids": list(self.test_sample_ids),
            "train_sample_ids": list(self.train_sample_ids),
            "seed": self.seed,
            "ratio": self.ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(tuple(d["test_sample_ids"]),
                   tuple(d["train_sample_ids"]),
                   int(d["seed"]), float(d["ratio"]))


def split(samples: Sequence[QASample], ratio: float = 0.20,
          seed: int = 0) -> SplitManifest:
    """Random split with full task coverage on the test side.

    One sample of every task is forced into test, then the test side is
    topped up globally to the target share.
    """
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")

    rng = random.Random(seed)
    by_task: dict[str, list[str]] = {}
    for s in samples:
        by_task.setdefault(s.task_id, []).append(s.sample_id)

    test: list[str] = []
    for task_id in sorted(by_task):
        test.append(rng.choice(by_task[task_id]))

    target = round(ratio * len(samples))
    chosen = set(test)
    if len(test) < target:
        pool = sorted(s.sample_id for s in samples
                      if s.sample_id not in chosen)
        rng.shuffle(pool)
        for sid in pool[:target - len(test)]:
            chosen.add(sid)
            test.append(sid)

    train = [s.sample_id for s in samples if s.sample_id not in chosen]
    return SplitManifest(test_sample_ids=tuple(test),
                         train_sample_ids=tuple(train),
                         seed=seed, ratio=ratio)


class MalformedLineError(ValueError):
    def __init__(self, path, line_no: int, why: str):
        super().__init__(f"{path}: line {line_no}: {why}")
        self.path = str(path)
        self.line_no = line_no


def write_jsonl(samples: Sequence[QASample],
                path: Union[str, Path]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.as_dict(), ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path: Union[str, Path]) -> list[QASample]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, str(exc)) from exc
            try:
                out.append(QASample.from_dict(record))
            except (KeyError, ValueError, TypeError) as exc:
                raise MalformedLineError(
                    path, line_no, f"bad record: {exc}") from exc
    return out


def write_report(report: BuildReport, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=False) + "\n",
        encoding="utf-8")


def verify_answers(samples: Sequence[QASample],
                   tasks: Optional[Sequence[TaskProgram]] = None) -> int:
    """Re-run the oracle over every sample; return the mismatch count."""
    if tasks is None:
        tasks = full_task_set()
    by_id = {t.task_id: t for t in tasks}
    mismatches = 0
    for s in samples:
        task = by_id[s.task_id]
        try:
            value = eval_program(task, dict(s.bindings))
        except Exception:
            mismatches += 1
            continue
        if canonicalize_answer(value) != s.answer:
            mismatches += 1
    return mismatches
