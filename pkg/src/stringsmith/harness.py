"""Evaluation harness: prompt assembly, answer extraction, grading, runs.

Prompt texts live in data/prompts.json (versioned), never in code.
Grading is exact character equality on the canonical answer string; the
only forgiveness is one matched layer of surrounding quotes, and that is
flagged on the record.
"""

from __future__ import annotations

import json
import re
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .dataset import MalformedLineError, QASample
from .values import Kind, canonicalize_answer

_DATA = Path(__file__).resolve().parent / "data"

STRATEGY_KINDS = ("raw", "cot", "pot")


class HarnessError(RuntimeError):
    """The run cannot continue (bad strategy, unusable sandbox, ...)."""


@dataclass(frozen=True)
class PromptStrategy:
    kind: str
    system: str
    instruction: str


_strategy_cache: dict[str, PromptStrategy] = {}


def _load_strategies() -> dict[str, PromptStrategy]:
    if not _strategy_cache:
        raw = json.loads((_DATA / "prompts.json").read_text("utf-8"))
        if raw.get("version") != 1:
            raise HarnessError(f"unsupported prompts config: {raw.get('version')!r}")
        for kind in STRATEGY_KINDS:
            entry = raw["strategies"][kind]
            _strategy_cache[kind] = PromptStrategy(
                kind=kind, system=entry["system"],
                instruction=entry["instruction"])
    return _strategy_cache


def get_strategy(kind: str) -> PromptStrategy:
    strategies = _load_strategies()
    if kind not in strategies:
        raise HarnessError(f"unknown strategy {kind!r}; expected one of {STRATEGY_KINDS}")
    return strategies[kind]


def all_strategies() -> tuple[PromptStrategy, ...]:
    return tuple(_load_strategies()[k] for k in STRATEGY_KINDS)


def make_prompt(sample: Union[QASample, str], strategy: Union[PromptStrategy, str]) -> list[dict]:
    if isinstance(strategy, str):
        strategy = get_strategy(strategy)
    question = sample.question if isinstance(sample, QASample) else sample
    return [
        {"role": "system", "content": strategy.system},
        {"role": "user", "content": question + "\n\n" + strategy.instruction},
    ]


# -------------------------------------------------------------- extraction

_ANSWER_RE = re.compile(r"^[ \t]*answer:\s?(.*)$", re.IGNORECASE | re.MULTILINE)
_CODE_RE = re.compile(r"```(?:python|py)?[ \t]*\r?\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class Extraction:
    """Candidate answer strings, best reading first.

    Empty `candidates` means extraction failure: no answer marker (or no
    code block under the program strategy). `quote_stripped` records that
    a matched outer quote layer was removed from the marker value.
    """
    candidates: tuple[str, ...]
    quote_stripped: bool = False

    @property
    def failed(self) -> bool:
        return not self.candidates


def extract_answer(response: str, answer_kind: Kind) -> Extraction:
    """Pull the value of the last `Answer:` line and canonicalize by kind."""
    hits = _ANSWER_RE.findall(response)
    if not hits:
        return Extraction(())
    value = hits[-1]
    if value.endswith("\r"):
        value = value[:-1]

    if answer_kind is Kind.STR:
        if len(value) >= 2 and value[0] == value[-1] and value[0] in ("\"", "'"):
            inner = value[1:-1]
            if value[0] == "\"":
                try:
                    decoded = json.loads(value)
                    if isinstance(decoded, str):
                        inner = decoded
                except json.JSONDecodeError:
                    pass
            # keep the unstripped reading too: the gold answer itself may
            # begin and end with a quote character
            return Extraction((inner, value), quote_stripped=True)
        return Extraction((value,))

    value = value.strip()
    if answer_kind is Kind.BOOL:
        if value.lower() == "true":
            return Extraction(("True",))
        if value.lower() == "false":
            return Extraction(("False",))
        return Extraction((value,))
    if answer_kind is Kind.INT:
        return Extraction((value,))

    # str_list: re-serialize a well-formed JSON array so spacing
    # differences do not fail an otherwise exact answer
    try:
        decoded = json.loads(value)
    except json.JSONDecodeError:
        return Extraction((value,))
    if isinstance(decoded, list) and all(isinstance(x, str) for x in decoded):
        return Extraction((canonicalize_answer(decoded), value), quote_stripped=False)
    return Extraction((value,))


def extract_code(response: str) -> Optional[str]:
    blocks = _CODE_RE.findall(response)
    return blocks[-1] if blocks else None


def grade(extracted: Optional[str], gold: str) -> bool:
    return extracted is not None and extracted == gold


# ---------------------------------------------------------------- sandbox

@dataclass(frozen=True)
class ExecOutcome:
    status: str  # ok | timeout | error | forbidden
    answer: Optional[str]
    stderr_excerpt: str = ""


class SandboxClient:
    """Bridge to the code-execution sandbox: one process per request,

    single-line JSON request on stdin, single-line JSON result on stdout.
    """

    def __init__(self, argv: Sequence[str], timeout_ms: int = 5000,
                 memory_cap_bytes: int = 256 * 1024 * 1024):
        self.argv = list(argv)
        self.timeout_ms = timeout_ms
        self.memory_cap_bytes = memory_cap_bytes

    def execute(self, code: str) -> ExecOutcome:
        request = json.dumps({
            "code": code,
            "timeout_ms": self.timeout_ms,
            "memory_cap_bytes": self.memory_cap_bytes,
        }, ensure_ascii=False)
        try:
            proc = subprocess.run(
                self.argv, input=request + "\n", capture_output=True,
                text=True, timeout=self.timeout_ms / 1000 + 30)
        except FileNotFoundError as exc:
            raise HarnessError(f"sandbox unavailable: {exc}")
        except subprocess.TimeoutExpired:
            raise HarnessError("sandbox did not respond within its own timeout")
        line = proc.stdout.splitlines()[0] if proc.stdout.splitlines() else ""
        try:
            body = json.loads(line)
            status = body["status"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise HarnessError(
                f"sandbox protocol violation: {line[:200]!r} (exit {proc.returncode})")
        return ExecOutcome(status=status, answer=body.get("answer"),
                           stderr_excerpt=body.get("stderr_excerpt", "") or "")

    def health(self) -> dict:
        try:
            proc = subprocess.run(self.argv + ["--health"], capture_output=True,
                                  text=True, timeout=60)
        except (FileNotFoundError, subprocess.TimeoutExpired) as exc:
            raise HarnessError(f"sandbox unavailable: {exc}")
        try:
            body = json.loads(proc.stdout.splitlines()[0])
        except (json.JSONDecodeError, IndexError):
            raise HarnessError(f"sandbox health output unreadable: {proc.stdout[:200]!r}")
        if not body.get("ok"):
            raise HarnessError(f"sandbox unhealthy: {body}")
        return body


# ------------------------------------------------------------------- runs

@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    model_id: str
    strategy: str
    raw_response: str
    extracted: Optional[str]
    correct: bool
    latency_ms: float
    attempt_count: int
    quote_stripped: bool = False

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "model_id": self.model_id,
            "strategy": self.strategy,
            "raw_response": self.raw_response,
            "extracted": self.extracted,
            "correct": self.correct,
            "latency_ms": round(self.latency_ms, 3),
            "attempt_count": self.attempt_count,
            "quote_stripped": self.quote_stripped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(sample_id=d["sample_id"], model_id=d["model_id"],
                   strategy=d["strategy"], raw_response=d["raw_response"],
                   extracted=d["extracted"], correct=d["correct"],
                   latency_ms=d["latency_ms"], attempt_count=d["attempt_count"],
                   quote_stripped=d.get("quote_stripped", False))


def write_records(records: Iterable[EvalRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(), ensure_ascii=False,
                                separators=(",", ":")) + "\n")


def read_records(path: Union[str, Path]) -> list[EvalRecord]:
    out: list[EvalRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(EvalRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedLineError(str(path), line_no, str(exc))
    return out


def dataset_kind_of(sample_id: str) -> str:
    return sample_id.split(":", 1)[0]


@dataclass(frozen=True)
class AccuracyReport:
    model_id: str
    strategy: str
    counts: dict  # dataset_kind -> {"correct": int, "total": int}

    def accuracy(self, kind: str) -> float:
        c = self.counts[kind]
        return round(100.0 * c["correct"] / c["total"], 2) if c["total"] else 0.0

    @property
    def average(self) -> float:
        kinds = sorted(self.counts)
        if not kinds:
            return 0.0
        return round(sum(self.accuracy(k) for k in kinds) / len(kinds), 2)

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "strategy": self.strategy,
            "per_dataset": {k: {"accuracy": self.accuracy(k), **self.counts[k]}
                            for k in sorted(self.counts)},
            "average": self.average,
        }

    def format_table(self) -> str:
        kinds = sorted(self.counts)
        headers = ["model", "strategy", *kinds, "avg"]
        row = [self.model_id, self.strategy,
               *(f"{self.accuracy(k):.2f}" for k in kinds),
               f"{self.average:.2f}"]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        fmt = "  ".join(f"{{:<{w}}}" if i < 2 else f"{{:>{w}}}"
                        for i, w in enumerate(widths))
        return fmt.format(*headers) + "\n" + fmt.format(*row)


def report_from_records(records: Iterable[EvalRecord],
                        model_id: str = "", strategy: str = "") -> AccuracyReport:
    counts: dict[str, dict] = {}
    for rec in records:
        model_id = model_id or rec.model_id
        strategy = strategy or rec.strategy
        bucket = counts.setdefault(dataset_kind_of(rec.sample_id),
                                   {"correct": 0, "total": 0})
        bucket["total"] += 1
        bucket["correct"] += int(rec.correct)
    return AccuracyReport(model_id=model_id, strategy=strategy, counts=counts)


@dataclass(frozen=True)
class EvalRun:
    records: list
    report: AccuracyReport


def _evaluate_one(client, sample: QASample, strategy: PromptStrategy,
                  sandbox: Optional[SandboxClient]) -> EvalRecord:
    messages = make_prompt(sample, strategy)
    start = time.perf_counter()
    with_meta = getattr(client, "complete_with_meta", None)
    if with_meta is not None:
        response, attempts = with_meta(messages)
    else:
        response, attempts = client.complete(messages), 1
    latency_ms = (time.perf_counter() - start) * 1000.0

    if strategy.kind == "pot":
        code = extract_code(response)
        if code is None:
            extraction = Extraction(())
        else:
            outcome = sandbox.execute(code)
            if outcome.status == "ok" and outcome.answer is not None:
                extraction = Extraction((outcome.answer,))
            else:
                extraction = Extraction(())
    else:
        extraction = extract_answer(response, sample.answer_kind)

    extracted: Optional[str] = None
    correct = False
    for candidate in extraction.candidates:
        if grade(candidate, sample.answer):
            extracted, correct = candidate, True
            break
    if not correct and extraction.candidates:
        extracted = extraction.candidates[0]

    return EvalRecord(
        sample_id=sample.sample_id, model_id=client.model_id,
        strategy=strategy.kind, raw_response=response, extracted=extracted,
        correct=correct, latency_ms=latency_ms, attempt_count=attempts,
        quote_stripped=extraction.quote_stripped)


def run_eval(client, samples: Sequence[QASample],
             strategy: Union[PromptStrategy, str] = "raw", *,
             parallelism: int = 1,
             out_path: Optional[Union[str, Path]] = None,
             sandbox: Optional[SandboxClient] = None) -> EvalRun:
    """Evaluate `samples`, skipping any already recorded at `out_path`.

    New records are appended to `out_path` as they complete, so an
    interrupted run resumes where it stopped. The accuracy report does
    not depend on `parallelism`.
    """
    if isinstance(strategy, str):
        strategy = get_strategy(strategy)
    if strategy.kind == "pot" and sandbox is None:
        raise HarnessError("program strategy requires a sandbox")

    by_id: dict[str, EvalRecord] = {}
    if out_path is not None and Path(out_path).exists():
        for rec in read_records(out_path):
            if rec.strategy == strategy.kind and rec.model_id == client.model_id:
                by_id[rec.sample_id] = rec

    todo = [s for s in samples if s.sample_id not in by_id]
    write_lock = threading.Lock()
    sink = open(out_path, "a", encoding="utf-8") if out_path is not None else None

    def work(sample: QASample) -> EvalRecord:
        rec = _evaluate_one(client, sample, strategy, sandbox)
        if sink is not None:
            payload = json.dumps(rec.as_dict(), ensure_ascii=False,
                                 separators=(",", ":"))
            with write_lock:
                sink.write(payload + "\n")
                sink.flush()
        return rec

    try:
        if parallelism <= 1:
            fresh = [work(s) for s in todo]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                fresh = list(pool.map(work, todo))
    finally:
        if sink is not None:
            sink.close()

    for rec in fresh:
        by_id[rec.sample_id] = rec
    ordered = [by_id[s.sample_id] for s in samples if s.sample_id in by_id]
    report = report_from_records(ordered, model_id=client.model_id,
                                 strategy=strategy.kind)
    return EvalRun(records=ordered, report=report)
