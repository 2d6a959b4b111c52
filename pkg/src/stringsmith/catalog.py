"""The atomic operation catalog and composite task generation.

The 49 atomic tasks live in data/atomic_catalog.jsonl; that file, not this
module, is the source of truth for their code forms, parameter roles, and
clause texts.  Composites are built here by chaining atomic ops with
kind-correct wiring: each step's output feeds exactly one argument slot of
the next step, every other slot becomes a fresh parameter.  Candidates are
probed on sample inputs and rejected when any probe errors or when the
output never varies (a constant task grades itself).
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional, Sequence

from .lang import (
    OPS,
    Kind,
    Param,
    ParamRef,
    Step,
    StepRef,
    TaskProgram,
    canonical_hash,
    eval_program,
)
from .notation import build_program, parse_code
from .values import DomainError, Value, canonicalize_answer


@dataclass(frozen=True)
class ParamMeta:
    """Presentation and sampling metadata for one parameter slot."""

    name: str
    kind: Kind
    role: str
    of: Optional[int] = None  # slot index of the operand this derives from


@dataclass(frozen=True)
class AtomicOp:
    op_id: str
    category: str
    code_form: str
    params: tuple[ParamMeta, ...]
    output: Kind
    clause: str
    program: TaskProgram

    @property
    def signature(self) -> str:
        kinds = ", ".join(p.kind.value for p in self.params)
        return f"({kinds}) -> {self.output.value}"


def _load_catalog_file() -> list[dict]:
    text = (resources.files("stringsmith") / "data" / "atomic_catalog.jsonl"
            ).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]


_CATALOG_CACHE: Optional[list[AtomicOp]] = None


def atomic_catalog() -> list[AtomicOp]:
    """Load the fixed 49-op catalog, validating it against the op registry."""
    global _CATALOG_CACHE
    if _CATALOG_CACHE is not None:
        return list(_CATALOG_CACHE)
    ops = []
    seen = set()
    for record in _load_catalog_file():
        op_id = record["op_id"]
        if op_id in seen:
            raise ValueError(f"duplicate catalog op {op_id}")
        seen.add(op_id)
        metas = tuple(
            ParamMeta(p["name"], Kind(p["kind"]), p["role"], p.get("of"))
            for p in record["params"])
        declared = [Param(m.name, m.kind) for m in metas]
        program = parse_code(record["code_form"], params=declared,
                             task_id=op_id, origin="atomic")
        if len(program.steps) != 1:
            raise ValueError(f"{op_id} code form is not atomic")
        if program.steps[0].op_id != op_id:
            raise ValueError(
                f"{op_id} code form parses to {program.steps[0].op_id}")
        out = Kind(record["output"])
        if program.output_kind != out:
            raise ValueError(f"{op_id} output kind mismatch")
        ops.append(AtomicOp(op_id, record["category"], program.code_text,
                            metas, out, record["clause"], program))
    if len(ops) != 49:
        raise ValueError(f"catalog must hold 49 ops, found {len(ops)}")
    _CATALOG_CACHE = ops
    return list(ops)


def role_of(program: TaskProgram, name: str,
            catalog: Optional[Sequence[AtomicOp]] = None) -> ParamMeta:
    """Resolve a param's sampling role from its (single) use site.

    Works for atomic and composite programs alike: the step and slot where
    the param appears determine the role, via the catalog metadata of that
    step's op.  The 'of' reference stays a slot index within that step.
    """
    by_op = {op.op_id: op for op in (catalog or atomic_catalog())}
    for step in program.steps:
        for slot, arg in enumerate(step.args):
            if isinstance(arg, ParamRef) and arg.name == name:
                meta = by_op[step.op_id].params[slot]
                return ParamMeta(name, meta.kind, meta.role, meta.of)
    raise KeyError(f"param {name!r} not used in {program.task_id}")


# --------------------------------------------------------------- compose

@dataclass(frozen=True)
class CompositionConfig:
    seed: int = 0
    depth_range: tuple[int, int] = (2, 4)
    target_count: int = 1462
    probe_count: int = 5

    def __post_init__(self):
        lo, hi = self.depth_range
        if not 2 <= lo <= hi:
            raise ValueError(f"bad depth range {self.depth_range}")
        if self.target_count <= 0:
            raise ValueError("target_count must be positive")
        if self.probe_count < 3:
            raise ValueError("probe_count must be at least 3")


class CompositionExhausted(Exception):
    """The attempt budget ran out before reaching target_count tasks."""


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: Optional[str] = None

    @staticmethod
    def accept() -> "ValidationResult":
        return ValidationResult(True)

    @staticmethod
    def reject(reason: str) -> "ValidationResult":
        return ValidationResult(False, reason)


def validate_task(program: TaskProgram,
                  probes: Sequence[dict[str, Value]]) -> ValidationResult:
    """Accept iff every probe evaluates and the output is not constant."""
    outputs = []
    for bindings in probes:
        try:
            value = eval_program(program, bindings)
        except DomainError as exc:
            return ValidationResult.reject(f"execution-error: {exc}")
        outputs.append(canonicalize_answer(value))
    if len(set(outputs)) < 2:
        return ValidationResult.reject("constant-output")
    return ValidationResult.accept()


def dedup_tasks(tasks: Sequence[TaskProgram]) -> list[TaskProgram]:
    """Drop canonical-digest duplicates, keeping first occurrences."""
    seen = set()
    out = []
    for task in tasks:
        digest = canonical_hash(task)
        if digest not in seen:
            seen.add(digest)
            out.append(task)
    return out


# Diverse probe strings: mixed scripts, casing, digits, repeats, tabs.
# Deliberately no whitespace-only entries, so strip chains stay evaluable.
_PROBE_POOL = (
    "The quick brown fox jumps over the lazy dog",
    "abABab cdCDcd abAB 123",
    "Привет, мир! Каковы дела? 42",
    "café-menü №7 — ¿qué tal? ok",
    "0123456789abcdef0123456789abcdef",
    "HELLO WORLD HELLO again and AGAIN",
    "zz yy zz\twith\ttabs and. dots.",
    "mixed:  double  spaces / slash-es",
)

# Per-role integer probes keep subscripts inside the short pool strings.
_PROBE_INTS = {
    "index": (2, 5, 0, 7), "start_bound": (1, 3, 0, 5),
    "stop_bound": (6, 9, 4, 12), "stride": (2, 3, 4, 5),
    "repeat": (2, 3, 2, 4), "width": (12, 20, 15, 36),
}


def _probe_bindings(program: TaskProgram, count: int,
                    rng: random.Random,
                    catalog: Sequence[AtomicOp]) -> list[dict[str, Value]]:
    probes = []
    for i in range(count):
        bindings: dict[str, Value] = {}
        for param in program.params:
            meta = role_of(program, param.name, catalog)
            if param.kind == Kind.STR_LIST:
                k = 2 + (i % 3)
                words = rng.choice(_PROBE_POOL).split()
                bindings[param.name] = [words[j % len(words)]
                                        for j in range(k)]
            elif param.kind == Kind.INT:
                table = _PROBE_INTS.get(meta.role, (1, 2, 3, 4))
                bindings[param.name] = table[(i + rng.randrange(2)) % 4]
            elif meta.role == "separator":
                bindings[param.name] = rng.choice((", ", "-", " | ", ""))
            else:
                text = _PROBE_POOL[(i + rng.randrange(3)) % len(_PROBE_POOL)]
                if meta.role in ("substring", "prefix", "suffix",
                                 "edge_chars", "splitter"):
                    # short fragments so searches hit sometimes
                    start = rng.randrange(max(1, len(text) - 4))
                    bindings[param.name] = text[start:start + rng.randint(1, 3)]
                else:
                    bindings[param.name] = text
        probes.append(bindings)
    return probes


_STR_NAMES = "abcdefghijk"
_INT_NAMES = "yzwvuts"
_LIST_NAMES = "lmn"


class _NamePool:
    def __init__(self):
        self.counts = {Kind.STR: 0, Kind.INT: 0, Kind.STR_LIST: 0}

    def fresh(self, kind: Kind) -> str:
        pools = {Kind.STR: _STR_NAMES, Kind.INT: _INT_NAMES,
                 Kind.STR_LIST: _LIST_NAMES}
        i = self.counts[kind]
        self.counts[kind] += 1
        pool = pools[kind]
        if i < len(pool):
            return pool[i]
        return f"{pool[0]}{i}"


def _build_chain(catalog: Sequence[AtomicOp], depth: int,
                 rng: random.Random) -> TaskProgram:
    """One random kind-correct chain of the given depth (may collide with
    a previous draw; dedup happens in compose)."""
    by_out: dict[Kind, list[AtomicOp]] = {}
    consumers: dict[Kind, list[AtomicOp]] = {}
    for op in catalog:
        by_out.setdefault(op.output, []).append(op)
        for meta in op.params:
            bucket = consumers.setdefault(meta.kind, [])
            if op not in bucket:
                bucket.append(op)

    names = _NamePool()
    params: list[Param] = []
    steps: list[Step] = []

    def fresh_param(kind: Kind) -> ParamRef:
        name = names.fresh(kind)
        params.append(Param(name, kind))
        return ParamRef(name)

    prev_out: Optional[Kind] = None
    for level in range(depth):
        if level == 0:
            pool = [op for op in catalog
                    if depth == 1 or op.output != Kind.BOOL]
            op = rng.choice(pool)
            feed_slot = None
        else:
            pool = [op for op in consumers.get(prev_out, [])
                    if level == depth - 1 or op.output != Kind.BOOL]
            if not pool:
                raise LookupError(f"no consumer for {prev_out}")
            op = rng.choice(pool)
            slots = [i for i, m in enumerate(op.params) if m.kind == prev_out]
            feed_slot = rng.choice(slots)
        args = []
        for i, meta in enumerate(op.params):
            if i == feed_slot:
                args.append(StepRef(len(steps) - 1))
            else:
                args.append(fresh_param(meta.kind))
        steps.append(Step(op.op_id, tuple(args)))
        prev_out = op.output
    return build_program(None, params, steps, origin="composite")


def compose(catalog: Sequence[AtomicOp], config: CompositionConfig,
            validator: Optional[Callable[[TaskProgram], ValidationResult]]
            = None) -> list[TaskProgram]:
    """Generate config.target_count validated, deduplicated composites.

    Deterministic in (catalog order, config).  The attempt budget scales
    with the target; running out raises CompositionExhausted, which is the
    expected outcome when the catalog is too small for the target.
    """
    rng = random.Random(config.seed)
    budget = 60 * config.target_count + 2000
    out: list[TaskProgram] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < config.target_count:
        attempts += 1
        if attempts > budget:
            raise CompositionExhausted(
                f"built {len(out)}/{config.target_count} composites "
                f"in {budget} attempts")
        depth = rng.randint(*config.depth_range)
        try:
            program = _build_chain(catalog, depth, rng)
        except LookupError:
            continue
        digest = canonical_hash(program)
        if digest in seen:
            continue
        if validator is not None:
            result = validator(program)
        else:
            probes = _probe_bindings(program, config.probe_count, rng,
                                     catalog)
            result = validate_task(program, probes)
        if not result.ok:
            continue
        seen.add(digest)
        final = TaskProgram(
            task_id=f"comp-{len(out) + 1:04d}", params=program.params,
            steps=program.steps, output_kind=program.output_kind,
            code_text=program.code_text, origin="composite",
            depth=program.depth)
        out.append(final)
    return out


def full_task_set(config: Optional[CompositionConfig] = None
                  ) -> list[TaskProgram]:
    """The 49 atomic programs plus the composed set: 1,511 by default."""
    catalog = atomic_catalog()
    composites = compose(catalog, config or CompositionConfig())
    return [op.program for op in catalog] + composites


def write_tasks(tasks: Sequence[TaskProgram], path) -> None:
    """Task set as JSONL; code_text is the authoritative program field."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            record = {"task_id": t.task_id, "origin": t.origin,
                      "depth": t.depth, "code_text": t.code_text,
                      "output_kind": t.output_kind.value,
                      "params": [[p.name, p.kind.value] for p in t.params]}
            fh.write(json.dumps(record, ensure_ascii=False,
                                separators=(",", ":")) + "\n")


def read_tasks(path) -> list[TaskProgram]:
    """Rebuild programs by reparsing code_text; params are checked against
    the stored signature so a hand-edited file cannot drift silently."""
    out: list[TaskProgram] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            d = json.loads(line)
            params = tuple(Param(name=n, kind=Kind(k)) for n, k in d["params"])
            program = parse_code(d["code_text"], params=params)
            program = dataclasses.replace(
                program, task_id=d["task_id"], origin=d["origin"],
                depth=int(d["depth"]))
            if program.output_kind.value != d["output_kind"]:
                raise ValueError(
                    f"{path}:{line_no}: output kind mismatch for {d['task_id']}")
            out.append(program)
    return out
