"""Task programs: typed operation chains over string values.

A task program is a list of steps over named, kinded parameters.  Each step
applies one operation from the fixed registry to parameters, literals, or
results of earlier steps.  The final step's value is the program's answer.

The interpreter here is the ground-truth oracle for the whole pipeline:
question rendering, grading, and fine-tune export all trust it.  Operation
semantics follow Python's own string semantics exactly, except that a small
set of inputs are ruled out of the domain (see DomainError) so that every
retained sample has a well-defined, finite answer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .values import DomainError, Kind, Value, kind_of

# Results larger than this are treated as out of domain rather than built.
MAX_RESULT_CHARS = 1_000_000


class TaskTypeError(Exception):
    """A program is structurally ill-formed or violates operation kinds."""


@dataclass(frozen=True, slots=True)
class Param:
    name: str
    kind: Kind


@dataclass(frozen=True, slots=True)
class ParamRef:
    name: str


@dataclass(frozen=True, slots=True)
class StepRef:
    index: int


@dataclass(frozen=True, slots=True)
class LitInt:
    value: int


@dataclass(frozen=True, slots=True)
class LitStr:
    value: str


Arg = Union[ParamRef, StepRef, LitInt, LitStr]


@dataclass(frozen=True, slots=True)
class Step:
    op_id: str
    args: tuple[Arg, ...]


@dataclass(frozen=True, slots=True)
class SliceSpec:
    """Which positions of a slice expression are filled, and with what.

    Each field is None (absent), "arg" (filled by the next step argument),
    or an int (a fixed literal, used by the reverse form [::-1]).
    """

    start: Optional[Union[str, int]] = None
    stop: Optional[Union[str, int]] = None
    step: Optional[Union[str, int]] = None

    def arg_count(self) -> int:
        return sum(1 for f in (self.start, self.stop, self.step) if f == "arg")


@dataclass(frozen=True, slots=True)
class OpSpec:
    """One operation: argument kinds, result kind, surface syntax, semantics.

    form is one of "binary", "method", "func", "subscript", "slice".
    symbol holds the operator symbol, method name, or function name.
    Argument order always matches source order; for slices the base string
    is argument 0 and the filled slice positions follow start, stop, step.
    """

    op_id: str
    category: str
    arg_kinds: tuple[Kind, ...]
    out_kind: Kind
    form: str
    symbol: str = ""
    slice_spec: Optional[SliceSpec] = None
    fn: Callable[..., Value] = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class TaskProgram:
    """A complete task: parameters, steps, and the canonical code text.

    Build instances through notation.build_program or notation.parse_code,
    which enforce that code_text is the canonical rendering of steps and
    that output_kind matches the typechecker.
    """

    task_id: str
    params: tuple[Param, ...]
    steps: tuple[Step, ...]
    output_kind: Kind
    code_text: str
    origin: str  # "atomic" or "composite"
    depth: int

    def structure(self) -> tuple:
        """Identity of the computation, independent of task_id."""
        return (self.params, self.steps, self.output_kind)


def _char_at(a: str, y: int) -> str:
    if not -len(a) <= y < len(a):
        raise DomainError(f"index {y} out of range for length {len(a)}")
    return a[y]


def _repeat(a: str, y: int) -> str:
    if y < 0:
        raise DomainError("negative repeat count")
    if len(a) * y > MAX_RESULT_CHARS:
        raise DomainError("repeat result too large")
    return a * y


def _stride(a: str, y: int) -> str:
    if y == 0:
        raise DomainError("slice step of zero")
    return a[::y]


def _min_char(a: str) -> str:
    if not a:
        raise DomainError("min of empty string")
    return min(a)


def _max_char(a: str) -> str:
    if not a:
        raise DomainError("max of empty string")
    return max(a)


def _split(a: str, x: str) -> list:
    if x == "":
        raise DomainError("empty separator")
    return a.split(x)


def _partition(a: str, x: str) -> list:
    if x == "":
        raise DomainError("empty separator")
    return list(a.partition(x))


def _rpartition(a: str, x: str) -> list:
    if x == "":
        raise DomainError("empty separator")
    return list(a.rpartition(x))


def _pad_guard(y: int) -> None:
    if y > MAX_RESULT_CHARS:
        raise DomainError("pad width too large")


def _center(a: str, y: int) -> str:
    _pad_guard(y)
    return a.center(y)


def _ljust(a: str, y: int) -> str:
    _pad_guard(y)
    return a.ljust(y)


def _rjust(a: str, y: int) -> str:
    _pad_guard(y)
    return a.rjust(y)


def _zfill(a: str, y: int) -> str:
    _pad_guard(y)
    return a.zfill(y)


_S = Kind.STR
_I = Kind.INT
_B = Kind.BOOL
_L = Kind.STR_LIST


def _make_ops() -> dict[str, OpSpec]:
    defs = [
        # op_id, category, arg kinds, out, form, symbol, slice_spec, fn
        ("concat", "concat-repeat", (_S, _S), _S, "binary", "+", None,
         lambda a, b: a + b),
        ("repeat", "concat-repeat", (_S, _I), _S, "binary", "*", None, _repeat),
        ("char_at", "indexing", (_S, _I), _S, "subscript", "", None, _char_at),
        ("slice_prefix", "slicing", (_S, _I), _S, "slice", "",
         SliceSpec(stop="arg"), lambda a, y: a[:y]),
        ("slice_suffix", "slicing", (_S, _I), _S, "slice", "",
         SliceSpec(start="arg"), lambda a, y: a[y:]),
        ("slice_range", "slicing", (_S, _I, _I), _S, "slice", "",
         SliceSpec(start="arg", stop="arg"), lambda a, y, z: a[y:z]),
        ("slice_stride", "slicing", (_S, _I), _S, "slice", "",
         SliceSpec(step="arg"), _stride),
        ("reverse", "slicing", (_S,), _S, "slice", "",
         SliceSpec(step=-1), lambda a: a[::-1]),
        ("length", "counting", (_S,), _I, "func", "len", None, len),
        ("count", "counting", (_S, _S), _I, "method", "count", None,
         lambda a, x: a.count(x)),
        ("find", "search", (_S, _S), _I, "method", "find", None,
         lambda a, x: a.find(x)),
        ("rfind", "search", (_S, _S), _I, "method", "rfind", None,
         lambda a, x: a.rfind(x)),
        ("contains", "search", (_S, _S), _B, "binary", "in", None,
         lambda x, y: x in y),
        ("startswith", "predicate", (_S, _S), _B, "method", "startswith", None,
         lambda a, x: a.startswith(x)),
        ("endswith", "predicate", (_S, _S), _B, "method", "endswith", None,
         lambda a, x: a.endswith(x)),
        ("equals", "predicate", (_S, _S), _B, "binary", "==", None,
         lambda a, b: a == b),
        ("isalnum", "predicate", (_S,), _B, "method", "isalnum", None,
         lambda a: a.isalnum()),
        ("isalpha", "predicate", (_S,), _B, "method", "isalpha", None,
         lambda a: a.isalpha()),
        ("isascii", "predicate", (_S,), _B, "method", "isascii", None,
         lambda a: a.isascii()),
        ("isdigit", "predicate", (_S,), _B, "method", "isdigit", None,
         lambda a: a.isdigit()),
        ("islower", "predicate", (_S,), _B, "method", "islower", None,
         lambda a: a.islower()),
        ("isspace", "predicate", (_S,), _B, "method", "isspace", None,
         lambda a: a.isspace()),
        ("istitle", "predicate", (_S,), _B, "method", "istitle", None,
         lambda a: a.istitle()),
        ("isupper", "predicate", (_S,), _B, "method", "isupper", None,
         lambda a: a.isupper()),
        ("upper", "casing", (_S,), _S, "method", "upper", None,
         lambda a: a.upper()),
        ("lower", "casing", (_S,), _S, "method", "lower", None,
         lambda a: a.lower()),
        ("capitalize", "casing", (_S,), _S, "method", "capitalize", None,
         lambda a: a.capitalize()),
        ("title", "casing", (_S,), _S, "method", "title", None,
         lambda a: a.title()),
        ("swapcase", "casing", (_S,), _S, "method", "swapcase", None,
         lambda a: a.swapcase()),
        ("replace", "transform", (_S, _S, _S), _S, "method", "replace", None,
         lambda a, x, b: a.replace(x, b)),
        ("expandtabs", "transform", (_S,), _S, "method", "expandtabs", None,
         lambda a: a.expandtabs()),
        ("sort_chars", "transform", (_S,), _L, "func", "sorted", None,
         lambda a: sorted(a)),
        ("min_char", "transform", (_S,), _S, "func", "min", None, _min_char),
        ("max_char", "transform", (_S,), _S, "func", "max", None, _max_char),
        ("strip_chars", "padding-stripping", (_S, _S), _S, "method", "strip",
         None, lambda a, x: a.strip(x)),
        ("strip_ws", "padding-stripping", (_S,), _S, "method", "strip", None,
         lambda a: a.strip()),
        ("lstrip_chars", "padding-stripping", (_S, _S), _S, "method", "lstrip",
         None, lambda a, x: a.lstrip(x)),
        ("rstrip_chars", "padding-stripping", (_S, _S), _S, "method", "rstrip",
         None, lambda a, x: a.rstrip(x)),
        ("remove_prefix", "padding-stripping", (_S, _S), _S, "method",
         "removeprefix", None, lambda a, x: a.removeprefix(x)),
        ("remove_suffix", "padding-stripping", (_S, _S), _S, "method",
         "removesuffix", None, lambda a, x: a.removesuffix(x)),
        ("center", "padding-stripping", (_S, _I), _S, "method", "center",
         None, _center),
        ("ljust", "padding-stripping", (_S, _I), _S, "method", "ljust",
         None, _ljust),
        ("rjust", "padding-stripping", (_S, _I), _S, "method", "rjust",
         None, _rjust),
        ("zfill", "padding-stripping", (_S, _I), _S, "method", "zfill",
         None, _zfill),
        ("split", "split-join", (_S, _S), _L, "method", "split", None, _split),
        ("split_ws", "split-join", (_S,), _L, "method", "split", None,
         lambda a: a.split()),
        ("partition", "split-join", (_S, _S), _L, "method", "partition",
         None, _partition),
        ("rpartition", "split-join", (_S, _S), _L, "method", "rpartition",
         None, _rpartition),
        ("join", "split-join", (_S, _L), _S, "method", "join", None,
         lambda x, l: x.join(l)),
    ]
    ops = {}
    for op_id, category, kinds, out, form, symbol, sl, fn in defs:
        ops[op_id] = OpSpec(op_id, category, kinds, out, form, symbol, sl, fn)
    return ops


OPS: dict[str, OpSpec] = _make_ops()

# Parser lookup tables.  Method ops are keyed by (name, argument count)
# because strip and split each have a with-separator and a bare form.
BINARY_OPS = {s.symbol: s.op_id for s in OPS.values() if s.form == "binary"}
METHOD_OPS = {(s.symbol, len(s.arg_kinds) - 1): s.op_id
              for s in OPS.values() if s.form == "method"}
FUNC_OPS = {s.symbol: s.op_id for s in OPS.values() if s.form == "func"}


def typecheck(params: tuple[Param, ...], steps: tuple[Step, ...]) -> Kind:
    """Validate a program and return its output kind.

    Enforces, beyond argument kinds: unique param names, every param used,
    step references only point backwards, and every non-final step feeds
    exactly one later argument (programs are chains, so they render to a
    single expression).
    """
    if not steps:
        raise TaskTypeError("program has no steps")
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise TaskTypeError(f"duplicate param names in {names}")
    by_name = {p.name: p for p in params}
    used_params: set[str] = set()
    step_uses = [0] * len(steps)

    def arg_kind(arg: Arg, limit: int) -> Kind:
        if isinstance(arg, ParamRef):
            if arg.name not in by_name:
                raise TaskTypeError(f"unknown param {arg.name!r}")
            used_params.add(arg.name)
            return by_name[arg.name].kind
        if isinstance(arg, StepRef):
            if not 0 <= arg.index < limit:
                raise TaskTypeError(f"step ref {arg.index} out of range")
            step_uses[arg.index] += 1
            return OPS[steps[arg.index].op_id].out_kind
        if isinstance(arg, LitInt):
            return Kind.INT
        if isinstance(arg, LitStr):
            return Kind.STR
        raise TaskTypeError(f"bad argument node {arg!r}")

    for i, step in enumerate(steps):
        spec = OPS.get(step.op_id)
        if spec is None:
            raise TaskTypeError(f"unknown op {step.op_id!r}")
        if len(step.args) != len(spec.arg_kinds):
            raise TaskTypeError(
                f"{step.op_id} takes {len(spec.arg_kinds)} args, "
                f"got {len(step.args)}")
        for arg, want in zip(step.args, spec.arg_kinds):
            got = arg_kind(arg, i)
            if got != want:
                raise TaskTypeError(
                    f"{step.op_id} arg kind mismatch: expected {want}, "
                    f"got {got}")
    unused = set(names) - used_params
    if unused:
        raise TaskTypeError(f"params never used: {sorted(unused)}")
    for i, uses in enumerate(step_uses[:-1]):
        if uses != 1:
            raise TaskTypeError(f"step {i} used {uses} times, expected 1")
    if step_uses[-1] != 0:
        raise TaskTypeError("final step may not be referenced")
    return OPS[steps[-1].op_id].out_kind


def eval_program(program: TaskProgram, bindings: dict[str, Value],
                 trace: bool = False) -> Value | list[Value]:
    """Run a program on bound parameter values.

    Bindings must cover exactly the declared params with matching kinds;
    anything else is a caller bug and raises TypeError.  Inputs outside an
    operation's domain raise DomainError.  With trace=True the list of all
    intermediate step values is returned instead of just the last.
    """
    declared = {p.name: p.kind for p in program.params}
    if set(bindings) != set(declared):
        raise TypeError(
            f"bindings {sorted(bindings)} do not match params "
            f"{sorted(declared)}")
    for name, value in bindings.items():
        if kind_of(value) != declared[name]:
            raise TypeError(
                f"param {name} expects {declared[name]}, "
                f"got {kind_of(value)}")

    results: list[Value] = []

    def resolve(arg: Arg) -> Value:
        if isinstance(arg, ParamRef):
            return bindings[arg.name]
        if isinstance(arg, StepRef):
            return results[arg.index]
        return arg.value

    for step in program.steps:
        spec = OPS[step.op_id]
        value = spec.fn(*(resolve(a) for a in step.args))
        if isinstance(value, str) and len(value) > MAX_RESULT_CHARS:
            raise DomainError("step result too large")
        if isinstance(value, list) and sum(map(len, value)) > MAX_RESULT_CHARS:
            raise DomainError("step result too large")
        results.append(value)
    return results if trace else results[-1]


def _encode_arg(arg: Arg, rank: dict[str, int]) -> list:
    if isinstance(arg, ParamRef):
        return ["p", rank[arg.name]]
    if isinstance(arg, StepRef):
        return ["s", arg.index]
    if isinstance(arg, LitInt):
        return ["i", arg.value]
    return ["t", arg.value]


def canonical_hash(program: TaskProgram) -> str:
    """Digest of the computation, invariant under order-preserving renames.

    Parameters are replaced by their rank in sorted name order, so renaming
    that keeps the relative order of names (a,b -> p,q) leaves the digest
    unchanged, while swapping argument roles (a+b vs b+a) changes it.
    Param kinds, literals, step structure, and output kind all contribute.
    """
    order = sorted(p.name for p in program.params)
    rank = {n: i for i, n in enumerate(order)}
    kinds = [by.kind.value
             for by in sorted(program.params, key=lambda p: p.name)]
    doc = {
        "params": kinds,
        "steps": [[s.op_id, [_encode_arg(a, rank) for a in s.args]]
                  for s in program.steps],
        "out": OPS[program.steps[-1].op_id].out_kind.value,
    }
    blob = json.dumps(doc, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
