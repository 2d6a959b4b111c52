"""Typed runtime values for the string-task language.

Four kinds exist: str, int, bool, and list-of-str.  Every value that flows
through the interpreter, the dataset builder, and the grader is one of these.
Answers are compared as canonical strings, so the canonical form is defined
here once and reused everywhere (including by the code-execution sandbox).
"""

from __future__ import annotations

import json
from enum import Enum
from typing import Union

Value = Union[str, int, bool, list]


class Kind(str, Enum):
    STR = "str"
    INT = "int"
    BOOL = "bool"
    STR_LIST = "str_list"

    def __str__(self) -> str:  # keeps f-strings and error messages terse
        return self.value


class DomainError(Exception):
    """A well-typed program hit an input outside an operation's domain.

    Examples: out-of-range character index, negative repeat count, empty
    separator for split, min/max of an empty string.  Builders catch this
    and discard the sample; it is not a bug signal.
    """


def kind_of(value: Value) -> Kind:
    # bool is a subclass of int, so it must be tested first
    if isinstance(value, bool):
        return Kind.BOOL
    if isinstance(value, int):
        return Kind.INT
    if isinstance(value, str):
        return Kind.STR
    # tuples count: running task code as real Python yields a tuple for
    # partition-style operations where the oracle models a list
    if isinstance(value, (list, tuple)) and all(isinstance(x, str) for x in value):
        return Kind.STR_LIST
    raise TypeError(f"not a task value: {value!r}")


def check_kind(value: Value, expected: Kind) -> None:
    got = kind_of(value)
    if got != expected:
        raise TypeError(f"expected {expected}, got {got} ({value!r})")


def canonicalize_answer(value: Value) -> str:
    """Render a value as the canonical answer string used for grading.

    str      -> the text itself, verbatim (no quotes, no trimming)
    int      -> decimal digits, e.g. "12", "-3"
    bool     -> "True" / "False"
    str_list -> JSON array with a space after each comma and non-ASCII
                kept literal, e.g. ["ab", "c d"]
    """
    kind = kind_of(value)
    if kind == Kind.STR:
        return value
    if kind == Kind.BOOL:
        return "True" if value else "False"
    if kind == Kind.INT:
        return str(value)
    return json.dumps(list(value), ensure_ascii=False)


def parse_answer(text: str, kind: Kind) -> Value:
    """Inverse of canonicalize_answer for a known output kind.

    Raises ValueError when the text is not a canonical rendering of the
    kind.  For STR every text is valid and returned unchanged.
    """
    if kind == Kind.STR:
        return text
    if kind == Kind.BOOL:
        if text == "True":
            return True
        if text == "False":
            return False
        raise ValueError(f"not a canonical bool: {text!r}")
    if kind == Kind.INT:
        body = text[1:] if text.startswith("-") else text
        if not body.isdigit() or str(int(text)) != text:
            # rejects leading zeros and -0: not canonical renderings
            raise ValueError(f"not a canonical int: {text!r}")
        return int(text)
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not a canonical str list: {text!r}") from exc
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ValueError(f"not a canonical str list: {text!r}")
    return value
