"""Parser and renderer for the task code notation.

Every task carries one line of code in a small Python-shaped notation:

    program    = "ans" "=" expr
    expr       = additive (("in" | "==") additive)?     comparisons don't chain
    additive   = multiplicative ("+" multiplicative)*
    multiplicative = postfix ("*" postfix)*
    postfix    = atom (trailer)*
    trailer    = "[" subscript "]" | "." NAME "(" arglist? ")"
    subscript  = expr | slice
    slice      = expr? ":" expr? (":" expr?)?
    atom       = NAME | INT | "-" INT | STRING
               | ("len" | "sorted" | "min" | "max") "(" expr ")"
               | "(" expr ")"
    arglist    = expr ("," expr)*

Strings quote with ' or " and support the usual backslash escapes.  The
renderer is canonical: double quotes, single spaces around binary operators,
", " between method arguments, and parentheses only around a binary
subexpression used as a binary operand, a method receiver, or a
subscript/slice base.  parse_code(render_code(p)) reproduces p's structure
exactly for every well-formed program.

Operation identity comes from the surface form: operator symbol, method
name plus argument count, function name, or slice shape.  A subscript or
slice on a bare name reads the base as a string, so a[y] is always the
character-at operation; list indexing is not part of the notation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .lang import (
    BINARY_OPS,
    FUNC_OPS,
    METHOD_OPS,
    OPS,
    Arg,
    Kind,
    LitInt,
    LitStr,
    Param,
    ParamRef,
    Step,
    StepRef,
    TaskProgram,
    TaskTypeError,
    canonical_hash,
    typecheck,
)

RESERVED_NAMES = frozenset({"ans", "in", "len", "sorted", "min", "max",
                            "True", "False", "None"})


class NotationSyntaxError(Exception):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at column {pos})")
        self.pos = pos


# ---------------------------------------------------------------- tokens

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"[0-9]+")
_PUNCT = ("==", "+", "*", "[", "]", "(", ")", ",", ".", ":", "=", "-")

_UNESCAPE = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t",
             "r": "\r", "v": "\v", "f": "\f", "a": "\a", "b": "\b",
             "0": "\0"}


@dataclass(frozen=True)
class _Token:
    type: str  # NAME INT STRING PUNCT EOF
    text: str
    value: object
    pos: int


def _lex_string(text: str, i: int) -> tuple[str, int]:
    quote = text[i]
    start = i
    i += 1
    out = []
    while i < len(text):
        ch = text[i]
        if ch == quote:
            return "".join(out), i + 1
        if ch == "\\":
            i += 1
            if i >= len(text):
                raise NotationSyntaxError("unterminated escape", i)
            esc = text[i]
            if esc in _UNESCAPE:
                out.append(_UNESCAPE[esc])
                i += 1
            elif esc in ("x", "u", "U"):
                width = {"x": 2, "u": 4, "U": 8}[esc]
                digits = text[i + 1:i + 1 + width]
                if len(digits) != width or any(
                        c not in "0123456789abcdefABCDEF" for c in digits):
                    raise NotationSyntaxError(f"bad \\{esc} escape", i)
                out.append(chr(int(digits, 16)))
                i += 1 + width
            else:
                raise NotationSyntaxError(f"unknown escape \\{esc}", i)
        else:
            out.append(ch)
            i += 1
    raise NotationSyntaxError("unterminated string", start)


def _lex(text: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch in "'\"":
            value, j = _lex_string(text, i)
            tokens.append(_Token("STRING", text[i:j], value, i))
            i = j
            continue
        m = _NAME_RE.match(text, i)
        if m:
            word = m.group()
            if word == "in":
                tokens.append(_Token("PUNCT", "in", None, i))
            else:
                tokens.append(_Token("NAME", word, word, i))
            i = m.end()
            continue
        m = _INT_RE.match(text, i)
        if m:
            tokens.append(_Token("INT", m.group(), int(m.group()), i))
            i = m.end()
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(_Token("PUNCT", p, None, i))
                i += len(p)
                break
        else:
            raise NotationSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("EOF", "", None, len(text)))
    return tokens


# ------------------------------------------------------------- parse tree

@dataclass(frozen=True)
class _Name:
    name: str
    pos: int


@dataclass(frozen=True)
class _Int:
    value: int
    pos: int


@dataclass(frozen=True)
class _Str:
    value: str
    pos: int


@dataclass(frozen=True)
class _Bin:
    symbol: str
    left: object
    right: object
    pos: int


@dataclass(frozen=True)
class _Method:
    receiver: object
    name: str
    args: tuple
    pos: int


@dataclass(frozen=True)
class _Func:
    name: str
    arg: object
    pos: int


@dataclass(frozen=True)
class _Subscript:
    base: object
    index: object
    pos: int


@dataclass(frozen=True)
class _Slice:
    base: object
    start: object  # parse node or None
    stop: object
    step: object
    pos: int


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise NotationSyntaxError(
                f"expected {text!r}, found {tok.text or 'end of input'!r}",
                tok.pos)
        return tok

    def at_punct(self, *texts: str) -> bool:
        tok = self.peek()
        return tok.type == "PUNCT" and tok.text in texts

    def parse_program(self):
        tok = self.next()
        if tok.type != "NAME" or tok.value != "ans":
            raise NotationSyntaxError("program must start with 'ans'",
                                      tok.pos)
        self.expect("=")
        tree = self.parse_expr()
        tok = self.peek()
        if tok.type != "EOF":
            raise NotationSyntaxError(f"trailing input {tok.text!r}", tok.pos)
        return tree

    def parse_expr(self):
        left = self.parse_additive()
        if self.at_punct("in", "=="):
            tok = self.next()
            right = self.parse_additive()
            if self.at_punct("in", "=="):
                raise NotationSyntaxError("comparisons do not chain",
                                          self.peek().pos)
            return _Bin(tok.text, left, right, tok.pos)
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while self.at_punct("+"):
            tok = self.next()
            left = _Bin("+", left, self.parse_multiplicative(), tok.pos)
        return left

    def parse_multiplicative(self):
        left = self.parse_postfix()
        while self.at_punct("*"):
            tok = self.next()
            left = _Bin("*", left, self.parse_postfix(), tok.pos)
        return left

    def parse_postfix(self):
        node = self.parse_atom()
        while True:
            if self.at_punct("["):
                node = self.parse_subscript(node)
            elif self.at_punct("."):
                self.next()
                name_tok = self.next()
                if name_tok.type != "NAME":
                    raise NotationSyntaxError("expected method name",
                                              name_tok.pos)
                self.expect("(")
                args = []
                if not self.at_punct(")"):
                    args.append(self.parse_expr())
                    while self.at_punct(","):
                        self.next()
                        args.append(self.parse_expr())
                self.expect(")")
                node = _Method(node, name_tok.value, tuple(args),
                               name_tok.pos)
            else:
                return node

    def parse_subscript(self, base):
        open_tok = self.expect("[")
        start = None
        if not self.at_punct(":"):
            start = self.parse_expr()
            if self.at_punct("]"):
                self.next()
                return _Subscript(base, start, open_tok.pos)
        self.expect(":")
        stop = None
        step = None
        if not self.at_punct(":", "]"):
            stop = self.parse_expr()
        if self.at_punct(":"):
            self.next()
            if not self.at_punct("]"):
                step = self.parse_expr()
        self.expect("]")
        return _Slice(base, start, stop, step, open_tok.pos)

    def parse_atom(self):
        tok = self.next()
        if tok.type == "INT":
            return _Int(tok.value, tok.pos)
        if tok.type == "STRING":
            return _Str(tok.value, tok.pos)
        if tok.text == "-":
            num = self.next()
            if num.type != "INT":
                raise NotationSyntaxError("expected integer after '-'",
                                          num.pos)
            return _Int(-num.value, tok.pos)
        if tok.text == "(":
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.type == "NAME":
            if self.at_punct("(") :
                if tok.value not in FUNC_OPS:
                    raise NotationSyntaxError(
                        f"unknown function {tok.value!r}", tok.pos)
                self.next()
                arg = self.parse_expr()
                self.expect(")")
                return _Func(tok.value, arg, tok.pos)
            if tok.value in RESERVED_NAMES:
                raise NotationSyntaxError(
                    f"{tok.value!r} cannot be used as a name", tok.pos)
            return _Name(tok.value, tok.pos)
        raise NotationSyntaxError(
            f"unexpected token {tok.text or 'end of input'!r}", tok.pos)


# ------------------------------------------------------------- lowering

class _Lowerer:
    """Turn a parse tree into steps, collecting param kind constraints."""

    def __init__(self, declared: Optional[dict[str, Kind]]):
        self.declared = declared
        self.inferred: dict[str, Kind] = {}
        self.order: list[str] = []
        self.steps: list[Step] = []

    def constrain(self, name: str, kind: Kind, pos: int) -> None:
        if name not in self.order:
            self.order.append(name)
        if self.declared is not None:
            if name not in self.declared:
                raise NotationSyntaxError(f"unknown name {name!r}", pos)
            if self.declared[name] != kind:
                raise TaskTypeError(
                    f"param {name} is declared {self.declared[name]} but "
                    f"used as {kind}")
            return
        before = self.inferred.get(name)
        if before is None:
            self.inferred[name] = kind
        elif before != kind:
            raise TaskTypeError(
                f"param {name} used both as {before} and as {kind}")

    def kind_at(self, name: str) -> Optional[Kind]:
        if self.declared is not None:
            return self.declared.get(name)
        return self.inferred.get(name)

    def emit(self, op_id: str, args: list[Arg]) -> StepRef:
        self.steps.append(Step(op_id, tuple(args)))
        return StepRef(len(self.steps) - 1)

    def lower_arg(self, node, want: Kind, pos: int) -> Arg:
        """Lower a node expected to produce the given kind."""
        if isinstance(node, _Name):
            self.constrain(node.name, want, node.pos)
            return ParamRef(node.name)
        if isinstance(node, _Int):
            if want != Kind.INT:
                raise TaskTypeError(f"integer literal where {want} expected")
            return LitInt(node.value)
        if isinstance(node, _Str):
            if want != Kind.STR:
                raise TaskTypeError(f"string literal where {want} expected")
            return LitStr(node.value)
        ref = self.lower_op(node)
        got = OPS[self.steps[ref.index].op_id].out_kind
        if got != want:
            raise TaskTypeError(f"expected {want}, got {got} expression")
        return ref

    def base_kind(self, node) -> Kind:
        """Kind of a subscript/slice base: known step kinds win, bare
        names default to str (list indexing is outside the notation)."""
        if isinstance(node, _Name):
            known = self.kind_at(node.name)
            return known if known is not None else Kind.STR
        if isinstance(node, _Str):
            return Kind.STR
        if isinstance(node, _Int):
            return Kind.INT
        op_id = self.op_for(node)
        return OPS[op_id].out_kind

    def op_for(self, node) -> str:
        if isinstance(node, _Bin):
            return BINARY_OPS[node.symbol]
        if isinstance(node, _Method):
            key = (node.name, len(node.args))
            if key not in METHOD_OPS:
                raise NotationSyntaxError(
                    f"unknown method {node.name!r} with {len(node.args)} "
                    f"argument(s)", node.pos)
            return METHOD_OPS[key]
        if isinstance(node, _Func):
            return FUNC_OPS[node.name]
        if isinstance(node, _Subscript):
            if self.base_kind(node.base) != Kind.STR:
                raise TaskTypeError("subscript base must be a string")
            return "char_at"
        if isinstance(node, _Slice):
            return self.slice_op(node)
        raise NotationSyntaxError("expression does not apply an operation",
                                  getattr(node, "pos", 0))

    def slice_op(self, node: _Slice) -> str:
        if self.base_kind(node.base) != Kind.STR:
            raise TaskTypeError("slice base must be a string")
        start, stop, step = node.start, node.stop, node.step
        if step is None:
            if start is None and stop is not None:
                return "slice_prefix"
            if start is not None and stop is None:
                return "slice_suffix"
            if start is not None and stop is not None:
                return "slice_range"
            raise NotationSyntaxError("empty slice [:] is not an operation",
                                      node.pos)
        if start is not None or stop is not None:
            raise NotationSyntaxError(
                "a stepped slice may not also bound start or stop", node.pos)
        if isinstance(step, _Int) and step.value == -1:
            return "reverse"
        return "slice_stride"

    def lower_op(self, node) -> StepRef:
        op_id = self.op_for(node)
        spec = OPS[op_id]
        if isinstance(node, _Bin):
            operands = (node.left, node.right)
        elif isinstance(node, _Method):
            operands = (node.receiver, *node.args)
        elif isinstance(node, _Func):
            operands = (node.arg,)
        elif isinstance(node, _Subscript):
            operands = (node.base, node.index)
        elif isinstance(node, _Slice):
            present = [p for p in (node.start, node.stop, node.step)
                       if p is not None]
            if op_id == "reverse":
                present = []  # the -1 literal is part of the form
            operands = (node.base, *present)
        else:
            raise NotationSyntaxError("expression does not apply an "
                                      "operation", getattr(node, "pos", 0))
        args = [self.lower_arg(sub, want, getattr(sub, "pos", 0))
                for sub, want in zip(operands, spec.arg_kinds)]
        return self.emit(op_id, args)


def parse_code(text: str, params: Optional[Sequence[Param]] = None,
               task_id: Optional[str] = None, origin: Optional[str] = None) -> TaskProgram:
    """Parse one line of notation into a TaskProgram.

    When params is omitted, parameter kinds are inferred from how each name
    is used; a name whose use leaves its kind open is an error.  The
    returned program's code_text is the canonical rendering, which may
    differ from the input in spacing and quoting but never in structure.
    """
    tree = _Parser(_lex(text)).parse_program()
    declared = {p.name: p.kind for p in params} if params is not None else None
    low = _Lowerer(declared)
    low.lower_op(tree)
    steps = tuple(low.steps)
    if params is not None:
        out_params = tuple(params)
    else:
        out_params = tuple(Param(n, low.inferred[n]) for n in low.order)
    output_kind = typecheck(out_params, steps)
    return build_program(
        task_id if task_id is not None else None,
        out_params, steps,
        origin=origin if origin else
        ("atomic" if len(steps) == 1 else "composite"))


# ------------------------------------------------------------- rendering

_ESCAPE_MAP = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t",
               "\r": "\\r", "\v": "\\v", "\f": "\\f"}


def quote_str(value: str) -> str:
    """Canonical double-quoted literal; non-ASCII stays literal."""
    out = ['"']
    for ch in value:
        if ch in _ESCAPE_MAP:
            out.append(_ESCAPE_MAP[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def render_code(params: Sequence[Param], steps: Sequence[Step]) -> str:
    """Render steps to the canonical one-line code text."""

    def is_binary(arg: Arg) -> bool:
        return (isinstance(arg, StepRef)
                and OPS[steps[arg.index].op_id].form == "binary")

    def arg_text(arg: Arg, parens_if_binary: bool) -> str:
        if isinstance(arg, ParamRef):
            return arg.name
        if isinstance(arg, LitInt):
            return str(arg.value)
        if isinstance(arg, LitStr):
            return quote_str(arg.value)
        text = expr_text(arg.index)
        if parens_if_binary and is_binary(arg):
            return f"({text})"
        return text

    def slice_part(value, args: list[Arg]) -> str:
        if value is None:
            return ""
        if value == "arg":
            return arg_text(args.pop(0), False)
        return str(value)  # fixed literal, e.g. -1

    def expr_text(index: int) -> str:
        step = steps[index]
        spec = OPS[step.op_id]
        args = step.args
        if spec.form == "binary":
            left = arg_text(args[0], True)
            right = arg_text(args[1], True)
            return f"{left} {spec.symbol} {right}"
        if spec.form == "method":
            recv = arg_text(args[0], True)
            rest = ", ".join(arg_text(a, False) for a in args[1:])
            return f"{recv}.{spec.symbol}({rest})"
        if spec.form == "func":
            return f"{spec.symbol}({arg_text(args[0], False)})"
        if spec.form == "subscript":
            return f"{arg_text(args[0], True)}[{arg_text(args[1], False)}]"
        # slice
        base = arg_text(args[0], True)
        rest = list(args[1:])
        ss = spec.slice_spec
        start = slice_part(ss.start, rest)
        stop = slice_part(ss.stop, rest)
        if ss.step is None:
            return f"{base}[{start}:{stop}]"
        step_text = slice_part(ss.step, rest)
        return f"{base}[{start}:{stop}:{step_text}]"

    return "ans = " + expr_text(len(steps) - 1)


def build_program(task_id: Optional[str], params: Sequence[Param],
                  steps: Sequence[Step], origin: str = "atomic") -> TaskProgram:
    """Typecheck, render, and freeze a program.

    This is the only sanctioned constructor: it guarantees code_text is
    canonical and output_kind agrees with the typechecker.  depth is the
    operation count.
    """
    for p in params:
        if p.name in RESERVED_NAMES or not _NAME_RE.fullmatch(p.name):
            raise TaskTypeError(f"bad param name {p.name!r}")
    params = tuple(params)
    steps = tuple(steps)
    output_kind = typecheck(params, steps)
    code_text = render_code(params, steps)
    program = TaskProgram(
        task_id="", params=params, steps=steps, output_kind=output_kind,
        code_text=code_text, origin=origin, depth=len(steps))
    if task_id is None:
        task_id = f"task-{canonical_hash(program)[:12]}"
    return TaskProgram(
        task_id=task_id, params=params, steps=steps, output_kind=output_kind,
        code_text=code_text, origin=origin, depth=len(steps))
