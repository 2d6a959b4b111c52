"""String populations and parameter binding.

Three populations feed the datasets: sentences from a multilingual corpus
file, hex digests of those sentences under ten hash functions, and random
strings over the 100-character printable set.  On top of the populations,
bindings_for fills every parameter of a task program according to its
sampling role (recorded in the atomic catalog), evaluating the chain
step by step so that derived parameters (substrings, indices, bounds) are
drawn against the actual operand value they apply to.

Everything is a pure function of its inputs and the supplied rng/seed.
"""

from __future__ import annotations

import hashlib
import random
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .catalog import AtomicOp, atomic_catalog
from .lang import OPS, Kind, ParamRef, StepRef, TaskProgram
from .values import DomainError, Value

# ASCII 0x20-0x7E plus tab, newline, carriage return, vertical tab and
# form feed: 100 characters.  string.printable is exactly this set.
PRINTABLE = string.printable
assert len(PRINTABLE) == 100 and len(set(PRINTABLE)) == 100

_SHORT_ALPHABET = string.ascii_letters + string.digits + ".,;:-_/+*#!?"


@dataclass(frozen=True)
class HashSpec:
    name: str
    algo: str        # hashlib constructor name
    hex_length: int

    @property
    def digest_bytes(self) -> int:
        return self.hex_length // 2


# The ten hash functions with their hex digest lengths.
HASH_SPECS: tuple[HashSpec, ...] = (
    HashSpec("MD5", "md5", 32),
    HashSpec("SHA-1", "sha1", 40),
    HashSpec("SHA-256", "sha256", 64),
    HashSpec("BLAKE2b", "blake2b", 128),
    HashSpec("SHA3-224", "sha3_224", 56),
    HashSpec("SHAKE-128", "shake_128", 32),
    HashSpec("BLAKE2s", "blake2s", 64),
    HashSpec("SHA3-512", "sha3_512", 128),
    HashSpec("SHAKE-256", "shake_256", 64),
    HashSpec("SHA-384", "sha384", 96),
)


def compute_digest(spec: HashSpec, text: str) -> str:
    """Lowercase hex digest of the text's UTF-8 bytes."""
    h = hashlib.new(spec.algo, text.encode("utf-8"))
    if spec.algo.startswith("shake_"):
        return h.hexdigest(spec.digest_bytes)
    return h.hexdigest()


@dataclass(frozen=True)
class Corpus:
    """A sentence corpus: one sentence per line, UTF-8.

    Lines may carry an optional language tag before a single tab; the tag
    is kept for reporting and never enters the sampled strings.
    """

    source: str
    sentences: tuple[str, ...]
    languages: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"corpus {self.source} has no sentences")

    @property
    def count(self) -> int:
        return len(self.sentences)


def load_corpus(path: Union[str, Path]) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    return _parse_corpus(str(path), text)


def bundled_corpus() -> Corpus:
    """The multilingual sample corpus shipped with the package."""
    text = (resources.files("stringsmith") / "data"
            / "multilingual_sample.txt").read_text(encoding="utf-8")
    return _parse_corpus("bundled:multilingual_sample", text)


def _parse_corpus(source: str, text: str) -> Corpus:
    sentences = []
    tags = []
    for line in text.splitlines():
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" in line:
            tag, sentence = line.split("\t", 1)
        else:
            tag, sentence = "", line
        if not sentence.strip():
            continue
        sentences.append(sentence)
        tags.append(tag)
    languages = tuple(tags) if any(tags) else None
    return Corpus(source, tuple(sentences), languages)


def _rng(seed: Union[int, random.Random]) -> random.Random:
    return seed if isinstance(seed, random.Random) else random.Random(seed)


def sample_multilingual(corpus: Corpus, seed: Union[int, random.Random]) -> str:
    return _rng(seed).choice(corpus.sentences)


def sample_hash(corpus: Corpus,
                seed: Union[int, random.Random]) -> tuple[str, HashSpec]:
    rng = _rng(seed)
    sentence = rng.choice(corpus.sentences)
    spec = rng.choice(HASH_SPECS)
    return compute_digest(spec, sentence), spec


def sample_random(seed: Union[int, random.Random],
                  len_range: tuple[int, int] = (20, 60)) -> str:
    lo, hi = len_range
    if not 1 <= lo <= hi:
        raise ValueError(f"bad length range {len_range}")
    rng = _rng(seed)
    n = rng.randint(lo, hi)
    return "".join(rng.choice(PRINTABLE) for _ in range(n))


# ----------------------------------------------------- role-based binding

def _short_random(rng: random.Random, lo: int = 1, hi: int = 4) -> str:
    n = rng.randint(lo, hi)
    return "".join(rng.choice(_SHORT_ALPHABET) for _ in range(n))


def _fragment(rng: random.Random, text: str, max_len: int) -> str:
    """A random nonempty slice of text, up to max_len characters."""
    n = rng.randint(1, min(max_len, len(text)))
    start = rng.randint(0, len(text) - n)
    return text[start:start + n]


def _filtered(text: str, keep: Callable[[str], bool],
              fallback_alphabet: str, rng: random.Random) -> str:
    kept = "".join(ch for ch in text if keep(ch))
    if kept:
        return kept
    return "".join(rng.choice(fallback_alphabet)
                   for _ in range(rng.randint(3, 8)))


def sample_param(role: str, kind: Kind, context: Optional[Value],
                 seed: Union[int, random.Random],
                 draw_operand: Optional[Callable[[], str]] = None,
                 start_value: Optional[int] = None) -> Value:
    """Draw one parameter value for a sampling role.

    context is the value of the operand the role derives from (None for
    independent roles).  draw_operand supplies population strings for the
    operand-flavored roles.  start_value carries an already-bound start
    bound so stop bounds can stay ordered after it.
    """
    rng = _rng(seed)
    draw = draw_operand if draw_operand is not None else (
        lambda: _short_random(rng, 8, 16))

    if role in ("operand", "str", ""):
        return draw()
    if role == "tabbed_operand":
        text = draw()
        return "".join("\t" if ch == " " and rng.random() < 0.4 else ch
                       for ch in text)
    if role == "ws_padded_operand":
        pad = " \t\n"
        left = "".join(rng.choice(pad) for _ in range(rng.randint(0, 3)))
        right = "".join(rng.choice(pad) for _ in range(rng.randint(1, 3)))
        return left + draw() + right
    if role == "maybe_ws":
        if rng.random() < 0.35:
            return "".join(rng.choice(" \t\n\r\v\f")
                           for _ in range(rng.randint(1, 5)))
        return draw()
    if role in ("maybe_upper", "maybe_lower"):
        text = draw()
        pick = rng.random()
        if pick < 1 / 3:
            return text.upper()
        if pick < 2 / 3:
            return text.lower()
        return text
    if role == "maybe_digit":
        if rng.random() < 0.35:
            return "".join(rng.choice(string.digits)
                           for _ in range(rng.randint(1, 12)))
        return draw()
    if role == "maybe_alpha":
        if rng.random() < 0.35:
            return _filtered(draw(), str.isalpha, string.ascii_letters, rng)
        return draw()
    if role == "maybe_alnum":
        if rng.random() < 0.35:
            return _filtered(draw(), str.isalnum,
                             string.ascii_letters + string.digits, rng)
        return draw()
    if role == "maybe_title":
        text = draw()
        return text.title() if rng.random() < 0.35 else text
    if role == "substring":
        if context and rng.random() < 0.5:
            return _fragment(rng, context, 6)
        return _short_random(rng)
    if role == "prefix":
        if context and rng.random() < 0.5:
            return context[:rng.randint(1, min(8, len(context)))]
        return _short_random(rng)
    if role == "suffix":
        if context and rng.random() < 0.5:
            return context[-rng.randint(1, min(8, len(context))):]
        return _short_random(rng)
    if role == "edge_chars":
        if context and rng.random() < 0.7:
            edges = context[:3] + context[-3:]
            chars = sorted(set(edges))
            rng.shuffle(chars)
            return "".join(chars[:rng.randint(1, min(3, len(chars)))])
        return _short_random(rng, 1, 2)
    if role == "equal_candidate":
        if context is not None and rng.random() < 0.5:
            return context
        return draw()
    if role == "replacement":
        return _short_random(rng)
    if role == "separator":
        return rng.choice(("", " ", ", ", "-", "_", "; ", ":", " | ", "/"))
    if role == "splitter":
        if context and rng.random() < 0.7:
            return rng.choice(context)
        return rng.choice(PRINTABLE[:94])  # visible chars only
    if role == "str_list":
        text = draw()
        words = text.split()
        if len(words) >= 2:
            k = rng.randint(2, min(5, len(words)))
            start = rng.randint(0, len(words) - k)
            return words[start:start + k]
        k = rng.randint(2, 4)
        size = max(1, len(text) // k)
        return [text[i * size:(i + 1) * size] or text[:1] for i in range(k)]

    # integer roles: all need the operand they index into, except the
    # context-free stride and repeat counts
    if role == "stride":
        return rng.randint(2, 5)
    if role == "repeat":
        return rng.randint(2, 5)
    n = len(context) if isinstance(context, str) else 0
    if role == "index":
        if n == 0:
            raise DomainError("cannot index an empty operand")
        return rng.randint(0, n - 1)
    if role == "start_bound":
        return rng.randint(0, max(n - 1, 0))
    if role == "stop_bound":
        lo = start_value + 1 if start_value is not None else 1
        hi = max(n, lo)
        return rng.randint(min(lo, hi), hi)
    if role == "width":
        return rng.randint(n + 1, n + 10)
    raise ValueError(f"unknown sampling role {role!r}")


def bindings_for(program: TaskProgram, seed: Union[int, random.Random],
                 draw_operand: Callable[[], str],
                 catalog: Optional[Sequence[AtomicOp]] = None
                 ) -> dict[str, Value]:
    """Bind every program param by role, walking the chain step by step.

    Steps are partially evaluated as their inputs become bound, so derived
    roles always see the true operand value, including intermediate
    results.  Raises DomainError when an intermediate evaluation leaves a
    role's domain empty (caller drops the sample).
    """
    by_op = {op.op_id: op for op in (catalog or atomic_catalog())}
    rng = _rng(seed)
    bindings: dict[str, Value] = {}
    results: list[Value] = []

    def resolved(arg) -> Value:
        if isinstance(arg, StepRef):
            return results[arg.index]
        if isinstance(arg, ParamRef):
            return bindings[arg.name]
        return arg.value

    for step in program.steps:
        metas = by_op[step.op_id].params
        # independent params first, then the ones deriving from an operand
        order = sorted(range(len(step.args)),
                       key=lambda i: (metas[i].of is not None, i))
        start_value: Optional[int] = None
        for i in order:
            arg = step.args[i]
            if not isinstance(arg, ParamRef) or arg.name in bindings:
                continue
            meta = metas[i]
            context = resolved(step.args[meta.of]) if meta.of is not None \
                else None
            value = sample_param(meta.role, meta.kind, context, rng,
                                 draw_operand, start_value)
            if meta.role == "start_bound":
                start_value = value
            bindings[arg.name] = value
        spec = OPS[step.op_id]
        results.append(spec.fn(*(resolved(a) for a in step.args)))
    return bindings
