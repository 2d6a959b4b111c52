"""BPE tokenization and the token-level dataset analyses.

Two tokenizer schemes cover the three studied model families:

  byte-bpe  GPT-style: a regex pre-tokenizer splits text into pre-tokens,
            each pre-token's UTF-8 bytes map into a 256-character byte
            alphabet, and merges apply in rank order.
  sp-bpe    SentencePiece-style: spaces become the low line character
            (U+2581), optionally a dummy prefix is prepended, characters
            are merge units, and characters outside the vocabulary fall
            back to <0xNN> byte pieces.

Tokenizer definitions load from gzipped JSON data files bundled with the
package (see scripts/fetch_tokenizers.py for their provenance).  The
analyses at the bottom measure character-per-token ratios, the effect of
inserting spaces between characters, and per-character encoding.
"""

from __future__ import annotations

import dataclasses
import functools
import gzip
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import regex as _regex

BUNDLED_TOKENIZERS = ("llama-3.1-8b", "gemma-2-9b", "mistral-7b-v0.3")

_SP_SPACE = "▁"  # the SentencePiece visible-space character


@dataclass(frozen=True)
class TokenizerModel:
    name: str
    scheme: str  # "byte-bpe" | "sp-bpe"
    vocab: dict[str, int]
    merge_ranks: dict[tuple[str, str], int]
    pre_tokenizer_regex: Optional[str] = None
    ignore_merges: bool = False   # byte-bpe: whole pre-token vocab hits win
    dummy_prefix: bool = False    # sp-bpe: prepend a space before encoding
    byte_fallback: bool = False   # sp-bpe: unknown chars become <0xNN>

    def __post_init__(self):
        if self.scheme not in ("byte-bpe", "sp-bpe"):
            raise ValueError(f"unknown scheme {self.scheme}")


@functools.lru_cache(maxsize=8)
def _bytes_to_unicode() -> dict[int, str]:
    """The GPT-2 byte alphabet: every byte gets a printable character."""
    bs = (list(range(ord("!"), ord("~") + 1))
          + list(range(ord("¡"), ord("¬") + 1))
          + list(range(ord("®"), ord("ÿ") + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


@functools.lru_cache(maxsize=8)
def _unicode_to_bytes() -> dict[str, int]:
    return {v: k for k, v in _bytes_to_unicode().items()}


def load_tokenizer(source: Union[str, Path]) -> TokenizerModel:
    """Load a bundled tokenizer by name, or any compatible .json.gz path."""
    if isinstance(source, str) and source in BUNDLED_TOKENIZERS:
        blob = (resources.files("stringsmith") / "data" / "tokenizers"
                / f"{source}.json.gz").read_bytes()
    else:
        blob = Path(source).read_bytes()
    doc = json.loads(gzip.decompress(blob).decode("utf-8"))
    merges = {}
    for rank, pair in enumerate(doc["merges"]):
        left, right = pair.split(" ", 1)
        merges[(left, right)] = rank
    return TokenizerModel(
        name=doc["name"], scheme=doc["scheme"], vocab=doc["vocab"],
        merge_ranks=merges,
        pre_tokenizer_regex=doc.get("pre_tokenizer_regex"),
        ignore_merges=bool(doc.get("ignore_merges")),
        dummy_prefix=bool(doc.get("dummy_prefix")),
        byte_fallback=bool(doc.get("byte_fallback")))


def _apply_merges(units: list[str],
                  ranks: dict[tuple[str, str], int]) -> list[str]:
    """Merge adjacent unit pairs in rank order until none apply."""
    while len(units) >= 2:
        best_rank = None
        best = None
        for pair in zip(units, units[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best = pair
        if best is None:
            break
        first, second = best
        merged = []
        i = 0
        while i < len(units):
            if (i < len(units) - 1 and units[i] == first
                    and units[i + 1] == second):
                merged.append(first + second)
                i += 2
            else:
                merged.append(units[i])
                i += 1
        units = merged
    return units


@functools.lru_cache(maxsize=32)
def _compiled(pattern: str):
    return _regex.compile(pattern)


def _encode_byte_bpe(model: TokenizerModel, text: str) -> list[str]:
    table = _bytes_to_unicode()
    pieces: list[str] = []
    for match in _compiled(model.pre_tokenizer_regex).finditer(text):
        word = "".join(table[b] for b in match.group().encode("utf-8"))
        if model.ignore_merges and word in model.vocab:
            pieces.append(word)
            continue
        pieces.extend(_apply_merges(list(word), model.merge_ranks))
    return pieces


def _encode_sp_bpe(model: TokenizerModel, text: str) -> list[str]:
    text = text.replace(" ", _SP_SPACE)
    if model.dummy_prefix:
        text = _SP_SPACE + text
    units: list[str] = []
    for ch in text:
        if ch in model.vocab:
            units.append(ch)
        elif model.byte_fallback:
            units.extend(f"<0x{b:02X}>" for b in ch.encode("utf-8"))
        else:
            raise ValueError(f"character {ch!r} not encodable by "
                             f"{model.name}")
    return _apply_merges(units, model.merge_ranks)


def encode_pieces(model: TokenizerModel, text: str) -> list[str]:
    if text == "":
        return []
    if model.scheme == "byte-bpe":
        return _encode_byte_bpe(model, text)
    return _encode_sp_bpe(model, text)


def tokenize(model: TokenizerModel, text: str) -> list[int]:
    return [model.vocab[p] for p in encode_pieces(model, text)]


# reverse vocabs, keyed by object id; the model reference keeps ids stable
_REV_VOCABS: dict[int, tuple[TokenizerModel, dict[int, str]]] = {}


def _id_to_piece(model: TokenizerModel) -> dict[int, str]:
    entry = _REV_VOCABS.get(id(model))
    if entry is None or entry[0] is not model:
        entry = (model, {v: k for k, v in model.vocab.items()})
        _REV_VOCABS[id(model)] = entry
    return entry[1]


def decode(model: TokenizerModel, ids: Sequence[int]) -> str:
    """Invert tokenize.  decode(tokenize(text)) == text for any text whose
    characters the model can represent (always true with byte fallback)."""
    rev = _id_to_piece(model)
    pieces = [rev[i] for i in ids]
    if model.scheme == "byte-bpe":
        back = _unicode_to_bytes()
        data = bytes(back[ch] for piece in pieces for ch in piece)
        return data.decode("utf-8", errors="replace")
    out: list[bytes] = []
    for piece in pieces:
        if len(piece) == 6 and piece.startswith("<0x") and piece.endswith(">"):
            out.append(bytes([int(piece[3:5], 16)]))
        else:
            out.append(piece.replace(_SP_SPACE, " ").encode("utf-8"))
    text = b"".join(out).decode("utf-8", errors="replace")
    if model.dummy_prefix and text.startswith(" "):
        text = text[1:]
    return text


# ------------------------------------------------------------- analyses

def char_token_ratio(model: TokenizerModel,
                     strings: Iterable[str]) -> float:
    """Corpus-level characters per token: total chars / total tokens."""
    chars = 0
    tokens = 0
    for s in strings:
        chars += len(s)
        tokens += len(encode_pieces(model, s))
    if tokens == 0:
        raise ValueError("no tokens produced; empty input?")
    return chars / tokens


def whitespace_transform(question: str, operand: str) -> str:
    """Rewrite a question so the operand appears with single spaces between
    its characters; the task's gold answer is defined on the original
    operand and does not change."""
    spaced = " ".join(operand)
    return question.replace(operand, spaced)


def spaced_copy(text: str) -> str:
    """Single spaces between consecutive characters: length 2n-1 for n>0."""
    return " ".join(text)


def per_char_encoding(model: TokenizerModel, text: str) -> list[int]:
    """Encode each character separately and concatenate the ids.

    Only the first character starts the text, so for dummy-prefix models
    the prefix applies to it alone; re-applying it to every character
    would smuggle spaces into the decoded text.
    """
    mid = model
    if model.scheme == "sp-bpe" and model.dummy_prefix:
        mid = dataclasses.replace(model, dummy_prefix=False)
    out: list[int] = []
    for i, ch in enumerate(text):
        out.extend(tokenize(model if i == 0 else mid, ch))
    return out


_SPACING_NOTE = (" (In the quoted strings, single spaces separate what were"
                 " consecutive characters.)")


def transform_sample(sample):
    """Whitespace-segmented copy of a QA sample.

    Every quoted string operand in the question gets single spaces between
    its characters; the gold answer stays defined on the originals. The
    spaced forms are recorded next to the originals, so the result is for
    prompting only, not for oracle re-verification.
    """
    from .dataset import QASample  # local import keeps this module standalone

    operands: set[str] = set()
    for value in sample.bindings.values():
        if isinstance(value, str):
            operands.add(value)
        elif isinstance(value, list):
            operands.update(v for v in value if isinstance(v, str))

    question = sample.question
    for operand in sorted(operands, key=len, reverse=True):
        if operand:
            question = question.replace(f'"{operand}"',
                                        f'"{spaced_copy(operand)}"')

    bindings = dict(sample.bindings)
    for name, value in sample.bindings.items():
        if isinstance(value, str):
            bindings[f"{name}__spaced"] = spaced_copy(value)
        elif isinstance(value, list):
            bindings[f"{name}__spaced"] = [spaced_copy(v) for v in value]

    return QASample(
        sample_id=sample.sample_id + ":ws",
        dataset_kind=sample.dataset_kind,
        task_id=sample.task_id,
        template_id=sample.template_id,
        question=question + _SPACING_NOTE,
        bindings=bindings,
        answer=sample.answer,
        answer_kind=sample.answer_kind)
