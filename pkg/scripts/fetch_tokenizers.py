#!/usr/bin/env python3
"""Fetch and convert the three studied tokenizers into bundled data files.

The package ships gzipped JSON tokenizer definitions under
src/stringsmith/data/tokenizers/.  This script rebuilds them from their
upstream definitions:

  llama-3.1-8b      byte-level BPE; vocab/merges/pre-tokenizer regex from a
                    tokenizer.json as published for the model (also packaged
                    on npm as @lenml/tokenizer-llama3_1).
  gemma-2-9b        SentencePiece-style BPE with byte fallback; from
                    tokenizer.json (npm: @lenml/tokenizer-gemma).
  mistral-7b-v0.3   SentencePiece-style BPE with byte fallback and a dummy
                    space prefix; vocab/merges as dumped from the
                    mistral-tokenizer-ts npm package (v3 tokenizer model).

Usage:
    python3 scripts/fetch_tokenizers.py --llama-json PATH --gemma-json PATH \
        --mistral-vocab PATH --mistral-merges PATH [--out DIR]

When an input path is omitted the script tries `npm pack <package>` in a
scratch directory and reads the file out of the tarball, which needs
network (or mirror) access.  Conversion itself is offline.
"""

from __future__ import annotations

import argparse
import gzip
import json
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "src" / "stringsmith" \
    / "data" / "tokenizers"

NPM_SOURCES = {
    "llama": ("@lenml/tokenizer-llama3_1", "package/models/tokenizer.json"),
    "gemma": ("@lenml/tokenizer-gemma", "package/models/tokenizer.json"),
}


def npm_fetch(package: str, member: str, scratch: Path) -> Path:
    subprocess.run(["npm", "pack", package, "--pack-destination",
                    str(scratch)], check=True, capture_output=True)
    tarball = next(scratch.glob("*.tgz"))
    with tarfile.open(tarball) as tf:
        tf.extract(member, scratch)
    return scratch / member

def normalize_merges(raw) -> list[str]:
    out = []
    for entry in raw:
        if isinstance(entry, str):
            out.append(entry)
        else:
            left, right = entry
            out.append(f"{left} {right}")
    return out


def convert_llama(tokenizer_json: Path) -> dict:
    doc = json.loads(tokenizer_json.read_text(encoding="utf-8"))
    model = doc["model"]
    assert model["type"] == "BPE"
    pre = doc["pre_tokenizer"]
    pattern = None
    for sub in pre.get("pretokenizers", [pre]):
        if sub["type"] == "Split":
            pattern = sub["pattern"]["Regex"]
        if sub["type"] == "ByteLevel":
            # the byte alphabet is applied by our engine; the regex must
            # carry the full split so ByteLevel may not re-split
            assert not sub.get("use_regex", False), "unsupported ByteLevel"
    assert pattern, "no Split pre-tokenizer found"
    return {
        "name": "llama-3.1-8b",
        "scheme": "byte-bpe",
        "pre_tokenizer_regex": pattern,
        "ignore_merges": bool(model.get("ignore_merges")),
        "vocab": model["vocab"],
        "merges": normalize_merges(model["merges"]),
    }


def convert_gemma(tokenizer_json: Path) -> dict:
    doc = json.loads(tokenizer_json.read_text(encoding="utf-8"))
    model = doc["model"]
    assert model["type"] == "BPE"
    assert model.get("byte_fallback"), "expected byte fallback"
    norm = doc.get("normalizer") or {}
    kinds = [n["type"] for n in norm.get("normalizers", [norm])]
    assert kinds in (["Replace"], []), f"unexpected normalizers {kinds}"
    assert doc.get("pre_tokenizer") is None, "unexpected pre-tokenizer"
    return {
        "name": "gemma-2-9b",
        "scheme": "sp-bpe",
        "dummy_prefix": False,
        "byte_fallback": True,
        "vocab": model["vocab"],
        "merges": normalize_merges(model["merges"]),
    }


def convert_mistral(vocab_json: Path, merges_json: Path) -> dict:
    pieces = json.loads(vocab_json.read_text(encoding="utf-8"))
    merges = json.loads(merges_json.read_text(encoding="utf-8"))
    vocab = {piece: i for i, piece in enumerate(pieces)}
    assert len(vocab) == len(pieces), "duplicate pieces in vocab"
    assert "<0x00>" in vocab, "expected byte-fallback pieces"
    return {
        "name": "mistral-7b-v0.3",
        "scheme": "sp-bpe",
        "dummy_prefix": True,
        "byte_fallback": True,
        "vocab": vocab,
        "merges": merges,
    }


def write(doc: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{doc['name']}.json.gz"
    blob = json.dumps(doc, ensure_ascii=False, separators=(",", ":"),
                      sort_keys=True).encode("utf-8")
    # mtime pinned so rebuilding yields identical bytes
    with gzip.GzipFile(path, "wb", compresslevel=9, mtime=0) as fh:
        fh.write(blob)
    return path


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--llama-json", type=Path)
    ap.add_argument("--gemma-json", type=Path)
    ap.add_argument("--mistral-vocab", type=Path)
    ap.add_argument("--mistral-merges", type=Path)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as td:
        scratch = Path(td)
        llama = args.llama_json
        if llama is None:
            pkg, member = NPM_SOURCES["llama"]
            llama = npm_fetch(pkg, member, scratch / "llama")
        gemma = args.gemma_json
        if gemma is None:
            pkg, member = NPM_SOURCES["gemma"]
            gemma = npm_fetch(pkg, member, scratch / "gemma")
        if args.mistral_vocab is None or args.mistral_merges is None:
            print("mistral vocab/merges dumps are required (see "
                  "scripts/dump_mistral_tokenizer.mjs)", file=sys.stderr)
            return 2
        for doc in (convert_llama(llama), convert_gemma(gemma),
                    convert_mistral(args.mistral_vocab,
                                    args.mistral_merges)):
            path = write(doc, args.out)
            print(f"wrote {path} ({len(doc['vocab'])} pieces, "
                  f"{len(doc['merges'])} merges)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
