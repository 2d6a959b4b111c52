import gzip
import json
import random
from pathlib import Path

import pytest

from stringsmith.samplers import sample_multilingual, sample_random
from stringsmith.tokenization import (BUNDLED_TOKENIZERS, TokenizerModel,
                                      char_token_ratio, decode,
                                      encode_pieces, load_tokenizer,
                                      per_char_encoding, spaced_copy,
                                      tokenize, transform_sample,
                                      whitespace_transform)

PROBES = json.loads(
    (Path(__file__).parent / "data" / "tokenizer_probes.json").read_text())

MODELS = {name: load_tokenizer(name) for name in BUNDLED_TOKENIZERS}


def test_bundled_set():
    assert BUNDLED_TOKENIZERS == ("llama-3.1-8b", "gemma-2-9b",
                                  "mistral-7b-v0.3")
    assert MODELS["llama-3.1-8b"].scheme == "byte-bpe"
    assert MODELS["gemma-2-9b"].scheme == "sp-bpe"
    assert MODELS["mistral-7b-v0.3"].scheme == "sp-bpe"


@pytest.mark.parametrize("name", BUNDLED_TOKENIZERS)
def test_probe_ids_match_reference_implementations(name):
    """Frozen id sequences were produced by the upstream tokenizers."""
    model = MODELS[name]
    for probe in PROBES[name]:
        assert tokenize(model, probe["text"]) == probe["ids"], probe["text"]


@pytest.mark.parametrize("name", BUNDLED_TOKENIZERS)
def test_decode_inverts_tokenize(name, corpus):
    model = MODELS[name]
    texts = [sample_multilingual(corpus, s) for s in range(25)]
    texts += [sample_random(s) for s in range(25)]
    texts += ["", "a", "  leading", "trailing  ", "tab\there", "émoji 🙂"]
    for text in texts:
        assert decode(model, tokenize(model, text)) == text


def test_empty_text_has_no_pieces():
    for model in MODELS.values():
        assert encode_pieces(model, "") == []
        assert tokenize(model, "") == []


def test_ratio_is_sum_form():
    model = MODELS["llama-3.1-8b"]
    strings = ["hello there", "general kenobi"]
    r1 = char_token_ratio(model, strings)
    # duplicating the corpus keeps a totals-quotient invariant
    assert char_token_ratio(model, strings * 3) == pytest.approx(r1)
    chars = sum(len(s) for s in strings)
    toks = sum(len(encode_pieces(model, s)) for s in strings)
    assert r1 == pytest.approx(chars / toks)
    with pytest.raises(ValueError):
        char_token_ratio(model, [])


def test_ratio_forced_arithmetic():
    # a synthetic model with no merges tokenizes character by character
    vocab = {c: i for i, c in enumerate("ab" + "▁")}
    model = TokenizerModel(name="unit", scheme="sp-bpe", vocab=vocab,
                           merge_ranks={})
    assert char_token_ratio(model, ["aaaa"]) == pytest.approx(1.0)
    merged = TokenizerModel(name="unit2", scheme="sp-bpe",
                            vocab={**vocab, "aa": 9, "aaaa": 10},
                            merge_ranks={("a", "a"): 0, ("aa", "aa"): 1})
    assert char_token_ratio(merged, ["aaaa"]) == pytest.approx(4.0)


def test_population_ratio_ordering(corpus):
    """Multilingual text packs more characters per token than digests or
    printable noise, for every bundled tokenizer."""
    rng = random.Random(31)
    multi = [sample_multilingual(corpus, rng) for _ in range(120)]
    from stringsmith.samplers import sample_hash
    hashes = [sample_hash(corpus, rng)[0] for _ in range(120)]
    noise = [sample_random(rng) for _ in range(120)]
    for name, model in MODELS.items():
        m = char_token_ratio(model, multi)
        h = char_token_ratio(model, hashes)
        r = char_token_ratio(model, noise)
        assert m > h, (name, m, h)
        assert m > r, (name, m, r)


# ------------------------------------------------------- whitespace study

def test_spaced_copy_length():
    assert spaced_copy("abc") == "a b c"
    assert spaced_copy("a") == "a"
    assert spaced_copy("") == ""
    for n in (1, 5, 40):
        assert len(spaced_copy("x" * n)) == 2 * n - 1


def test_whitespace_transform_rewrites_operand():
    q = 'Count "abc" in "zabcz".'
    assert whitespace_transform(q, "abc") == 'Count "a b c" in "za b cz".'


def test_transform_sample(mini_multilingual):
    sample = next(s for s in mini_multilingual
                  if any(isinstance(v, str) and len(v) > 3
                         for v in s.bindings.values()))
    ws = transform_sample(sample)
    assert ws.sample_id == sample.sample_id + ":ws"
    assert ws.answer == sample.answer            # gold is untouched
    assert ws.answer_kind is sample.answer_kind
    assert ws.question.endswith("characters.)")
    for name, value in sample.bindings.items():
        if isinstance(value, str):
            assert ws.bindings[name] == value
            spaced = ws.bindings[f"{name}__spaced"]
            assert spaced == spaced_copy(value)
            if value:
                assert len(spaced) == 2 * len(value) - 1
                assert f'"{value}"' not in ws.question or value in spaced
                assert f'"{spaced}"' in ws.question


def test_transform_sample_respects_longest_first():
    # one operand being a substring of another must not double-space it
    from stringsmith.dataset import QASample
    from stringsmith.values import Kind
    sample = QASample(sample_id="random:concat:t0:s0",
                      dataset_kind="random", task_id="concat",
                      template_id=0,
                      question='Concat string "abcd" and "bc".',
                      bindings={"a": "abcd", "b": "bc"},
                      answer="abcdbc", answer_kind=Kind.STR)
    ws = transform_sample(sample)
    assert '"a b c d"' in ws.question
    assert '"b c"' in ws.question


# -------------------------------------------------- per-character encoding

@pytest.mark.parametrize("name", BUNDLED_TOKENIZERS)
def test_per_char_encoding_decodes_and_never_shrinks(name, corpus):
    model = MODELS[name]
    rng = random.Random(7)
    texts = [sample_multilingual(corpus, rng) for _ in range(20)]
    texts += [sample_random(rng) for _ in range(20)]
    for text in texts:
        ids = per_char_encoding(model, text)
        assert decode(model, ids) == text
        assert len(ids) >= len(tokenize(model, text))
        assert len(ids) >= len(text)


def test_loading_custom_path(tmp_path):
    doc = {"name": "tiny", "scheme": "sp-bpe",
           "vocab": {"a": 0, "b": 1, "▁": 2, "ab": 3},
           "merges": ["a b"]}
    path = tmp_path / "tiny.json.gz"
    path.write_bytes(gzip.compress(json.dumps(doc).encode()))
    model = load_tokenizer(path)
    assert encode_pieces(model, "ab") == ["ab"]
    assert tokenize(model, "a b") == [0, 2, 1]


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        TokenizerModel(name="x", scheme="wordpiece", vocab={},
                       merge_ranks={})
