import json
import re

import pytest

from stringsmith.dataset import (DATASET_KINDS, MalformedLineError, QASample,
                                 SplitManifest, build_dataset, post_process,
                                 read_jsonl, split, verify_answers,
                                 write_jsonl)
from stringsmith.lang import Kind, eval_program
from stringsmith.values import canonicalize_answer

_ID_RE = re.compile(r"^(multilingual|hash|random):[a-z0-9_-]+:t[0-2]:s\d+$")


def test_build_is_deterministic(small_tasks):
    a = build_dataset("multilingual", tasks=small_tasks, n_per_template=2,
                      seed=5)
    b = build_dataset("multilingual", tasks=small_tasks, n_per_template=2,
                      seed=5)
    assert a.samples == b.samples
    assert a.report.as_dict() == b.report.as_dict()
    c = build_dataset("multilingual", tasks=small_tasks, n_per_template=2,
                      seed=6)
    assert c.samples != a.samples


def test_task_order_does_not_perturb_draws(small_tasks):
    fwd = build_dataset("random", tasks=small_tasks, n_per_template=1,
                        seed=9).samples
    rev = build_dataset("random", tasks=list(reversed(small_tasks)),
                        n_per_template=1, seed=9).samples
    assert {s.sample_id: s for s in fwd} == {s.sample_id: s for s in rev}


def test_sample_shape(mini_multilingual, small_tasks):
    by_id = {t.task_id: t for t in small_tasks}
    for s in mini_multilingual:
        assert _ID_RE.match(s.sample_id), s.sample_id
        assert s.dataset_kind == "multilingual"
        task = by_id[s.task_id]
        assert s.answer_kind is task.output_kind
        assert set(s.bindings) == {p.name for p in task.params}
        # gold answer is exactly what the oracle computes
        assert canonicalize_answer(
            eval_program(task, dict(s.bindings))) == s.answer


def test_question_embeds_operands(mini_multilingual):
    checked = 0
    for s in mini_multilingual:
        for value in s.bindings.values():
            if isinstance(value, str):
                assert f'"{value}"' in s.question
                checked += 1
    assert checked > 50


def test_all_kinds_build(small_tasks, corpus):
    for kind in DATASET_KINDS:
        result = build_dataset(kind, tasks=small_tasks[:8], corpus=corpus,
                               n_per_template=2, seed=1)
        assert result.samples
        assert all(s.dataset_kind == kind for s in result.samples)
    with pytest.raises(ValueError):
        build_dataset("klingon", tasks=small_tasks[:2])
    with pytest.raises(ValueError):
        build_dataset("random", tasks=small_tasks[:2], n_per_template=0)


def test_report_accounting(small_tasks):
    result = build_dataset("random", tasks=small_tasks, n_per_template=3,
                           seed=2)
    report = result.report
    assert report.emitted == len(result.samples)
    assert report.requested == 3 * 3 * len(small_tasks)
    short = report.requested - report.emitted
    assert short >= 0
    if short:
        assert report.dropped.get("retry_budget_exhausted")


def test_hash_operands_are_digests(small_tasks, corpus, tasks):
    # atomic concat takes two raw operands: both must look like hex digests
    concat = [t for t in tasks if t.task_id == "concat"]
    result = build_dataset("hash", tasks=concat, corpus=corpus,
                           n_per_template=4, seed=3)
    hexdigits = set("0123456789abcdef")
    for s in result.samples:
        for name in ("a", "b"):
            assert set(s.bindings[name]) <= hexdigits
            assert len(s.bindings[name]) in (32, 40, 56, 64, 96, 128)


def test_post_process_dedupes_and_reverifies(mini_multilingual, small_tasks):
    doubled = list(mini_multilingual) + [mini_multilingual[0]]
    cleaned = post_process(doubled, tasks=small_tasks)
    assert cleaned == list(mini_multilingual)
    # a corrupted answer is dropped, not repaired
    bad = QASample(**{**mini_multilingual[0].as_dict(),
                      "answer": "zzz-not-the-answer",
                      "answer_kind": mini_multilingual[0].answer_kind})
    assert post_process([bad], tasks=small_tasks) == []


def test_verify_answers(mini_multilingual, small_tasks):
    assert verify_answers(mini_multilingual, tasks=small_tasks) == 0
    bad = QASample(**{**mini_multilingual[0].as_dict(),
                      "answer": "zzz",
                      "answer_kind": mini_multilingual[0].answer_kind})
    assert verify_answers([bad] + list(mini_multilingual[1:]),
                          tasks=small_tasks) == 1


# ------------------------------------------------------------------ split

def test_split_ratio_and_coverage(mini_multilingual, small_tasks):
    manifest = split(mini_multilingual, ratio=0.20, seed=0)
    n = len(mini_multilingual)
    n_test = len(manifest.test_sample_ids)
    assert n_test + len(manifest.train_sample_ids) == n
    # every task is represented on the test side
    test_tasks = {sid.split(":")[1] for sid in manifest.test_sample_ids}
    assert test_tasks == {t.task_id for t in small_tasks
                          if any(s.task_id == t.task_id
                                 for s in mini_multilingual)}
    # disjoint, no duplicates
    assert not set(manifest.test_sample_ids) & set(manifest.train_sample_ids)
    assert len(set(manifest.test_sample_ids)) == n_test


def test_split_hits_target_when_tasks_allow(tasks, corpus):
    # plenty of samples per task: the forced-coverage floor stays under 20%
    sub = tasks[:20]
    samples = build_dataset("multilingual", tasks=sub, corpus=corpus,
                            n_per_template=4, seed=7).samples
    manifest = split(samples, ratio=0.20, seed=1)
    share = len(manifest.test_sample_ids) / len(samples)
    assert abs(share - 0.20) <= 0.01


def test_split_deterministic(mini_multilingual):
    a = split(mini_multilingual, seed=3)
    b = split(mini_multilingual, seed=3)
    assert a == b
    assert a != split(mini_multilingual, seed=4)


def test_split_rejects_bad_input(mini_multilingual):
    with pytest.raises(ValueError):
        split([])
    with pytest.raises(ValueError):
        split(mini_multilingual, ratio=0.0)
    with pytest.raises(ValueError):
        split(mini_multilingual, ratio=1.0)


def test_split_manifest_round_trip(mini_multilingual):
    manifest = split(mini_multilingual)
    assert SplitManifest.from_dict(manifest.as_dict()) == manifest


# ------------------------------------------------------------------- jsonl

def test_jsonl_round_trip(tmp_path, mini_random):
    path = tmp_path / "d.jsonl"
    write_jsonl(mini_random, path)
    assert read_jsonl(path) == list(mini_random)
    # answers with control characters survive the trip
    assert any("\n" in s.answer or "\t" in s.answer for s in mini_random)


def test_read_jsonl_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json at all\n", encoding="utf-8")
    with pytest.raises(MalformedLineError) as err:
        read_jsonl(path)
    assert err.value.line_no == 1

    path.write_text(json.dumps({"sample_id": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(MalformedLineError):
        read_jsonl(path)

    record = {"sample_id": "a", "dataset_kind": "random", "task_id": "t",
              "template_id": 0, "question": "q", "bindings": {},
              "answer": "1", "answer_kind": "no_such_kind"}
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(MalformedLineError):
        read_jsonl(path)


def test_blank_lines_are_skipped(tmp_path, mini_random):
    path = tmp_path / "d.jsonl"
    write_jsonl(mini_random[:2], path)
    path.write_text(path.read_text() + "\n\n", encoding="utf-8")
    assert read_jsonl(path) == list(mini_random[:2])
