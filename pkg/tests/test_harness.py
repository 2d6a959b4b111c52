import json
import sys

import pytest

from stringsmith.client import (EmptyMockClient, HalfCorrectMockClient,
                                OracleMockClient, encode_answer_line)
from stringsmith.dataset import MalformedLineError
from stringsmith.harness import (AccuracyReport, EvalRecord, Extraction,
                                 HarnessError, SandboxClient, all_strategies,
                                 dataset_kind_of, extract_answer,
                                 extract_code, get_strategy, grade,
                                 make_prompt, read_records,
                                 report_from_records, run_eval,
                                 write_records)
from stringsmith.values import Kind


def test_strategies_load():
    kinds = [s.kind for s in all_strategies()]
    assert kinds == ["raw", "cot", "pot"]
    raw = get_strategy("raw")
    assert "Answer:" in raw.instruction
    cot = get_strategy("cot")
    assert "step by step" in cot.instruction
    pot = get_strategy("pot")
    assert "ans" in pot.instruction and "fenced" in pot.instruction
    with pytest.raises(HarnessError):
        get_strategy("zero-shot")


def test_make_prompt_shape(mini_random):
    sample = mini_random[0]
    messages = make_prompt(sample, "raw")
    assert [m["role"] for m in messages] == ["system", "user"]
    assert messages[1]["content"] == \
        sample.question + "\n\n" + get_strategy("raw").instruction
    # plain-string questions work too
    assert make_prompt("What?", "cot")[1]["content"].startswith("What?\n\n")


# -------------------------------------------------------------- extraction

def test_extract_plain_string():
    ex = extract_answer("Answer: hello", Kind.STR)
    assert ex.candidates == ("hello",) and not ex.quote_stripped


def test_extract_last_answer_line_wins():
    text = "Answer: first\nsome reasoning\nAnswer: second"
    assert extract_answer(text, Kind.STR).candidates == ("second",)


def test_extract_marker_case_and_indent():
    assert extract_answer("  answer: x", Kind.STR).candidates == ("x",)
    assert extract_answer("ANSWER: x", Kind.STR).candidates == ("x",)
    # mid-line markers do not count
    assert extract_answer("the Answer: x", Kind.STR).failed


def test_extract_crlf():
    ex = extract_answer("Answer: value\r\n", Kind.STR)
    assert ex.candidates == ("value",)


def test_extract_preserves_interior_whitespace():
    # single space after the colon is the separator; the rest is payload
    ex = extract_answer("Answer:  two spaces", Kind.STR)
    assert ex.candidates == (" two spaces",)


def test_extract_json_escaped_string():
    ex = extract_answer('Answer: "a\\nb"', Kind.STR)
    assert ex.candidates[0] == "a\nb"
    assert ex.quote_stripped


def test_extract_quoted_keeps_verbatim_reading():
    ex = extract_answer('Answer: "maybe quoted"', Kind.STR)
    assert ex.candidates == ("maybe quoted", '"maybe quoted"')
    assert ex.quote_stripped


def test_extract_empty_payload_is_empty_string():
    ex = extract_answer("Answer: ", Kind.STR)
    assert ex.candidates == ("",) and not ex.failed


def test_extract_failure():
    assert extract_answer("no marker here", Kind.STR).failed
    assert extract_answer("", Kind.STR).failed


def test_extract_bool_case_folds():
    assert extract_answer("Answer: true", Kind.BOOL).candidates == ("True",)
    assert extract_answer("Answer: FALSE", Kind.BOOL).candidates == ("False",)
    assert extract_answer("Answer: yes", Kind.BOOL).candidates == ("yes",)


def test_extract_int_trims_but_keeps_digits():
    assert extract_answer("Answer:  12 ", Kind.INT).candidates == ("12",)
    # leading zeros are NOT repaired: grading wants the canonical form
    assert extract_answer("Answer: 012", Kind.INT).candidates == ("012",)
    assert not grade("012", "12")


def test_extract_str_list_respaces_json():
    ex = extract_answer('Answer: ["a","b"]', Kind.STR_LIST)
    assert ex.candidates[0] == '["a", "b"]'
    assert ex.candidates[1] == '["a","b"]'
    ex = extract_answer("Answer: not json", Kind.STR_LIST)
    assert ex.candidates == ("not json",)


def test_extract_code_block():
    text = "intro\n```python\nans = 1\n```\ntrailer"
    assert extract_code(text) == "ans = 1\n"
    text = "```py\nx = 2\n```\n```\nans = 3\n```"
    assert extract_code(text) == "ans = 3\n"
    assert extract_code("no fences") is None
    assert extract_code("```python\r\nans = 9\r\n```") == "ans = 9\r\n"


def test_grade_exact_match():
    assert grade("abc", "abc")
    assert not grade("abc ", "abc")
    assert not grade(None, "abc")
    assert not grade("", "abc")
    assert grade("", "")


# ----------------------------------------------------------------- records

def test_record_round_trip(tmp_path):
    rec = EvalRecord(sample_id="random:concat:t0:s0", model_id="m",
                     strategy="raw", raw_response="Answer: x",
                     extracted="x", correct=True, latency_ms=1.2345,
                     attempt_count=2, quote_stripped=True)
    path = tmp_path / "r.jsonl"
    write_records([rec], path)
    back = read_records(path)
    assert len(back) == 1
    assert back[0].latency_ms == pytest.approx(1.234, abs=1e-9)
    assert back[0].quote_stripped and back[0].correct
    path.write_text("{broken\n", encoding="utf-8")
    with pytest.raises(MalformedLineError):
        read_records(path)


def test_dataset_kind_of():
    assert dataset_kind_of("hash:comp-0007:t1:s3") == "hash"


def test_report_math_and_table():
    def rec(sid, ok):
        return EvalRecord(sample_id=sid, model_id="m", strategy="raw",
                          raw_response="", extracted=None, correct=ok,
                          latency_ms=0.0, attempt_count=1)

    records = [rec("multilingual:a:t0:s0", True),
               rec("multilingual:a:t0:s1", False),
               rec("hash:a:t0:s0", True),
               rec("random:a:t0:s0", False)]
    report = report_from_records(records)
    assert report.accuracy("multilingual") == 50.0
    assert report.accuracy("hash") == 100.0
    assert report.accuracy("random") == 0.0
    assert report.average == 50.0
    table = report.format_table()
    lines = table.splitlines()
    assert len(lines) == 2
    assert lines[0].split() == ["model", "strategy", "hash", "multilingual",
                                "random", "avg"]
    assert lines[1].split() == ["m", "raw", "100.00", "50.00", "0.00",
                                "50.00"]


# -------------------------------------------------------------------- runs

def test_oracle_run_is_perfect(mini_random):
    run = run_eval(OracleMockClient(mini_random), mini_random, "raw")
    assert run.report.accuracy("random") == 100.0
    assert all(r.correct for r in run.records)
    assert [r.sample_id for r in run.records] == \
        [s.sample_id for s in mini_random]


def test_empty_run_is_zero(mini_random):
    run = run_eval(EmptyMockClient(), mini_random, "cot")
    assert run.report.accuracy("random") == 0.0
    assert all(r.extracted is None for r in run.records)


def test_half_run_is_half(mini_random):
    even = list(mini_random)[:len(mini_random) - len(mini_random) % 2]
    run = run_eval(HalfCorrectMockClient(even), even, "raw")
    assert run.report.accuracy("random") == 50.0


def test_parallelism_does_not_change_report(mini_random):
    seq = run_eval(OracleMockClient(mini_random), mini_random, "raw")
    par = run_eval(OracleMockClient(mini_random), mini_random, "raw",
                   parallelism=8)
    assert seq.report.as_dict() == par.report.as_dict()
    assert [r.sample_id for r in seq.records] == \
        [r.sample_id for r in par.records]


class CountingOracle(OracleMockClient):
    model_id = "mock-oracle"

    def __init__(self, samples):
        super().__init__(samples)
        self.calls = 0

    def complete(self, messages):
        self.calls += 1
        return super().complete(messages)


def test_resume_skips_recorded_samples(tmp_path, mini_random):
    out = tmp_path / "records.jsonl"
    first = list(mini_random)[:10]
    client = CountingOracle(mini_random)
    run_eval(client, first, "raw", out_path=out)
    assert client.calls == 10

    client2 = CountingOracle(mini_random)
    run = run_eval(client2, mini_random, "raw", out_path=out)
    assert client2.calls == len(mini_random) - 10
    assert len(run.records) == len(mini_random)
    assert run.report.accuracy("random") == 100.0
    # the sink now holds every record exactly once
    assert len(read_records(out)) == len(mini_random)


def test_resume_ignores_other_strategies(tmp_path, mini_random):
    out = tmp_path / "records.jsonl"
    subset = list(mini_random)[:6]
    run_eval(OracleMockClient(subset), subset, "raw", out_path=out)
    client = CountingOracle(subset)
    run_eval(client, subset, "cot", out_path=out)
    assert client.calls == 6  # raw records do not satisfy a cot run


def test_regrade_from_persisted_records(tmp_path, mini_random):
    out = tmp_path / "records.jsonl"
    live = run_eval(OracleMockClient(mini_random), mini_random, "raw",
                    out_path=out)
    revived = report_from_records(read_records(out))
    assert revived.as_dict() == live.report.as_dict()


# --------------------------------------------------------------------- pot

STUB = r'''
import json, sys
if "--health" in sys.argv:
    print(json.dumps({"ok": True}))
    sys.exit(0)
req = json.loads(sys.stdin.readline())
code = req["code"]
if "while True" in code:
    print(json.dumps({"status": "timeout", "answer": None}))
elif "import socket" in code:
    print(json.dumps({"status": "forbidden", "answer": None,
                      "stderr_excerpt": "socket disabled"}))
elif "raise" in code:
    print(json.dumps({"status": "error", "answer": None,
                      "stderr_excerpt": "RuntimeError: no"}))
else:
    ns = {}
    exec(code, ns)
    v = ns["ans"]
    if isinstance(v, bool):
        out = "True" if v else "False"
    elif isinstance(v, (list, tuple)):
        out = json.dumps(list(v), ensure_ascii=False)
    elif isinstance(v, int):
        out = str(v)
    else:
        out = v
    print(json.dumps({"status": "ok", "answer": out}))
'''


@pytest.fixture()
def stub_sandbox(tmp_path):
    script = tmp_path / "stub_sandbox.py"
    script.write_text(STUB, encoding="utf-8")
    return SandboxClient([sys.executable, str(script)], timeout_ms=2000)


class PotOracle:
    """Emits a fenced block binding the sample's operands and code."""

    model_id = "mock-pot"

    def __init__(self, samples, tasks):
        from stringsmith.catalog import full_task_set
        by_id = {t.task_id: t for t in tasks}
        self._blocks = {}
        for s in samples:
            task = by_id[s.task_id]
            lines = [f"{name} = {value!r}"
                     for name, value in s.bindings.items()]
            lines.append(task.code_text)
            self._blocks[s.question] = "```python\n" + "\n".join(lines) + "\n```"

    def complete(self, messages):
        from stringsmith.client import question_of
        return "Here is the program.\n" + self._blocks[question_of(messages)]


def test_pot_end_to_end(stub_sandbox, mini_random, small_tasks):
    assert stub_sandbox.health()["ok"] is True
    client = PotOracle(mini_random, small_tasks)
    run = run_eval(client, mini_random, "pot", sandbox=stub_sandbox)
    assert run.report.accuracy("random") == 100.0


def test_pot_without_sandbox_is_refused(mini_random):
    with pytest.raises(HarnessError):
        run_eval(OracleMockClient(mini_random), mini_random, "pot")


def test_pot_missing_binary_aborts(mini_random):
    sandbox = SandboxClient(["/no/such/sandbox"])
    client = ScriptedPot("```python\nans = 'x'\n```")
    with pytest.raises(HarnessError, match="unavailable"):
        run_eval(client, list(mini_random)[:1], "pot", sandbox=sandbox)


class ScriptedPot:
    model_id = "mock-pot-bad"

    def __init__(self, reply):
        self.reply = reply

    def complete(self, messages):
        return self.reply


@pytest.mark.parametrize("code,why", [
    ("while True:\n    pass", "timeout"),
    ("import socket", "forbidden"),
    ("raise RuntimeError", "error"),
])
def test_pot_bad_outcomes_grade_incorrect(stub_sandbox, mini_random,
                                          code, why):
    sample = mini_random[0]
    client = ScriptedPot(f"```python\n{code}\n```")
    run = run_eval(client, [sample], "pot", sandbox=stub_sandbox)
    rec = run.records[0]
    assert not rec.correct and rec.extracted is None, why


def test_pot_no_code_block_is_extraction_failure(stub_sandbox, mini_random):
    run = run_eval(ScriptedPot("I refuse."), [mini_random[0]], "pot",
                   sandbox=stub_sandbox)
    assert not run.records[0].correct


def test_sandbox_protocol_violation_aborts(tmp_path, mini_random):
    script = tmp_path / "broken.py"
    script.write_text("print('not json')", encoding="utf-8")
    sandbox = SandboxClient([sys.executable, str(script)])
    client = ScriptedPot("```python\nans = 'x'\n```")
    with pytest.raises(HarnessError, match="protocol violation"):
        run_eval(client, [mini_random[0]], "pot", sandbox=sandbox)
