import json

import httpx
import pytest

from stringsmith.client import (ChatClientConfig, ClientError,
                                EmptyMockClient, HalfCorrectMockClient,
                                HttpChatClient, OracleMockClient,
                                RateLimiter, encode_answer_line, question_of)
from stringsmith.harness import get_strategy, make_prompt


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def test_rate_limiter_schedule():
    clock = FakeClock()
    sleeps = []

    def sleeper(s):
        sleeps.append(round(s, 6))
        clock.now += s

    limiter = RateLimiter(3, clock=clock, sleeper=sleeper)
    stamps = []
    for _ in range(7):
        limiter.acquire()
        stamps.append(clock.now)
        clock.now += 1.0
    assert stamps == [0.0, 1.0, 2.0, 60.0, 61.0, 62.0, 120.0]
    assert sleeps == [57.0, 57.0]


def test_rate_limiter_rejects_zero():
    with pytest.raises(ValueError):
        RateLimiter(0)


def _config(**kw):
    defaults = dict(endpoint="https://api.test/v1", model="m-1",
                    requests_per_minute=10_000)
    defaults.update(kw)
    return ChatClientConfig(**defaults)


def _ok_body(text="hi"):
    return {"choices": [{"message": {"content": text}}]}


def test_http_client_happy_path(monkeypatch):
    monkeypatch.setenv("STRINGSMITH_API_KEY", "sk-test-123")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json=_ok_body("pong"))

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler))
    assert client.model_id == "m-1"
    text, attempts = client.complete_with_meta("ping")
    assert (text, attempts) == ("pong", 1)
    assert seen["url"] == "https://api.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test-123"
    assert seen["payload"]["model"] == "m-1"
    assert seen["payload"]["temperature"] == 0.0
    assert seen["payload"]["messages"] == [{"role": "user", "content": "ping"}]
    client.close()


def test_http_client_passes_message_lists():
    def handler(request):
        payload = json.loads(request.content)
        return httpx.Response(200, json=_ok_body(
            payload["messages"][0]["role"]))

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler))
    assert client.complete([{"role": "system", "content": "s"},
                            {"role": "user", "content": "u"}]) == "system"


def test_http_client_no_token_no_header(monkeypatch):
    monkeypatch.delenv("STRINGSMITH_API_KEY", raising=False)

    def handler(request):
        assert "authorization" not in request.headers
        return httpx.Response(200, json=_ok_body())

    HttpChatClient(_config(),
                   transport=httpx.MockTransport(handler)).complete("q")


def test_http_client_retries_on_5xx_and_429():
    calls = {"n": 0}
    sleeps = []

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            return httpx.Response(500, text="boom")
        if calls["n"] == 2:
            return httpx.Response(429, text="slow down")
        return httpx.Response(200, json=_ok_body("ok"))

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler),
                            sleeper=sleeps.append)
    text, attempts = client.complete_with_meta("q")
    assert (text, attempts) == ("ok", 3)
    assert sleeps == [0.5, 1.0]  # exponential backoff before each retry


def test_http_client_retries_on_transport_error():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json=_ok_body("up"))

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler),
                            sleeper=lambda s: None)
    assert client.complete("q") == "up"


def test_http_client_gives_up_after_budget():
    def handler(request):
        return httpx.Response(503, text="down")

    client = HttpChatClient(_config(max_retries=2),
                            transport=httpx.MockTransport(handler),
                            sleeper=lambda s: None)
    with pytest.raises(ClientError, match="after 3 attempts"):
        client.complete("q")


def test_http_client_4xx_is_immediate():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401, text="bad key")

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler),
                            sleeper=lambda s: None)
    with pytest.raises(ClientError, match="HTTP 401"):
        client.complete("q")
    assert calls["n"] == 1


def test_http_client_malformed_body():
    def handler(request):
        return httpx.Response(200, json={"choices": []})

    client = HttpChatClient(_config(), transport=httpx.MockTransport(handler))
    with pytest.raises(ClientError, match="malformed"):
        client.complete("q")


# ------------------------------------------------------------------- mocks

def test_encode_answer_line():
    assert encode_answer_line("plain", "str") == "Answer: plain"
    assert encode_answer_line("12", "int") == "Answer: 12"
    assert encode_answer_line("True", "bool") == "Answer: True"
    assert encode_answer_line(" pad ", "str") == 'Answer: " pad "'
    assert encode_answer_line("a\nb", "str") == 'Answer: "a\\nb"'
    assert encode_answer_line("", "str") == 'Answer: ""'
    assert encode_answer_line('"quoted"', "str") == 'Answer: "\\"quoted\\""'
    # lists keep their canonical JSON form untouched
    assert encode_answer_line('["a", "b"]', "str_list") == 'Answer: ["a", "b"]'


def test_question_of_strips_instruction(mini_random):
    sample = mini_random[0]
    for strategy in ("raw", "cot", "pot"):
        messages = make_prompt(sample, strategy)
        assert question_of(messages) == sample.question
    # unknown shapes come back whole
    assert question_of("free text") == "free text"


def test_oracle_mock_answers_gold(mini_random):
    client = OracleMockClient(mini_random)
    sample = mini_random[0]
    reply = client.complete(make_prompt(sample, "raw"))
    assert reply == encode_answer_line(sample.answer,
                                       sample.answer_kind.value)
    chatty = OracleMockClient(mini_random, chatty=True)
    reply = chatty.complete(make_prompt(sample, "cot"))
    assert reply.startswith("Let me work through this")
    assert reply.splitlines()[-1] == encode_answer_line(
        sample.answer, sample.answer_kind.value)


def test_empty_mock(mini_random):
    assert EmptyMockClient().complete(
        make_prompt(mini_random[0], "raw")) == ""


def test_half_correct_mock_alternates(mini_random):
    client = HalfCorrectMockClient(mini_random)
    ordered = sorted({s.question for s in mini_random})
    by_question = {s.question: s for s in mini_random}
    for rank, question in enumerate(ordered):
        sample = by_question[question]
        reply = client.complete(make_prompt(sample, "raw"))
        if rank % 2 == 0:
            assert reply == encode_answer_line(sample.answer,
                                               sample.answer_kind.value)
        else:
            assert reply == "Answer: " + sample.answer + "~x"
            assert reply != "Answer: " + sample.answer
