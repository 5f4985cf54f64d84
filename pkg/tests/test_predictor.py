from __future__ import annotations

import json
from pathlib import Path

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelscope.corpus.model import MASK
from levelscope.levels import DEFAULT_LEVELS, LevelScale
from levelscope.predictor import (
    ClientResponse,
    LLMClientConfig,
    MockMajorityClient,
    MockNoisyClient,
    MockOracleClient,
    RemoteChatClient,
    build_prompt,
    logprob_scores,
    make_client,
    parse_level,
    predict_level,
)

SCALE = LevelScale()
GOLDEN = Path(__file__).parent / "golden" / "prompt.txt"


def _prompt(levels, target_id="t#0"):
    examples = [(f"if (x > {i}) {{\n    log.{MASK}(\"example {i}\");\n}}", lv) for i, lv in enumerate(levels)]
    return build_prompt(f"log.{MASK}(\"target\");", examples, SCALE, target_id)


def test_golden_prompt():
    text = _prompt(["error", "warn", "error"]).render()
    assert text == GOLDEN.read_text(encoding="utf-8")


def test_prompt_structure():
    p = _prompt(["info", "debug"])
    user = p.render_user()
    assert user.count("### Example") == 2
    assert user.index("Example 1") < user.index("Example 2") < user.index("### Target")
    assert user.rstrip().endswith("Level:")
    assert p.level_vocabulary == DEFAULT_LEVELS
    assert [m["role"] for m in p.messages()] == ["system", "user"]
    assert "target" in p.render() and ".info(" not in user
    with pytest.raises(ValueError):
        build_prompt("x", [("ctx", "verbose")], SCALE)
    assert build_prompt("x", None, SCALE).examples == ()


def test_majority_examples():
    client = MockMajorityClient()
    assert client.complete(_prompt(["error"] * 5)).text == "error"
    assert client.complete(_prompt(["info", "debug", "info", "debug"])).text == "debug"
    assert client.complete(_prompt([])).text == "info"
    resp = client.complete(_prompt(["warn", "warn", "error"]))
    assert resp.level_scores["warn"] == pytest.approx(2 / 3)


def test_oracle_and_noisy():
    oracle = MockOracleClient({"t#0": "fatal"})
    assert oracle.complete(_prompt([], "t#0")).text == "fatal"
    rec = predict_level(_prompt([], "unknown"), oracle, SCALE, fallback_level="info", max_retries=1)
    assert rec.invalid and rec.predicted == "info"
    noisy = MockNoisyClient(MockOracleClient({f"t#{i}": "info" for i in range(300)}), flip=0.3, seed=1)
    answers = [noisy.complete(_prompt([], f"t#{i}")).text for i in range(300)]
    assert set(answers) <= {"debug", "info", "warn"}
    assert 0.2 < np.mean([a != "info" for a in answers]) < 0.4
    assert answers == [noisy.complete(_prompt([], f"t#{i}")).text for i in range(300)]
    with pytest.raises(ValueError):
        MockNoisyClient(oracle, flip=1.5)


def test_parse_level():
    assert parse_level("WARN", SCALE) == "warn"
    assert parse_level("The level is: Error.", SCALE) == "error"
    assert parse_level("warning", SCALE) == "warn"
    assert parse_level("I am not sure", SCALE) is None
    assert parse_level("", SCALE) is None


class _Flaky:
    client_id = "flaky"

    def __init__(self, answers):
        self.answers = list(answers)
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        return ClientResponse(self.answers.pop(0))


def test_predict_retries_then_marks_invalid():
    c = _Flaky(["??", "hmm", "debug"])
    rec = predict_level(_prompt([]), c, SCALE, max_retries=2)
    assert rec.predicted == "debug" and not rec.invalid and c.calls == 3
    c = _Flaky(["??"] * 3)
    rec = predict_level(_prompt([]), c, SCALE, fallback_level="warn", max_retries=2)
    assert rec.invalid and rec.predicted == "warn" and rec.class_scores[SCALE.ordinal("warn")] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(DEFAULT_LEVELS), max_size=9))
def test_prediction_invariants(levels):
    rec = predict_level(_prompt(levels), MockMajorityClient(), SCALE)
    assert rec.predicted in SCALE
    assert abs(sum(rec.class_scores) - 1.0) <= 1e-9 and min(rec.class_scores) >= 0
    assert SCALE.names[int(np.argmax(rec.class_scores))] == rec.predicted


def _chat_transport(content="warn", logprobs=None, fail_first=0):
    seen = []

    def handler(req: httpx.Request) -> httpx.Response:
        seen.append(json.loads(req.content))
        if len(seen) <= fail_first:
            return httpx.Response(503)
        choice = {"message": {"role": "assistant", "content": content}}
        if logprobs is not None:
            choice["logprobs"] = logprobs
        return httpx.Response(200, json={"choices": [choice]})

    return httpx.Client(transport=httpx.MockTransport(handler)), seen


def test_remote_chat_wire_protocol():
    client, seen = _chat_transport("Warn")
    remote = RemoteChatClient("http://llm/v1/chat/completions", "m7b", client=client)
    rec = predict_level(_prompt(["warn"]), remote, SCALE)
    assert rec.predicted == "warn" and rec.score_source == "one_hot"
    body = seen[0]
    assert set(body) == {"model", "messages", "temperature"}
    assert body["temperature"] == 0.0 and body["messages"][0]["role"] == "system"


def test_remote_chat_retries_transport_errors():
    client, seen = _chat_transport("info", fail_first=2)
    remote = RemoteChatClient("http://llm", "m", client=client, backoff_s=0.0)
    assert remote.complete(_prompt([])).text == "info" and len(seen) == 3
    client, _ = _chat_transport("info", fail_first=5)
    with pytest.raises(RuntimeError):
        RemoteChatClient("http://llm", "m", client=client, backoff_s=0.0).complete(_prompt([]))


def test_remote_chat_logprobs():
    lp = {"content": [{"token": " warn", "logprob": np.log(0.6),
                       "top_logprobs": [{"token": " warn", "logprob": np.log(0.6)},
                                        {"token": "error", "logprob": np.log(0.3)},
                                        {"token": "banana", "logprob": np.log(0.1)}]}]}
    client, seen = _chat_transport("warn", lp)
    remote = RemoteChatClient("http://llm", "m", request_logprobs=True, client=client)
    rec = predict_level(_prompt([]), remote, SCALE)
    assert seen[0]["logprobs"] is True and seen[0]["top_logprobs"] == 20
    assert rec.score_source == "likelihood"
    assert rec.class_scores[SCALE.ordinal("warn")] == pytest.approx(2 / 3)
    assert rec.class_scores[SCALE.ordinal("error")] == pytest.approx(1 / 3)


def test_scores_ignored_when_argmax_disagrees():
    class Odd:
        client_id = "odd"

        def complete(self, prompt):
            return ClientResponse("info", {"error": 0.9, "info": 0.1}, "likelihood")

    rec = predict_level(_prompt([]), Odd(), SCALE)
    assert rec.predicted == "info" and rec.score_source == "one_hot"


def test_logprob_scores_absent():
    assert logprob_scores(None, SCALE) is None
    assert logprob_scores({"content": [{"token": "hello", "logprob": -0.1}]}, SCALE) is None


def test_client_config():
    with pytest.raises(ValueError):
        LLMClientConfig(kind="remote_chat")
    with pytest.raises(ValueError):
        LLMClientConfig(kind="gpt")
    assert isinstance(make_client(LLMClientConfig()), MockMajorityClient)
    with pytest.raises(ValueError):
        make_client(LLMClientConfig(kind="mock_oracle"))
    assert make_client(LLMClientConfig(kind="mock_noisy")).client_id.startswith("mock_noisy")
