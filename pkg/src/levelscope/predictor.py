"""Prompt construction, language-model clients and level parsing."""

from __future__ import annotations

import logging
import math
import re
import time
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .corpus.model import MASK
from .levels import LevelScale
from .retrieval import RetrievalResult

log = logging.getLogger(__name__)

SYSTEM_PREAMBLE = (
    "You recommend log levels for Java logging statements. "
    f"In each code block the level of one logging call is replaced by {MASK}."
)
CLIENT_KINDS = ("remote_chat", "mock_majority", "mock_oracle", "mock_noisy")

_WORD = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class Prompt:
    system_preamble: str
    examples: tuple[tuple[str, str], ...]  # (masked context, level), retrieval-rank order
    target_context: str
    level_vocabulary: tuple[str, ...]
    target_id: str = ""

    def instruction(self) -> str:
        return (
            f"Allowed levels, most verbose first: {', '.join(self.level_vocabulary)}.\n"
            f"Answer with exactly one level for {MASK} in the target block."
        )

    def render_user(self) -> str:
        parts = [self.instruction()]
        for i, (context, level) in enumerate(self.examples, 1):
            parts.append(f"### Example {i}\n```java\n{context}\n```\nLevel: {level}")
        parts.append(f"### Target\n```java\n{self.target_context}\n```\nLevel:")
        return "\n\n".join(parts) + "\n"

    def render(self) -> str:
        return f"{self.system_preamble}\n\n{self.render_user()}"

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_preamble},
            {"role": "user", "content": self.render_user()},
        ]


def build_prompt(
    target_context: str,
    examples: RetrievalResult | Sequence[tuple[str, str]] | None,
    scale: LevelScale,
    target_id: str = "",
    preamble: str = SYSTEM_PREAMBLE,
) -> Prompt:
    if isinstance(examples, RetrievalResult):
        pairs = tuple((s.context_window, s.level) for s, _ in examples.examples)
    else:
        pairs = tuple((c, lv) for c, lv in (examples or ()))
    for _, lv in pairs:
        if lv not in scale:
            raise ValueError(f"example level {lv!r} is not in the scale")
    return Prompt(preamble, pairs, target_context, tuple(scale.names), target_id)


@dataclass
class ClientResponse:
    text: str
    level_scores: dict[str, float] | None = None  # label -> probability, when the client provides it
    score_source: str = "one_hot"


class LLMClient(Protocol):
    client_id: str
    blocking_io: bool  # True when complete() waits on the network

    def complete(self, prompt: Prompt) -> ClientResponse: ...


def _vote_scores(levels: Sequence[str], vocabulary: Sequence[str]) -> dict[str, float]:
    counts = Counter(levels)
    total = sum(counts.values())
    return {lv: counts.get(lv, 0) / total for lv in vocabulary}


class MockMajorityClient:
    """Majority level among the prompt's examples; the more verbose level wins ties.

    Vote fractions are returned as class scores.
    """

    client_id = "mock_majority"
    blocking_io = False

    def complete(self, prompt: Prompt) -> ClientResponse:
        if not prompt.examples:
            return ClientResponse("info")
        scores = _vote_scores([lv for _, lv in prompt.examples], prompt.level_vocabulary)
        # vocabulary is ordered most verbose first, so max() keeps the earliest tie
        best = max(prompt.level_vocabulary, key=lambda lv: (scores[lv], -prompt.level_vocabulary.index(lv)))
        return ClientResponse(best, scores, "vote")


class MockOracleClient:
    """Answers with the ground-truth level of the target statement."""

    client_id = "mock_oracle"
    blocking_io = False

    def __init__(self, truth: Mapping[str, str]):
        self.truth = dict(truth)

    def complete(self, prompt: Prompt) -> ClientResponse:
        # an unknown target gets an unparsable answer and takes the invalid path
        return ClientResponse(self.truth.get(prompt.target_id, ""))


class MockNoisyClient:
    """Wraps another client and moves its answer to an adjacent level with probability ``flip``.

    The draw is keyed on the target id, so answers do not depend on call order.
    """

    def __init__(self, base: LLMClient, flip: float = 0.3, seed: int = 0):
        if not 0 <= flip <= 1:
            raise ValueError("flip must be in [0, 1]")
        self.base = base
        self.flip = flip
        self.seed = seed
        self.client_id = f"mock_noisy({base.client_id},{flip})"
        self.blocking_io = getattr(base, "blocking_io", True)

    def complete(self, prompt: Prompt) -> ClientResponse:
        resp = self.base.complete(prompt)
        vocab = prompt.level_vocabulary
        level = parse_level(resp.text, LevelScale(vocab))
        rng = np.random.default_rng([self.seed, zlib.crc32(prompt.target_id.encode())])
        if level is None or rng.random() >= self.flip:
            return ClientResponse(resp.text)
        o = vocab.index(level)
        options = [i for i in (o - 1, o + 1) if 0 <= i < len(vocab)]
        return ClientResponse(vocab[options[int(rng.integers(len(options)))]])


class RemoteChatClient:
    """OpenAI-compatible chat completions client.

    Sends ``{model, messages, temperature}``; reads ``choices[0].message.content``
    and, when requested and present, per-token ``logprobs``.
    """

    blocking_io = True

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        temperature: float = 0.0,
        api_key: str | None = None,
        request_logprobs: bool = False,
        attempts: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.temperature = temperature
        self.request_logprobs = request_logprobs
        self.attempts = attempts
        self.backoff_s = backoff_s
        self.client_id = f"remote:{model_name}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_s, headers=headers)

    def payload(self, prompt: Prompt) -> dict:
        body = {"model": self.model_name, "messages": prompt.messages(), "temperature": self.temperature}
        if self.request_logprobs:
            body["logprobs"] = True
            body["top_logprobs"] = 20
        return body

    def complete(self, prompt: Prompt) -> ClientResponse:
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self._client.post(self.endpoint, json=self.payload(prompt))
                resp.raise_for_status()
                choice = resp.json()["choices"][0]
                text = choice["message"]["content"] or ""
                scores = logprob_scores(choice.get("logprobs"), LevelScale(prompt.level_vocabulary))
                if scores is not None:
                    return ClientResponse(text, scores, "likelihood")
                return ClientResponse(text)
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff_s * 2**attempt)
        raise RuntimeError(f"chat request failed after {self.attempts} attempts: {last}")


def logprob_scores(logprobs: dict | None, scale: LevelScale) -> dict[str, float] | None:
    """Level distribution from the first generated token that names a level."""
    if not logprobs or not logprobs.get("content"):
        return None
    for entry in logprobs["content"]:
        if scale.canonical(entry.get("token", "").strip()) is None:
            continue
        acc: dict[str, float] = {}
        for alt in entry.get("top_logprobs") or [entry]:
            lv = scale.canonical(alt.get("token", "").strip())
            if lv is not None:
                acc[lv] = acc.get(lv, 0.0) + math.exp(alt["logprob"])
        total = sum(acc.values())
        if total <= 0:
            return None
        return {lv: acc.get(lv, 0.0) / total for lv in scale.names}
    return None


@dataclass(frozen=True)
class LLMClientConfig:
    kind: str = "mock_majority"
    endpoint: str | None = None
    model_name: str = "codellama-7b-instruct"
    temperature: float = 0.0
    max_retries: int = 2
    api_key: str | None = None
    request_logprobs: bool = False
    noise: float = 0.3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in CLIENT_KINDS:
            raise ValueError(f"unknown client kind {self.kind!r}")
        if self.kind == "remote_chat" and not self.endpoint:
            raise ValueError("remote_chat client requires an endpoint")


def make_client(cfg: LLMClientConfig, truth: Mapping[str, str] | None = None,
                http_client: httpx.Client | None = None) -> LLMClient:
    if cfg.kind == "mock_majority":
        return MockMajorityClient()
    if cfg.kind == "mock_oracle":
        if truth is None:
            raise ValueError("mock_oracle needs ground-truth levels")
        return MockOracleClient(truth)
    if cfg.kind == "mock_noisy":
        return MockNoisyClient(MockMajorityClient(), cfg.noise)
    return RemoteChatClient(cfg.endpoint, cfg.model_name, cfg.temperature, cfg.api_key,
                            cfg.request_logprobs, client=http_client)


def parse_level(text: str, scale: LevelScale) -> str | None:
    """First word of ``text`` that names a level (case-insensitive, aliases allowed)."""
    for word in _WORD.findall(text or ""):
        lv = scale.canonical(word)
        if lv is not None:
            return lv
    return None


@dataclass
class PredictionRecord:
    statement_id: str
    predicted: str
    class_scores: tuple[float, ...]
    client_id: str
    retrieval: RetrievalResult | None = None
    invalid: bool = False
    score_source: str = "one_hot"
    raw_response: str = field(default="", repr=False)


def _one_hot(level: str, scale: LevelScale) -> tuple[float, ...]:
    return tuple(1.0 if n == level else 0.0 for n in scale.names)


def predict_level(
    prompt: Prompt,
    client: LLMClient,
    scale: LevelScale | None = None,
    fallback_level: str = "info",
    max_retries: int = 2,
    retrieval: RetrievalResult | None = None,
) -> PredictionRecord:
    """Query ``client`` until a level parses; otherwise record ``fallback_level`` as invalid."""
    scale = scale or LevelScale(prompt.level_vocabulary)
    resp = ClientResponse("")
    level = None
    for _ in range(max_retries + 1):
        resp = client.complete(prompt)
        level = parse_level(resp.text, scale)
        if level is not None:
            break
    if level is None:
        log.warning("no level parsed for %s; using %s", prompt.target_id, fallback_level)
        return PredictionRecord(prompt.target_id, fallback_level, _one_hot(fallback_level, scale),
                                client.client_id, retrieval, True, "one_hot", resp.text)
    scores = _one_hot(level, scale)
    source = "one_hot"
    if resp.level_scores:
        vec = np.array([max(0.0, float(resp.level_scores.get(n, 0.0))) for n in scale.names])
        if vec.sum() > 0:
            vec = vec / vec.sum()
            # keep predicted == argmax(class_scores); the first maximum is the most verbose
            if scale.names[int(np.argmax(vec))] == level:
                scores, source = tuple(float(v) for v in vec), resp.score_source
    return PredictionRecord(prompt.target_id, level, scores, client.client_id, retrieval, False, source, resp.text)
