"""Model endpoint access: completion, scoring, and infilling.

Two interchangeable clients speak the same three-route wire contract:

    POST {base}/complete  {model, prompt, n, temperature, top_p, max_tokens}
                          -> {"choices": [{"text": ...}, ...]}
    POST {base}/score     {model, prompt}
                          -> {"tokens": [{"text", "offset", "logprob",
                                          "top_logprob", "top_text"}, ...]}
    POST {base}/infill    {model, prefix, suffix, temperature, top_p,
                           max_tokens} -> {"text": ...}

HttpModelClient talks to a live server; MockModelClient replays a JSON
fixture keyed by prompt text, so every pipeline is runnable and testable with
no model in the loop. Offsets in score responses are character offsets into
the scored prompt, the same unit every other text coordinate in this package
uses.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .core import SamplingConfig
from .runner import InfrastructureError

logger = logging.getLogger(__name__)

CAPABILITIES = ("complete", "score", "infill")


class CapabilityError(ValueError):
    """An endpoint was asked for a capability it does not declare or serve."""


@dataclass(frozen=True)
class EndpointConfig:
    """One model endpoint as declared in the run config file."""

    name: str
    kind: str  # "http" or "mock"
    base_url: str = ""
    model: str = ""
    fixture: str = ""  # mock only: path to the fixture JSON
    capabilities: tuple[str, ...] = CAPABILITIES
    token_env: str = "BUGCC_API_TOKEN"
    timeout_s: float = 60.0
    max_retries: int = 3
    parallelism: int = 4

    def validate(self) -> None:
        if self.kind == "http":
            if not self.base_url:
                raise ValueError(f"endpoint {self.name}: http endpoint needs base_url")
        elif self.kind == "mock":
            if not self.fixture:
                raise ValueError(f"endpoint {self.name}: mock endpoint needs fixture")
        else:
            raise ValueError(f"endpoint {self.name}: unknown kind {self.kind!r}")
        for cap in self.capabilities:
            if cap not in CAPABILITIES:
                raise ValueError(f"endpoint {self.name}: unknown capability {cap!r}")
        if self.timeout_s <= 0:
            raise ValueError(f"endpoint {self.name}: timeout_s must be positive")
        if self.parallelism < 1:
            raise ValueError(f"endpoint {self.name}: parallelism must be >= 1")

    def require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise CapabilityError(
                f"endpoint {self.name} does not declare the {capability!r} capability"
            )


@dataclass(frozen=True)
class TokenScore:
    """Per-token likelihood comparison for one scored prompt.

    position is the character offset of the token in the full scored text;
    line is 1-based relative to the solution body (header and docstring
    excluded via body_start). p1 is the probability the model assigned to the
    token actually present, p2 the probability of its argmax alternative, so
    0 <= p1 <= p2 <= 1 and gap lives in [0, 1].
    """

    text: str
    position: int
    line: int
    p1: float
    p2: float
    top_text: str = ""

    @property
    def gap(self) -> float:
        return self.p2 - self.p1


class ModelClient(Protocol):
    def complete(self, prompt: str, sampling: SamplingConfig) -> list[str]: ...

    def score(self, prompt: str) -> list[dict]: ...

    def infill(self, prefix: str, suffix: str, sampling: SamplingConfig) -> str: ...


def _short_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


class HttpModelClient:
    """requests-backed client with bounded parallelism and idempotent retry.

    Transient transport failures (connection resets, 429/5xx) retry with
    backoff up to max_retries; model-side errors (other 4xx) never retry.
    Anything still failing surfaces as InfrastructureError so the CLI exits
    with the infrastructure code rather than a usage error.
    """

    def __init__(self, config: EndpointConfig):
        config.validate()
        self.config = config
        self._gate = threading.Semaphore(config.parallelism)
        self._session = requests.Session()
        retry = Retry(
            total=config.max_retries,
            backoff_factor=0.2,
            status_forcelist=(429, 500, 502, 503, 504),
            allowed_methods=frozenset({"POST"}),
            raise_on_status=False,
        )
        adapter = HTTPAdapter(max_retries=retry)
        self._session.mount("http://", adapter)
        self._session.mount("https://", adapter)
        token = os.environ.get(config.token_env, "")
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"

    def _post(self, route: str, payload: dict, logged_text: str) -> dict:
        url = self.config.base_url.rstrip("/") + "/" + route
        text_hash = _short_hash(logged_text)
        with self._gate:
            logger.debug("POST %s prompt_sha=%s", url, text_hash)
            try:
                response = self._session.post(
                    url, json=payload, timeout=self.config.timeout_s
                )
            except requests.RequestException as exc:
                raise InfrastructureError(f"POST {url} failed: {exc}") from exc
        logger.debug(
            "POST %s prompt_sha=%s -> %d (%d bytes)",
            url,
            text_hash,
            response.status_code,
            len(response.content),
        )
        if response.status_code >= 400:
            raise InfrastructureError(
                f"POST {url} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise InfrastructureError(f"POST {url} returned non-JSON body") from exc

    def complete(self, prompt: str, sampling: SamplingConfig) -> list[str]:
        self.config.require("complete")
        sampling.validate()
        data = self._post(
            "complete",
            {
                "model": self.config.model,
                "prompt": prompt,
                "n": sampling.n,
                "temperature": sampling.temperature,
                "top_p": sampling.top_p,
                "max_tokens": sampling.max_new_tokens,
            },
            prompt,
        )
        try:
            choices = [choice["text"] for choice in data["choices"]]
        except (KeyError, TypeError) as exc:
            raise InfrastructureError(f"malformed /complete response: {exc}") from exc
        if len(choices) != sampling.n:
            raise InfrastructureError(
                f"/complete returned {len(choices)} choices, requested {sampling.n}"
            )
        return choices

    def score(self, prompt: str) -> list[dict]:
        self.config.require("score")
        data = self._post("score", {"model": self.config.model, "prompt": prompt}, prompt)
        tokens = data.get("tokens")
        if not isinstance(tokens, list):
            raise InfrastructureError("malformed /score response: no tokens list")
        return tokens

    def infill(self, prefix: str, suffix: str, sampling: SamplingConfig) -> str:
        self.config.require("infill")
        data = self._post(
            "infill",
            {
                "model": self.config.model,
                "prefix": prefix,
                "suffix": suffix,
                "temperature": sampling.temperature,
                "top_p": sampling.top_p,
                "max_tokens": sampling.max_new_tokens,
            },
            prefix,
        )
        text = data.get("text")
        if not isinstance(text, str):
            raise InfrastructureError("malformed /infill response: no text field")
        return text


def fixture_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockModelClient:
    """Fixture-replay client with hash-table semantics: identical inputs give
    identical outputs in any process.

    The fixture is one JSON object with up to three maps: "completions",
    "scores", and "infills". Each map is keyed by exact prompt text or by
    sha256(prompt) hex digest; infill keys are prefix + "\\x00" + suffix, with
    bare-prefix keys accepted as a convenience. Completion values are a string
    (repeated n times) or a list (cycled to n); infill values are a string or
    a list (first element); score values are token lists in wire format.
    Unknown prompts fall back to a bare "pass" completion/infill and an empty
    score list so arbitrary prompts never crash a mock run.
    """

    def __init__(
        self,
        fixture_path: str | Path,
        capabilities: Sequence[str] = CAPABILITIES,
    ):
        try:
            raw = json.loads(Path(fixture_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InfrastructureError(
                f"cannot load mock fixture {fixture_path}: {exc}"
            ) from exc
        self.capabilities = tuple(capabilities)
        self.completions: dict = raw.get("completions", {})
        self.scores: dict = raw.get("scores", {})
        self.infills: dict = raw.get("infills", {})

    def _require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise CapabilityError(
                f"mock endpoint does not declare the {capability!r} capability"
            )

    @staticmethod
    def _lookup(table: dict, prompt: str):
        if prompt in table:
            return table[prompt]
        return table.get(fixture_key(prompt))

    def complete(self, prompt: str, sampling: SamplingConfig) -> list[str]:
        self._require("complete")
        sampling.validate()
        value = self._lookup(self.completions, prompt)
        if value is None:
            logger.debug("mock completion fallback for prompt_sha=%s", _short_hash(prompt))
            value = "pass"
        if isinstance(value, str):
            return [value] * sampling.n
        return [value[i % len(value)] for i in range(sampling.n)]

    def score(self, prompt: str) -> list[dict]:
        self._require("score")
        value = self._lookup(self.scores, prompt)
        return list(value) if value is not None else []

    def infill(self, prefix: str, suffix: str, sampling: SamplingConfig) -> str:
        self._require("infill")
        value = self._lookup(self.infills, prefix + "\x00" + suffix)
        if value is None:
            value = self._lookup(self.infills, prefix)
        if value is None:
            return "pass"
        if isinstance(value, str):
            return value
        return value[0]


def make_client(config: EndpointConfig) -> ModelClient:
    config.validate()
    if config.kind == "mock":
        return MockModelClient(config.fixture, config.capabilities)
    return HttpModelClient(config)


def _clamped_probability(logprob: float) -> float:
    return min(1.0, max(0.0, math.exp(min(0.0, logprob))))


def token_scores_from_raw(
    raw_tokens: list[dict], prompt: str, body_start: int = 0
) -> list[TokenScore]:
    """Convert wire-format score tokens into TokenScore values.

    body_start is the character offset where the solution body begins in the
    scored text; tokens before it (header, docstring, statement block) are
    dropped because only the code prefix is a localization target. Lines are
    numbered from 1 at body_start. A token without a top_logprob means the
    endpoint cannot report the argmax alternative, which is a capability
    problem rather than a transport one.
    """
    base_newlines = prompt.count("\n", 0, min(body_start, len(prompt)))
    scores = []
    for raw in raw_tokens:
        if "top_logprob" not in raw:
            raise CapabilityError(
                "score endpoint returned no top_logprob; argmax alternatives "
                "are required for likelihood-gap localization"
            )
        try:
            offset = int(raw["offset"])
            p1 = _clamped_probability(float(raw["logprob"]))
            p2 = _clamped_probability(float(raw["top_logprob"]))
            text = str(raw["text"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InfrastructureError(f"malformed score token {raw!r}: {exc}") from exc
        if offset < body_start:
            continue
        p2 = max(p1, p2)
        line = prompt.count("\n", 0, min(offset, len(prompt))) - base_newlines + 1
        scores.append(
            TokenScore(
                text=text,
                position=offset,
                line=line,
                p1=p1,
                p2=p2,
                top_text=str(raw.get("top_text", "")),
            )
        )
    return scores


def token_scores(
    client: ModelClient, prompt: str, body_start: int = 0
) -> list[TokenScore]:
    """Score a prompt and convert the result in one step."""
    return token_scores_from_raw(client.score(prompt), prompt, body_start)
