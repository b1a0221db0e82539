"""Endpoint configs, the fixture-replay mock, wire-format score conversion,
and the HTTP client against a live local mock server."""
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bugcc.core import SamplingConfig
from bugcc.modelio import (
    CapabilityError,
    EndpointConfig,
    HttpModelClient,
    MockModelClient,
    TokenScore,
    fixture_key,
    make_client,
    token_scores,
    token_scores_from_raw,
)
from bugcc.mockserver import start_in_thread
from bugcc.runner import InfrastructureError

from conftest import write_fixture

S1 = SamplingConfig(n=1, temperature=0.0, top_p=1.0, max_new_tokens=16, seed=0)
S3 = SamplingConfig(n=3, temperature=0.6, top_p=1.0, max_new_tokens=16, seed=0)


# --- config -------------------------------------------------------------------

def test_endpoint_config_validation():
    EndpointConfig(name="m", kind="mock", fixture="f.json").validate()
    EndpointConfig(name="h", kind="http", base_url="http://x/").validate()
    with pytest.raises(ValueError):
        EndpointConfig(name="m", kind="mock").validate()
    with pytest.raises(ValueError):
        EndpointConfig(name="h", kind="http").validate()
    with pytest.raises(ValueError):
        EndpointConfig(name="x", kind="carrier-pigeon", base_url="u").validate()
    with pytest.raises(ValueError):
        EndpointConfig(name="m", kind="mock", fixture="f", capabilities=("fly",)).validate()


def test_endpoint_config_require():
    config = EndpointConfig(name="m", kind="mock", fixture="f", capabilities=("complete",))
    config.require("complete")
    with pytest.raises(CapabilityError):
        config.require("score")


# --- mock client -----------------------------------------------------------------

def test_mock_completion_string_repeats(tmp_path):
    path = write_fixture(tmp_path / "f.json", {"completions": {"p": "done"}})
    client = MockModelClient(path)
    assert client.complete("p", S3) == ["done", "done", "done"]


def test_mock_completion_list_cycles(tmp_path):
    path = write_fixture(tmp_path / "f.json", {"completions": {"p": ["a", "b"]}})
    client = MockModelClient(path)
    assert client.complete("p", S3) == ["a", "b", "a"]


def test_mock_completion_fallback(tmp_path):
    path = write_fixture(tmp_path / "f.json", {})
    client = MockModelClient(path)
    assert client.complete("unknown", S1) == ["pass"]


def test_mock_hash_keys(tmp_path):
    prompt = "def f():\n    pass\n"
    path = write_fixture(
        tmp_path / "f.json", {"completions": {fixture_key(prompt): "via-hash"}}
    )
    client = MockModelClient(path)
    assert client.complete(prompt, S1) == ["via-hash"]


def test_mock_infill_key_join(tmp_path):
    path = write_fixture(
        tmp_path / "f.json",
        {"infills": {"left\x00right": "joined", "only-prefix": ["first", "second"]}},
    )
    client = MockModelClient(path)
    assert client.infill("left", "right", S1) == "joined"
    assert client.infill("only-prefix", "anything", S1) == "first"
    assert client.infill("missing", "missing", S1) == "pass"


def test_mock_scores_default_empty(tmp_path):
    path = write_fixture(tmp_path / "f.json", {"scores": {"p": [{"text": "x"}]}})
    client = MockModelClient(path)
    assert client.score("p") == [{"text": "x"}]
    assert client.score("other") == []


def test_mock_is_pure_across_instances(tmp_path):
    path = write_fixture(
        tmp_path / "f.json", {"completions": {"p": ["a", "b", "c"]}, "infills": {"i": ["x", "y"]}}
    )
    first = MockModelClient(path)
    second = MockModelClient(path)
    for _ in range(3):
        assert first.complete("p", S3) == second.complete("p", S3) == ["a", "b", "c"]
        assert first.infill("i", "", S1) == second.infill("i", "", S1) == "x"


def test_mock_capability_gate(tmp_path):
    path = write_fixture(tmp_path / "f.json", {})
    client = MockModelClient(path, capabilities=("complete",))
    client.complete("p", S1)
    with pytest.raises(CapabilityError):
        client.score("p")
    with pytest.raises(CapabilityError):
        client.infill("p", "", S1)


def test_mock_bad_fixture_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(InfrastructureError):
        MockModelClient(bad)
    with pytest.raises(InfrastructureError):
        MockModelClient(tmp_path / "missing.json")


def test_make_client_dispatch(tmp_path):
    path = write_fixture(tmp_path / "f.json", {})
    mock = make_client(EndpointConfig(name="m", kind="mock", fixture=path))
    assert isinstance(mock, MockModelClient)
    http = make_client(EndpointConfig(name="h", kind="http", base_url="http://localhost:1/"))
    assert isinstance(http, HttpModelClient)


# --- token score conversion --------------------------------------------------------

def _raw(text, offset, logprob, top_logprob, top_text="?"):
    return {
        "text": text,
        "offset": offset,
        "logprob": logprob,
        "top_logprob": top_logprob,
        "top_text": top_text,
    }


def test_token_scores_lines_and_positions():
    prompt = "def f():\n    x = 1\n    y = 2\n"
    body_start = len("def f():\n")
    raw = [
        _raw("def", 0, -0.1, -0.1),              # before the body: dropped
        _raw("x", body_start + 4, -2.0, -0.5),   # body line 1
        _raw("y", prompt.index("y = 2"), -1.0, -0.2),  # body line 2
    ]
    scores = token_scores_from_raw(raw, prompt, body_start)
    assert [s.text for s in scores] == ["x", "y"]
    assert [s.line for s in scores] == [1, 2]
    assert scores[0].position == body_start + 4


def test_token_scores_probability_clamps():
    scores = token_scores_from_raw([_raw("t", 0, 5.0, -0.5)], "t", 0)
    (score,) = scores
    assert score.p1 == 1.0            # positive logprob clamps to probability 1
    assert score.p2 == 1.0            # p2 floored at p1
    assert score.gap == 0.0
    (low,) = token_scores_from_raw([_raw("t", 0, -3.0, -1.0)], "t", 0)
    assert low.p1 == pytest.approx(math.exp(-3.0))
    assert low.p2 == pytest.approx(math.exp(-1.0))
    assert 0.0 <= low.gap <= 1.0


def test_token_scores_missing_top_logprob_is_capability_error():
    with pytest.raises(CapabilityError):
        token_scores_from_raw([{"text": "x", "offset": 0, "logprob": -1.0}], "x", 0)


def test_token_scores_malformed_token():
    with pytest.raises(InfrastructureError):
        token_scores_from_raw([{"top_logprob": -1.0}], "x", 0)
    with pytest.raises(InfrastructureError):
        token_scores_from_raw(
            [{"text": "x", "offset": "zero", "logprob": -1.0, "top_logprob": -0.5}], "x", 0
        )


@given(st.floats(min_value=-30, max_value=5, allow_nan=False),
       st.floats(min_value=-30, max_value=5, allow_nan=False))
@settings(max_examples=100, deadline=None)
def test_token_scores_gap_always_unit_interval(logprob, top_logprob):
    (score,) = token_scores_from_raw([_raw("t", 0, logprob, top_logprob)], "t", 0)
    assert 0.0 <= score.p1 <= score.p2 <= 1.0
    assert 0.0 <= score.gap <= 1.0


def test_token_score_gap_worked_example():
    score = TokenScore(text="==", position=10, line=3, p1=0.01, p2=0.95)
    assert abs(score.gap - 0.94) < 1e-12


# --- HTTP client against the local mock server ---------------------------------------

@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("fixtures")
    prompt = "def f():\n"
    fixture = {
        "completions": {prompt: ["    return 1\n", "    return 2\n"]},
        "scores": {
            prompt: [
                {"text": "def", "offset": 0, "logprob": -0.1, "top_logprob": -0.1, "top_text": "def"}
            ]
        },
        "infills": {"left\x00right": "middle"},
    }
    path = write_fixture(tmp / "server.json", fixture)
    server, base_url, thread = start_in_thread(path)
    yield base_url, prompt
    server.shutdown()


def _http_config(base_url, **overrides):
    fields = dict(name="live", kind="http", base_url=base_url, model="mock-model")
    fields.update(overrides)
    return EndpointConfig(**fields)


def test_http_complete(live_server):
    base_url, prompt = live_server
    client = HttpModelClient(_http_config(base_url))
    assert client.complete(prompt, S3) == ["    return 1\n", "    return 2\n", "    return 1\n"]


def test_http_score(live_server):
    base_url, prompt = live_server
    client = HttpModelClient(_http_config(base_url))
    raw = client.score(prompt)
    assert raw[0]["text"] == "def"
    scores = token_scores(client, prompt)
    assert scores[0].text == "def"


def test_http_infill(live_server):
    base_url, _ = live_server
    client = HttpModelClient(_http_config(base_url))
    assert client.infill("left", "right", S1) == "middle"


def test_http_capability_gate_before_transport():
    client = HttpModelClient(
        _http_config("http://127.0.0.1:9/", capabilities=("complete",))
    )
    with pytest.raises(CapabilityError):
        client.score("anything")


class _NotFoundHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        self.send_response(404)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, *args):
        pass


def test_http_error_status_is_infrastructure():
    server = HTTPServer(("127.0.0.1", 0), _NotFoundHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{server.server_port}/"
        client = HttpModelClient(_http_config(base))
        with pytest.raises(InfrastructureError):
            client.complete("p", S1)
    finally:
        server.shutdown()


def test_http_connection_refused_is_infrastructure():
    client = HttpModelClient(_http_config("http://127.0.0.1:1/", max_retries=0, timeout_s=2.0))
    with pytest.raises(InfrastructureError):
        client.complete("p", S1)


class _BrokenHandler(BaseHTTPRequestHandler):
    """Returns one completion regardless of requested n, as a buggy server would."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        body = json.dumps({"choices": [{"text": "only-one"}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


def test_http_choice_count_mismatch():
    server = HTTPServer(("127.0.0.1", 0), _BrokenHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{server.server_port}/"
        client = HttpModelClient(_http_config(base))
        with pytest.raises(InfrastructureError, match="choices"):
            client.complete("p", S3)
    finally:
        server.shutdown()
