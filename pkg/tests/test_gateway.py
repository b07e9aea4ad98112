"""Model gateway: scripted mock semantics, call attribution, HTTP retries."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from crashresolver.errors import BackendUnavailable, ScriptExhausted, ScriptMismatch
from crashresolver.gateway import (
    CallScope,
    ChatRequest,
    HttpChatBackend,
    MockBackend,
    ModelGateway,
    ScriptedBehavior,
    ScriptStep,
    count_calls,
    load_mock_script,
)


def request(text="hello", temperature=0.0):
    return ChatRequest(messages=[("user", text)], temperature=temperature)


def test_mock_responses_in_order():
    backend = MockBackend(ScriptedBehavior([ScriptStep("one"), ScriptStep("two")]))
    gateway = ModelGateway(backend)
    scope = CallScope(name="t")
    assert gateway.complete(request(), scope) == "one"
    assert gateway.complete(request(), scope) == "two"


def test_mock_exhaustion_is_distinct_error():
    backend = MockBackend(ScriptedBehavior([ScriptStep("only")]))
    gateway = ModelGateway(backend)
    scope = CallScope(name="t")
    gateway.complete(request(), scope)
    with pytest.raises(ScriptExhausted):
        gateway.complete(request(), scope)


def test_mock_predicate_mismatch_refuses_to_improvise():
    backend = MockBackend(ScriptedBehavior([ScriptStep("reply", when_contains="needle")]))
    gateway = ModelGateway(backend)
    with pytest.raises(ScriptMismatch):
        gateway.complete(request("no such token"), CallScope(name="t"))


def test_scope_counts_logical_calls_and_records_digests():
    backend = MockBackend(ScriptedBehavior([ScriptStep("a"), ScriptStep("b")]))
    gateway = ModelGateway(backend)
    scope = CallScope(name="t")
    assert count_calls(scope) == 0
    gateway.complete(request("x"), scope)
    gateway.complete(request("y", temperature=0.3), scope)
    assert count_calls(scope) == 2
    assert scope.calls[0].digest != scope.calls[1].digest
    assert scope.calls[1].temperature == 0.3
    assert scope.calls[0].latency == 0.0  # mock latency is pinned for replay determinism


def test_failed_call_still_counted(tmp_path):
    backend = MockBackend(ScriptedBehavior([]))
    gateway = ModelGateway(backend)
    scope = CallScope(name="t", prompt_dir=tmp_path / "prompts")
    with pytest.raises(ScriptExhausted):
        gateway.complete(request(), scope)
    assert count_calls(scope) == 1


def test_prompt_persistence(tmp_path):
    backend = MockBackend(ScriptedBehavior([ScriptStep("ok")]))
    gateway = ModelGateway(backend)
    scope = CallScope(name="t", prompt_dir=tmp_path / "prompts")
    gateway.complete(ChatRequest(messages=[("system", "sys"), ("user", "usr")]), scope)
    files = sorted((tmp_path / "prompts").glob("call-*.txt"))
    assert len(files) == 1
    text = files[0].read_text()
    assert "[system]\nsys" in text and "[user]\nusr" in text


def test_load_mock_script_yaml(tmp_path):
    script_path = tmp_path / "script.yaml"
    script_path.write_text(
        "steps:\n"
        "  - response: |\n"
        "      first reply\n"
        "  - response: second\n"
        "    when_contains: marker\n"
    )
    script = load_mock_script(script_path)
    assert script.steps[0].response.rstrip() == "first reply"
    assert script.steps[1].when_contains == "marker"


# --- live backend behind a stub server ------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    statuses: list[int] = []
    seen_payloads: list[dict] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _StubHandler.seen_payloads.append(json.loads(self.rfile.read(length)))
        status = _StubHandler.statuses.pop(0) if _StubHandler.statuses else 200
        if status != 200:
            self.send_response(status)
            self.end_headers()
            return
        body = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": "live reply"}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # quiet
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.statuses = []
    _StubHandler.seen_payloads = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def test_http_backend_retries_transient_failures(stub_server):
    _StubHandler.statuses = [429, 429, 200]
    backend = HttpChatBackend(stub_server, api_key="k", model="m", backoff=0.01)
    gateway = ModelGateway(backend)
    scope = CallScope(name="t")
    assert gateway.complete(request("please"), scope) == "live reply"
    assert count_calls(scope) == 1  # retries collapse into one logical call
    assert len(_StubHandler.seen_payloads) == 3


def test_http_backend_gives_up_after_three_attempts(stub_server):
    _StubHandler.statuses = [500, 500, 500]
    backend = HttpChatBackend(stub_server, api_key="k", model="m", backoff=0.01)
    with pytest.raises(BackendUnavailable):
        backend.complete(request())


def test_http_backend_payload_shape(stub_server):
    backend = HttpChatBackend(stub_server, api_key="k", model="fixture-model")
    backend.complete(ChatRequest(messages=[("system", "s"), ("user", "u")], temperature=0.6))
    payload = _StubHandler.seen_payloads[-1]
    assert payload["model"] == "fixture-model"
    assert payload["temperature"] == 0.6
    assert payload["messages"][0] == {"role": "system", "content": "s"}


def test_temperature_unsupported_backend_drops_field_and_multisamples(stub_server):
    backend = HttpChatBackend(stub_server, api_key="k", model="m", supports_temperature=False)
    backend.complete(request(temperature=0.6))
    assert "temperature" not in _StubHandler.seen_payloads[-1]

    _StubHandler.seen_payloads = []
    backend.multi_sample(request(), n=3)
    assert len(_StubHandler.seen_payloads) == 1  # single request using the n parameter
    assert _StubHandler.seen_payloads[0]["n"] == 3
