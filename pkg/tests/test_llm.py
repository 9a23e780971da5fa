import json
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from sgcnet.errors import (
    EmptyInput,
    FixtureMiss,
    HttpBadStatus,
    HttpTimeout,
    MalformedResponse,
    MissingSlot,
    UnknownDescription,
)
from sgcnet.llm import (
    FixtureProvider,
    HttpProvider,
    LlmClient,
    PromptKind,
    ResponseCache,
    StubProvider,
    TextEncoder,
    complete,
    encode_text,
    render_prompt,
    split_features,
)

HOLD_CAT = "What features are useful to distinguish hold cat in a photo?"


class TestPrompts:
    def test_initial(self):
        assert render_prompt(PromptKind.INITIAL, {"HOI category": "hold cat"}) == HOLD_CAT

    def test_summarize(self):
        out = render_prompt(PromptKind.SUMMARIZE, {"category list": "hold cat, hug cat"})
        assert out == "Summarize the following interactions with one sentence: hold cat, hug cat?"

    def test_compare_templates(self):
        assert render_prompt(PromptKind.SUMMARY_COMPARE, {"HOI category": "hold cat",
                                                          "subset description": "cats being held"}) == (
            "What features are useful to distinguish hold cat from cats being held?")
        assert render_prompt(PromptKind.DIRECT_COMPARE, {"target category": "hold cat",
                                                         "other categories": "hug cat, pet cat"}) == (
            "What features are useful to distinguish hold cat from hug cat, pet cat in a photo?")

    def test_missing_slot(self):
        with pytest.raises(MissingSlot):
            render_prompt(PromptKind.INITIAL, {})

    def test_kinds_pairwise_distinct(self):
        b = {"HOI category": "x", "category list": "x", "subset description": "x",
             "target category": "x", "other categories": "x"}
        rendered = {render_prompt(k, b) for k in PromptKind}
        assert len(rendered) == 4


class TestCompletion:
    def test_fixture_then_cache(self):
        client = LlmClient(FixtureProvider({HOLD_CAT: "arm curled around the cat"}))
        first = client.complete(HOLD_CAT)
        second = client.complete(HOLD_CAT)
        assert (first.text, first.cached) == ("arm curled around the cat", False)
        assert (second.text, second.cached) == ("arm curled around the cat", True)
        assert client.calls == [HOLD_CAT]

    def test_fixture_miss(self):
        with pytest.raises(FixtureMiss):
            complete("unknown prompt", FixtureProvider({}))

    def test_fixture_fallback(self):
        out = complete("unknown prompt", FixtureProvider({}, fallback=StubProvider(3)))
        assert out.text == StubProvider(3).generate("unknown prompt")

    def test_stub_deterministic(self):
        a = StubProvider(seed=7).generate(HOLD_CAT)
        b = StubProvider(seed=7).generate(HOLD_CAT)
        assert a == b
        assert a != StubProvider(seed=8).generate(HOLD_CAT)

    def test_disk_cache_survives_new_client(self, tmp_path):
        provider = FixtureProvider({HOLD_CAT: "whiskers"})
        LlmClient(provider, ResponseCache(tmp_path)).complete(HOLD_CAT)
        warm = LlmClient(provider, ResponseCache(tmp_path))
        resp = warm.complete(HOLD_CAT)
        assert resp.cached and resp.text == "whiskers"
        assert warm.calls == []
        files = list(tmp_path.rglob("*.json"))
        assert len(files) == 1 and not list(tmp_path.rglob("*.tmp"))

    def test_complete_many_preserves_order(self):
        table = {f"p{i}": f"r{i}" for i in range(20)}
        client = LlmClient(FixtureProvider(table), max_in_flight=4)
        out = client.complete_many([f"p{i}" for i in range(20)])
        assert [r.text for r in out] == [f"r{i}" for i in range(20)]
        assert sorted(client.calls) == sorted(table)


class _Handler(BaseHTTPRequestHandler):
    behaviour = "ok"
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append((self.path, dict(self.headers), body))
        if self.behaviour == "slow":
            time.sleep(1.0)
        if self.behaviour == "500":
            self.send_response(500)
            self.end_headers()
            return
        payload = {"choices": [{"message": {"role": "assistant", "content": "- tail\n- whiskers"}}]}
        if self.behaviour == "bad":
            payload = {"nothing": True}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv, _Handler
    srv.shutdown()
    srv.server_close()
    _Handler.behaviour = "ok"


class TestHttp:
    def test_request_shape(self, server, monkeypatch):
        srv, handler = server
        monkeypatch.setenv("SGC_LLM_API_KEY", "secret")
        provider = HttpProvider(f"http://127.0.0.1:{srv.server_port}/v1", "gpt-3.5-turbo",
                                params={"temperature": 0.2})
        resp = complete(HOLD_CAT, provider)
        assert resp.text == "- tail\n- whiskers"
        path, headers, body = handler.seen[0]
        assert path == "/v1/chat/completions"
        assert headers["Authorization"] == "Bearer secret"
        assert body == {"model": "gpt-3.5-turbo", "temperature": 0.2,
                        "messages": [{"role": "user", "content": HOLD_CAT}]}

    def test_bad_status(self, server):
        srv, handler = server
        handler.behaviour = "500"
        with pytest.raises(HttpBadStatus):
            complete(HOLD_CAT, HttpProvider(f"http://127.0.0.1:{srv.server_port}", "m", retries=1))
        assert len(handler.seen) == 2

    def test_malformed(self, server):
        srv, handler = server
        handler.behaviour = "bad"
        with pytest.raises(MalformedResponse):
            complete(HOLD_CAT, HttpProvider(f"http://127.0.0.1:{srv.server_port}", "m"))

    def test_deadline(self, server):
        srv, handler = server
        handler.behaviour = "slow"
        start = time.monotonic()
        with pytest.raises(HttpTimeout):
            complete(HOLD_CAT, HttpProvider(f"http://127.0.0.1:{srv.server_port}", "m", timeout=0.2))
        assert time.monotonic() - start < 1.0

    def test_unreachable(self):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        sock.close()
        with pytest.raises(HttpTimeout):
            complete(HOLD_CAT, HttpProvider(f"http://127.0.0.1:{port}", "m", timeout=0.5))


class TestEncoder:
    def test_stub_deterministic_unit(self):
        enc = TextEncoder.stub(32, seed=1)
        a, b = encode_text("arm around cat", enc), encode_text("arm around cat", enc)
        np.testing.assert_array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-9)

    def test_stub_distinct_strings(self):
        enc = TextEncoder.stub(32, seed=0)
        rng = np.random.default_rng(0)
        words = ["cat", "dog", "hold", "ride", "arm", "leg", "tail", "ball", "cup", "sit"]
        strings = sorted({" ".join(rng.choice(words, size=3)) for _ in range(200)})[:100]
        vecs = np.stack([enc.encode(s) for s in strings])
        sims = vecs @ vecs.T
        np.fill_diagonal(sims, -1)
        assert sims.max() < 1 - 1e-6
        # reordering tokens still changes the vector
        assert enc.encode("hold cat").dot(enc.encode("cat hold")) < 1 - 1e-6

    def test_shared_words_are_closer(self):
        enc = TextEncoder.stub(64, seed=0)
        base = enc.encode("saddle mane hooves")
        assert base @ enc.encode("saddle mane reins") > base @ enc.encode("pedals spokes chain")

    def test_file_backed(self):
        enc = TextEncoder.from_table({"fur": [3.0, 4.0]})
        np.testing.assert_allclose(encode_text("fur", enc), [0.6, 0.8])
        with pytest.raises(UnknownDescription):
            encode_text("scales", enc)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            TextEncoder.stub(8).encode("  ")

    def test_split_features(self):
        assert split_features("- a\n* b\n1. c\n\n2) d") == ["a", "b", "c", "d"]
        assert split_features("one sentence") == ["one sentence"]

    def test_answer_is_mean_of_features(self):
        enc = TextEncoder.stub(16, seed=2)
        expected = enc.encode("tail") + enc.encode("whiskers")
        np.testing.assert_allclose(enc.encode_answer("- tail\n- whiskers"),
                                   expected / np.linalg.norm(expected), atol=1e-12)
