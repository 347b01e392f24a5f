"""Deterministic offline stand-in for a chat-completions endpoint.

Serves the same POST contract the real client speaks and derives its
"generations" purely from the prompt text, so pipeline runs against it are
reproducible without network access or credentials. Intended for tests and
dry runs; start it with ``python -m caselab.mockllm [port]``.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .tokenization import split_sentences


def _query_payload(prompt: str) -> str:
    # The rendered prompt is "<instructions>\n\n<query text>".
    head, sep, payload = prompt.partition("\n\n")
    return payload if sep else prompt


def _mock_keywords(query_text: str) -> str:
    words = []
    if " " in query_text.strip():
        for token in query_text.split():
            if token not in words:
                words.append(token)
            if len(words) >= 8:
                break
    else:
        for span in split_sentences(query_text)[:8]:
            word = query_text[span.char_start : min(span.char_start + 4, span.char_end)]
            if word and word not in words:
                words.append(word)
    return "，".join(words)


def _mock_key_sentences(query_text: str) -> str:
    spans = split_sentences(query_text)
    picked = [query_text[s.char_start : s.char_end] for s in spans[::2]]
    # Emitted in reverse as a numbered list: exercises downstream realignment.
    return "\n".join(f"{i}. {s}" for i, s in enumerate(reversed(picked), start=1))


def _mock_summary(query_text: str) -> str:
    spans = split_sentences(query_text)
    if not spans:
        return query_text.strip()
    first = query_text[spans[0].char_start : spans[0].char_end]
    last = query_text[spans[-1].char_start : spans[-1].char_end]
    if len(spans) == 1:
        return f"{first}。"
    return f"{first}。{last}。"


def generate(prompt: str) -> str:
    """Deterministic response for a rendered reformulation prompt."""
    payload = _query_payload(prompt)
    if "keyword extraction" in prompt:
        return _mock_keywords(payload)
    if "key sentence" in prompt or "key content extraction" in prompt:
        return _mock_key_sentences(payload)
    if "summary" in prompt:
        return _mock_summary(payload)
    return payload.strip()


class MockLlmHandler(BaseHTTPRequestHandler):
    fail_budget = 0  # set >0 on the server to script transient 503s
    _lock = threading.Lock()

    def do_POST(self):  # noqa: N802 (http.server API)
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        with MockLlmHandler._lock:
            if self.server.fail_budget > 0:
                self.server.fail_budget -= 1
                self.send_response(503)
                self.end_headers()
                return
        prompt = ""
        for message in body.get("messages", []):
            if message.get("role") == "user":
                prompt = message.get("content", "")
        response = {
            "model": body.get("model", "mock"),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": generate(prompt)}}],
        }
        data = json.dumps(response, ensure_ascii=False).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        pass  # keep test output quiet


class MockLlmServer(ThreadingHTTPServer):
    fail_budget = 0

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), MockLlmHandler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"


def start_background(host: str = "127.0.0.1", port: int = 0) -> MockLlmServer:
    server = MockLlmServer(host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


if __name__ == "__main__":
    import sys

    srv = MockLlmServer(port=int(sys.argv[1]) if len(sys.argv) > 1 else 8080)
    print(f"mock LLM listening on {srv.endpoint}")
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
