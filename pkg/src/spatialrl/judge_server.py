"""Local HTTP judge speaking the remote-judge wire protocol.

POST /judge accepts the multipart request the client sends (prompt text,
layout stats JSON, optional image) and answers the deterministic stub
grades computed from the stats. GET /health reports the version.
"""

from __future__ import annotations

import email
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import __version__
from .judge import DEFAULT_COLOR_SCHEME_GRADE, stub_grades


class JudgeRequestError(ValueError):
    pass


def parse_multipart(content_type: str, body: bytes) -> dict[str, object]:
    """Form fields from a multipart/form-data body; file parts stay bytes."""
    message = email.message_from_bytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    if not message.is_multipart():
        raise JudgeRequestError("expected a multipart body")
    fields: dict[str, object] = {}
    for part in message.get_payload():
        name = part.get_param("name", header="content-disposition")
        if not name:
            continue
        payload = part.get_payload(decode=True)
        if payload is None:
            payload = b""
        if part.get_filename():
            fields[name] = payload
        else:
            fields[name] = payload.decode("utf-8", errors="replace")
    return fields


def _ratio(doc: dict, key: str) -> float:
    if key not in doc:
        raise JudgeRequestError(f"stats missing {key!r}")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise JudgeRequestError(f"stats {key!r} must be a number")
    if not (0.0 <= v <= 1.0):
        raise JudgeRequestError(f"stats {key!r} must lie in [0, 1]")
    return float(v)


def grades_for_request(
    fields: dict[str, object], color_scheme_grade: int = DEFAULT_COLOR_SCHEME_GRADE
) -> dict:
    stats_raw = fields.get("stats")
    if not isinstance(stats_raw, str):
        raise JudgeRequestError("request needs a 'stats' field with layout statistics")
    try:
        stats = json.loads(stats_raw)
    except json.JSONDecodeError as exc:
        raise JudgeRequestError(f"stats is not valid JSON ({exc})") from exc
    if not isinstance(stats, dict):
        raise JudgeRequestError("stats must be a JSON object")
    grades = stub_grades(
        _ratio(stats, "collision_ratio"),
        _ratio(stats, "constraint_ratio"),
        color_scheme_grade,
    )
    return grades.to_dict()


class JudgeStubHandler(BaseHTTPRequestHandler):
    color_scheme_grade = DEFAULT_COLOR_SCHEME_GRADE

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 (http.server API)
        if self.path == "/health":
            self._send_json(200, {"version": __version__, "mode": "stub"})
        else:
            self._send_json(404, {"error": f"no such path {self.path!r}"})

    def do_POST(self):  # noqa: N802
        if self.path != "/judge":
            self._send_json(404, {"error": f"no such path {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            content_type = self.headers.get("Content-Type", "")
            if content_type.startswith("multipart/"):
                fields = parse_multipart(content_type, body)
            elif content_type.startswith("application/json"):
                doc = json.loads(body.decode("utf-8"))
                if not isinstance(doc, dict):
                    raise JudgeRequestError("JSON body must be an object")
                fields = {
                    k: (json.dumps(v) if k == "stats" and not isinstance(v, str) else v)
                    for k, v in doc.items()
                }
            else:
                raise JudgeRequestError(
                    f"unsupported content type {content_type!r}"
                )
            grades = grades_for_request(fields, self.color_scheme_grade)
        except (JudgeRequestError, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(200, grades)

    def log_message(self, format, *args):  # quiet by default
        pass


def make_server(port: int) -> ThreadingHTTPServer:
    return ThreadingHTTPServer(("127.0.0.1", port), JudgeStubHandler)


def serve(port: int) -> None:
    server = make_server(port)
    host, bound_port = server.server_address[:2]
    print(json.dumps({"serving": f"http://{host}:{bound_port}", "mode": "stub"}), flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
