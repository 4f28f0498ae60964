"""JSON service for the studio UI: validate graphs, generate scenes, apply
manipulations. Stateless between requests over one immutable loaded model;
per-request determinism comes from the seed in the request body."""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .documents import scene_from_dict, scene_to_dict
from .estimator import SceneGenerator, check_scene_alignment
from .scenegraph import GraphError, change_from_dict, graph_from_dict, validate_graph

MAX_RESPONSE_POINTS = 512


class ServiceError(Exception):
    def __init__(self, status, code, message, report=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.report = report

    def body(self):
        doc = {"code": self.code, "message": str(self)}
        if self.report is not None:
            doc["report"] = self.report
        return doc


class StudioService:
    """Request-level logic, separated from HTTP plumbing for direct testing."""

    def __init__(self, estimator):
        if not estimator.is_fitted_:
            raise ValueError("service needs a fitted or loaded SceneGenerator")
        self.estimator = estimator
        self.vocab = estimator.vocab_

    def _parse_graph(self, body):
        if "graph" not in body:
            raise ServiceError(400, "missing-graph", "request body needs a 'graph' document")
        try:
            g = graph_from_dict(body["graph"], self.vocab)
        except GraphError as err:
            raise ServiceError(400, "malformed-graph", str(err)) from err
        report = validate_graph(g, self.vocab)
        if report:
            raise ServiceError(400, "invalid-graph", "graph failed validation",
                               report=[v.to_dict() for v in report])
        return g

    def vocab_doc(self):
        return self.vocab.to_dict()

    def validate(self, body):
        self._parse_graph(body)
        return {"valid": True, "report": []}

    def generate(self, body, full_points=False):
        g = self._parse_graph(body)
        seed = int(body.get("seed", 0))
        scene = self.estimator.generate(g, seed=seed)
        return {"scene": scene_to_dict(
            scene, self.vocab,
            max_points=None if full_points else MAX_RESPONSE_POINTS)}

    def manipulate(self, body, full_points=False):
        g = self._parse_graph(body)
        for key in ("scene", "change"):
            if key not in body:
                raise ServiceError(400, f"missing-{key}", f"request body needs a {key!r} document")
        try:
            scene = scene_from_dict(body["scene"], self.vocab)
            check_scene_alignment(scene, g)
            change = change_from_dict(body["change"], g, self.vocab)
        except (GraphError, ValueError) as err:
            raise ServiceError(400, "malformed-request", str(err)) from err
        seed = int(body.get("seed", 0))
        out, changed_ids = self.estimator.manipulate(g, scene, change, seed=seed)
        return {
            "scene": scene_to_dict(out, self.vocab,
                                   max_points=None if full_points else MAX_RESPONSE_POINTS),
            "changed_ids": changed_ids,
        }


def make_handler(service):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send(self, status, doc):
            payload = json.dumps(doc, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(payload)))
            self._cors()
            self.end_headers()
            self.wfile.write(payload)

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            route = urlparse(self.path).path
            if route == "/health":
                self._send(200, {"status": "ok"})
            elif route == "/vocab":
                self._send(200, service.vocab_doc())
            else:
                self._send(404, {"code": "not-found", "message": f"no route {route}"})

        def do_POST(self):
            parsed = urlparse(self.path)
            route = parsed.path
            full = parse_qs(parsed.query).get("full", ["0"])[0] in ("1", "true")
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    body = json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as err:
                    raise ServiceError(400, "malformed-json", f"body is not JSON: {err}")
                if route == "/validate":
                    self._send(200, service.validate(body))
                elif route == "/generate":
                    self._send(200, service.generate(body, full_points=full))
                elif route == "/manipulate":
                    self._send(200, service.manipulate(body, full_points=full))
                else:
                    self._send(404, {"code": "not-found", "message": f"no route {route}"})
            except ServiceError as err:
                self._send(err.status, err.body())
            except Exception as err:  # decode or model failure
                self._send(500, {"code": "internal-error", "message": str(err)})

    return Handler


def make_server(estimator, host="127.0.0.1", port=0):
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    service = StudioService(estimator)
    return ThreadingHTTPServer((host, port), make_handler(service))


def serve(checkpoint_path, host="127.0.0.1", port=8765):
    estimator = SceneGenerator.load(checkpoint_path)
    server = make_server(estimator, host=host, port=port)
    print(f"studio service on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
