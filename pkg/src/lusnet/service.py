"""Offline NDJSON-over-TCP inference service and its client helper.

Wire protocol: UTF-8 JSON objects, one per line, LF-terminated.

    request:  {"id": "...", "image_pgm_b64": "<base64 binary PGM>"}
    success:  {"id", "label", "probabilities": {"covid": p, "healthy": q},
               "latency_ms"}
    error:    {"id", "error_code", "message"}

Error codes: "bad_request" (malformed JSON / missing fields; connection
stays open), "bad_image" (payload does not decode to a valid PGM; stays
open), "too_large" (line over 8 MiB; connection closed), "busy" (server at
its concurrent-connection cap; connection closed). Unknown request fields
are ignored. Weights are loaded once, shared read-only across handlers,
and never mutated while serving.
"""
from __future__ import annotations

import base64
import binascii
import json
import socket
import socketserver
import threading

from .arch import NetworkSpec
from .errors import DataError, LusnetError, PgmError
from .imaging import decode_pgm, preprocess_for_net
from .network import forward
from .tensor import Mode
from .weights_io import WeightStore

MAX_LINE_BYTES = 8 * 1024 * 1024
RECV_CHUNK = 65536


def handle_request_line(
    line: bytes, spec: NetworkSpec, store: WeightStore, mode: Mode, two_stage: bool = True
) -> dict:
    """Pure request -> response mapping used by both server and tests."""
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return {"id": "", "error_code": "bad_request", "message": "line is not valid JSON"}
    if not isinstance(obj, dict):
        return {"id": "", "error_code": "bad_request", "message": "request must be an object"}
    req_id = obj.get("id")
    if not isinstance(req_id, str) or not req_id:
        return {"id": "", "error_code": "bad_request", "message": "missing or empty id"}
    payload = obj.get("image_pgm_b64")
    if not isinstance(payload, str):
        return {"id": req_id, "error_code": "bad_request", "message": "missing image_pgm_b64"}
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        return {"id": req_id, "error_code": "bad_request", "message": "invalid base64"}
    try:
        img = decode_pgm(raw)
        target = (spec.input_dims[0], spec.input_dims[1])
        image = preprocess_for_net(img, target, two_stage)
    except PgmError as exc:
        return {"id": req_id, "error_code": "bad_image", "message": str(exc)}
    except LusnetError as exc:
        return {"id": req_id, "error_code": "bad_image", "message": str(exc)}
    prediction = forward(spec, store, image, mode)
    return {
        "id": req_id,
        "label": prediction.label,
        "probabilities": prediction.probabilities,
        "latency_ms": prediction.latency_s * 1e3,
    }


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: InferenceServer = self.server.owner
        if not server.slots.acquire(blocking=False):
            self._send({"id": "", "error_code": "busy", "message": "connection limit reached"})
            return
        try:
            buffer = bytearray()
            while True:
                newline = buffer.find(b"\n")
                if newline < 0:
                    if len(buffer) > MAX_LINE_BYTES:
                        self._send(
                            {"id": "", "error_code": "too_large", "message": "line over 8 MiB"}
                        )
                        return
                    chunk = self.request.recv(RECV_CHUNK)
                    if not chunk:
                        return
                    buffer += chunk
                    continue
                line = bytes(buffer[:newline]).strip(b"\r")
                del buffer[: newline + 1]
                if not line:
                    continue
                if len(line) > MAX_LINE_BYTES:
                    self._send(
                        {"id": "", "error_code": "too_large", "message": "line over 8 MiB"}
                    )
                    return
                response = handle_request_line(
                    line, server.spec, server.store, server.mode, server.two_stage
                )
                server.count_request()
                self._send(response)
        except (ConnectionError, OSError):
            pass
        finally:
            server.slots.release()

    def _send(self, obj: dict) -> None:
        try:
            self.request.sendall(json.dumps(obj).encode("utf-8") + b"\n")
        except (ConnectionError, OSError):
            pass


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class InferenceServer:
    """Owns the listening socket; spec and weights are shared immutable."""

    def __init__(
        self,
        spec: NetworkSpec,
        store: WeightStore,
        bind: tuple[str, int] = ("127.0.0.1", 0),
        max_concurrent: int = 16,
        mode: Mode = Mode.FAST,
        two_stage: bool = True,
    ):
        if spec.input_dims is None or len(spec.input_dims) != 3:
            raise DataError("serving needs a network with (H, W, 1) input dims")
        self.spec = spec
        self.store = store
        self.mode = mode
        self.two_stage = two_stage
        self.slots = threading.Semaphore(max_concurrent)
        self._lock = threading.Lock()
        self.requests_served = 0
        self._tcp = _TcpServer(bind, _Handler)
        self._tcp.owner = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address[:2]

    def count_request(self) -> None:
        with self._lock:
            self.requests_served += 1

    def start(self) -> tuple[str, int]:
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()
        return self.address

    def run_blocking(self) -> None:
        self._tcp.serve_forever()

    def shutdown(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(
    bind_address: tuple[str, int],
    spec: NetworkSpec,
    store: WeightStore,
    max_concurrent: int = 16,
    mode: Mode = Mode.FAST,
    two_stage: bool = True,
) -> InferenceServer:
    """Blocking entry point; returns only after shutdown (KeyboardInterrupt)."""
    server = InferenceServer(spec, store, bind_address, max_concurrent, mode, two_stage)
    try:
        server.run_blocking()
    except KeyboardInterrupt:
        pass
    finally:
        server._tcp.server_close()
    return server


def client_classify(
    address: tuple[str, int],
    image_path,
    request_id: str,
    timeout: float = 30.0,
) -> dict:
    """Send one classification request for a PGM file; returns the response."""
    from pathlib import Path

    payload = base64.b64encode(Path(image_path).read_bytes()).decode("ascii")
    request = {"id": request_id, "image_pgm_b64": payload}
    with socket.create_connection(address, timeout=timeout) as sock:
        sock.sendall(json.dumps(request).encode("utf-8") + b"\n")
        response = bytearray()
        while b"\n" not in response:
            chunk = sock.recv(RECV_CHUNK)
            if not chunk:
                raise DataError("connection closed before a response line arrived")
            response += chunk
    line = bytes(response[: response.find(b"\n")])
    return json.loads(line.decode("utf-8"))
