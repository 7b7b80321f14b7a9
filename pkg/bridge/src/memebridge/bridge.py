"""Serve a scoring function over the newline-delimited JSON stdio protocol.

The engine side drives the conversation:

    -> {"type": "hello", "version": 1}
    <- {"type": "ready", "name": "<bridge name>"}
    -> {"type": "predict", "req_id": N, "text": str,
        "width": W, "height": H, "image_b64": base64 raw row-major bytes}
    <- {"type": "score", "req_id": N, "score": float in [0, 1]}
    -> {"type": "shutdown"}            (bridge exits 0)

Every response carries its request's req_id, one response per request, in
arrival order. A scorer returning a value outside [0, 1] is a scorer bug
and gets surfaced as an error response, never silently clamped. Unknown or
malformed requests get {"type": "error", "req_id": ..., "message": ...}.
"""

from __future__ import annotations

import base64
import binascii
import json
import sys

PROTOCOL_VERSION = 1


class LengthMismatchError(ValueError):
    pass


def decode_image(width: int, height: int, image_b64: str) -> list[list[int]]:
    """Decode the wire image payload into a row-major pixel grid."""
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, TypeError) as exc:
        raise ValueError(f"invalid base64 image payload: {exc}") from exc
    if len(raw) != width * height:
        raise LengthMismatchError(
            f"decoded {len(raw)} bytes for a {width}x{height} image"
        )
    return [list(raw[r * width : (r + 1) * width]) for r in range(height)]


class BridgeSession:
    """One protocol session over a pair of text streams."""

    def __init__(self, scorer, name: str = "memebridge", stdin=None, stdout=None):
        self.scorer = scorer
        self.name = name
        self.stdin = stdin if stdin is not None else sys.stdin
        self.stdout = stdout if stdout is not None else sys.stdout
        self.requests_served = 0

    def _reply(self, obj: dict) -> None:
        self.stdout.write(json.dumps(obj) + "\n")
        self.stdout.flush()

    def _error(self, req_id, message: str) -> None:
        if not isinstance(req_id, int) or isinstance(req_id, bool):
            req_id = -1
        self._reply({"type": "error", "req_id": req_id, "message": message})

    def _handle_predict(self, msg: dict) -> None:
        req_id = msg.get("req_id")
        if not isinstance(req_id, int) or isinstance(req_id, bool):
            self._error(req_id, "predict request needs an integer req_id")
            return
        try:
            text = msg["text"]
            width = int(msg["width"])
            height = int(msg["height"])
            raw = base64.b64decode(msg["image_b64"], validate=True)
        except (KeyError, TypeError, ValueError, binascii.Error) as exc:
            self._error(req_id, f"malformed predict request: {exc}")
            return
        if len(raw) != width * height:
            self._error(req_id, f"image payload is {len(raw)} bytes, "
                                f"expected {width * height}")
            return
        try:
            score = self.scorer(text, width, height, raw)
        except Exception as exc:  # scorer bug; keep serving
            self._error(req_id, f"scorer raised {type(exc).__name__}: {exc}")
            return
        if not isinstance(score, (int, float)) or isinstance(score, bool) \
                or not 0.0 <= float(score) <= 1.0:
            self._error(req_id, f"scorer returned {score!r}, outside the range [0, 1]")
            return
        self.requests_served += 1
        self._reply({"type": "score", "req_id": req_id, "score": float(score)})

    def run(self) -> int:
        """Serve until shutdown (returns 0) or closed input (returns 1)."""
        for line in self.stdin:
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                self._error(-1, f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(msg, dict):
                self._error(-1, "request is not a JSON object")
                continue
            kind = msg.get("type")
            if kind == "hello":
                if msg.get("version") != PROTOCOL_VERSION:
                    self._error(msg.get("req_id", -1),
                                f"unsupported protocol version {msg.get('version')!r}")
                    continue
                self._reply({"type": "ready", "name": self.name})
            elif kind == "predict":
                self._handle_predict(msg)
            elif kind == "shutdown":
                return 0
            else:
                self._error(msg.get("req_id", -1), f"unknown message type {kind!r}")
        return 1  # input closed without a shutdown message


def serve(scorer, name: str = "memebridge", stdin=None, stdout=None) -> int:
    """Run a session on standard streams; returns the process exit code."""
    try:
        return BridgeSession(scorer, name, stdin, stdout).run()
    except BrokenPipeError:
        return 1
