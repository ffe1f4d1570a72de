"""Stdio worker exposing sketchers to external processes.

Wire protocol, request and reply alike: one JSON header per line, then
exactly ``frames`` binary vectors in the SKVB framing immediately after.
The worker always consumes a message's declared frames before acting on
it, so framing stays aligned even across refused requests.  Failures
reply with ``error`` and a stable ``code`` and never kill the worker.

Ops: ping, build (spec object -> handle), forward, transpose, close,
shutdown, and hvp_sketch.  The last one needs the caller's model: the
worker sends back an interim header with ``callback: "hvp"`` plus the
lifted vector, and waits for a ``callback_result`` message carrying
H times that vector.  While waiting it keeps serving regular commands,
so a client may e.g. run forwards on other handles from inside its own
HVP callback.

Run as ``python -m gradsketch.serve``.
"""

from __future__ import annotations

import json
import sys

import numpy as np

from . import skvb
from .sketch import SketchSpec, build_sketcher


class ProtocolError(Exception):
    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


class Worker:
    def __init__(self, inp, out):
        self._in = inp
        self._out = out
        self._sketchers: dict[int, object] = {}
        self._next_handle = 1

    # -- transport ----------------------------------------------------

    def _send(self, doc: dict, frames=()):
        doc = dict(doc)
        doc["frames"] = len(frames)
        self._out.write(json.dumps(doc, separators=(",", ":")).encode() + b"\n")
        for arr in frames:
            self._out.write(skvb.dump_vector(arr))
        self._out.flush()

    def _read_message(self) -> tuple[dict, list[np.ndarray]] | None:
        """Header line plus its declared frames; None at end of stream."""
        line = self._in.readline()
        if not line:
            return None
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"bad header: {e}", "bad-header") from None
        if not isinstance(doc, dict):
            raise ProtocolError("header must be a JSON object", "bad-header")
        count = doc.get("frames", 0)
        if not isinstance(count, int) or count < 0:
            raise ProtocolError("frames must be a non-negative integer", "bad-header")
        frames = []
        for _ in range(count):
            try:
                vec = skvb.read_vector(self._in)
            except ValueError as e:
                raise ProtocolError(f"bad frame: {e}", "bad-frame") from None
            if vec is None:
                raise ProtocolError("stream ended inside frames", "truncated")
            frames.append(vec)
        return doc, frames

    # -- dispatch -----------------------------------------------------

    def serve_forever(self) -> int:
        while True:
            try:
                msg = self._read_message()
            except ProtocolError as e:
                self._send({"ok": False, "error": str(e), "code": e.code})
                continue
            if msg is None:
                return 0
            if self._dispatch(*msg) == "shutdown":
                return 0

    def _dispatch(self, doc, frames, in_callback: bool = False) -> str | None:
        op = doc.get("op")
        rid = doc.get("id")
        base = {} if rid is None else {"id": rid}
        try:
            if op == "ping":
                self._send({**base, "ok": True, "op": "ping"})
            elif op == "build":
                self._op_build(doc, base)
            elif op == "forward":
                self._op_apply(doc, base, frames, "forward")
            elif op == "transpose":
                self._op_apply(doc, base, frames, "transpose")
            elif op == "hvp_sketch":
                self._op_hvp(doc, base, frames)
            elif op == "close":
                self._op_close(doc, base)
            elif op == "shutdown":
                if in_callback:
                    raise ProtocolError(
                        "cannot shut down while a callback is pending", "busy"
                    )
                self._send({**base, "ok": True, "op": "shutdown"})
                return "shutdown"
            elif op == "callback_result":
                # only meaningful inside _op_hvp's wait loop
                raise ProtocolError("no callback is pending", "bad-op")
            else:
                raise ProtocolError(f"unknown op {op!r}", "bad-op")
        except ProtocolError as e:
            self._send({**base, "ok": False, "error": str(e), "code": e.code})
        except ValueError as e:
            self._send({**base, "ok": False, "error": str(e), "code": "invalid"})
        return None

    def _handle(self, doc):
        h = doc.get("handle")
        sk = self._sketchers.get(h)
        if sk is None:
            raise ProtocolError(f"unknown or released handle {h!r}", "bad-handle")
        return sk

    def _op_build(self, doc, base):
        spec_doc = doc.get("spec")
        if not isinstance(spec_doc, dict):
            raise ProtocolError("build needs a spec object", "invalid")
        spec = SketchSpec.from_json(json.dumps(spec_doc))
        sk = build_sketcher(spec)
        h = self._next_handle
        self._next_handle += 1
        self._sketchers[h] = sk
        self._send({**base, "ok": True, "handle": h, "n": sk.n, "d": sk.d})

    def _op_apply(self, doc, base, frames, direction):
        sk = self._handle(doc)
        if len(frames) != 1:
            raise ProtocolError(f"{direction} takes exactly one frame", "invalid")
        out = getattr(sk, direction)(np.asarray(frames[0], dtype=np.float64))
        self._send({**base, "ok": True}, [out])

    def _op_close(self, doc, base):
        h = doc.get("handle")
        if self._sketchers.pop(h, None) is None:
            raise ProtocolError(f"unknown or released handle {h!r}", "bad-handle")
        self._send({**base, "ok": True})

    def _op_hvp(self, doc, base, frames):
        sk = self._handle(doc)
        if len(frames) != 1:
            raise ProtocolError("hvp_sketch takes exactly one frame", "invalid")
        lifted = sk.transpose(np.asarray(frames[0], dtype=np.float64))
        self._send({**base, "ok": True, "callback": "hvp"}, [lifted])
        while True:
            msg = self._read_message()
            if msg is None:
                raise ProtocolError("stream ended during callback", "truncated")
            inner, inner_frames = msg
            if inner.get("op") == "callback_result":
                if len(inner_frames) != 1:
                    raise ProtocolError(
                        "callback_result takes exactly one frame", "invalid"
                    )
                hv = np.asarray(inner_frames[0], dtype=np.float64)
                break
            # nested regular traffic while the client computes its HVP
            self._dispatch(inner, inner_frames, in_callback=True)
        self._send({**base, "ok": True}, [sk.forward(hv)])


def main() -> int:
    return Worker(sys.stdin.buffer, sys.stdout.buffer).serve_forever()


if __name__ == "__main__":
    sys.exit(main())
