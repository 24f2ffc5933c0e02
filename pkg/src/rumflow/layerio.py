"""Line-protocol boundary for hosting the projection as a differentiable layer.

A host process (any language) spawns ``python3 -m rumflow.layerio`` and
exchanges one JSON object per line on stdin/stdout. Forward calls return
opaque integer context tokens; the converged solver state they reference
lives in an in-process registry until freed, so batched backward passes
never round-trip solver internals through the host.

Requests
--------
{"op": "init", "n": 3, "observed_sets": null | ["0x3", ...], "options": {...}}
    -> {"ok": true, "handle": 1, "num_pairs": 12, "num_reduced": 5}
{"op": "forward", "handle": 1, "batch": [[...N floats...], ...]}
    -> {"ok": true, "rho_star": [[...]], "distance_sq": [...],
        "converged": [...], "context": [7, 8, ...]}
       (context entry is null for non-converged items; the item is flagged,
        not fatal)
{"op": "backward", "handle": 1, "context": [7, 8], "grad": [[...], ...]}
    -> {"ok": true, "grad_input": [[...], ...]}
{"op": "free", "context": [7, 8]}       -> {"ok": true, "freed": 2}
{"op": "close_handle", "handle": 1}      -> {"ok": true, "freed": <contexts>}
{"op": "shutdown"}                       -> {"ok": true} and the process exits

Errors: {"ok": false, "code": <code>, "message": ...} with codes
bad_request, unknown_handle, stale_context, invalid_input, backward_failed.
Numbers are serialized as shortest round-trip decimals, so both sides hold
bit-identical float64 values.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .adjoint import BackwardRequest, BackwardSolveError, backward
from .ipm import IpmOptions
from .lattice import LatticeError, build_indexer
from .projection import ProjectionResult, project

_OPTION_KEYS = ("tau", "mu_tol", "residual_tol", "max_iter")


@dataclass
class _Handle:
    indexer: object
    mask: ops.ObservationMask
    options: IpmOptions


class _ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class LayerServer:
    """Request dispatcher plus handle/context registries."""

    def __init__(self):
        self._handles: dict[int, _Handle] = {}
        self._contexts: dict[int, tuple[int, ProjectionResult]] = {}
        self._next_handle = 1
        self._next_context = 1

    # -- registry helpers --

    def _handle(self, req) -> tuple[int, _Handle]:
        hid = req.get("handle")
        if not isinstance(hid, int) or hid not in self._handles:
            raise _ProtocolError("unknown_handle", f"no such handle: {hid!r}")
        return hid, self._handles[hid]

    def _batch(self, req, key: str, width: int) -> np.ndarray:
        rows = req.get(key)
        if not isinstance(rows, list):
            raise _ProtocolError("bad_request", f"{key} must be a list of rows")
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim == 1 and arr.shape[0] == 0:
            arr = arr.reshape(0, width)
        if arr.ndim != 2 or arr.shape[1] != width:
            raise _ProtocolError(
                "invalid_input",
                f"{key} must be shaped (batch, {width}), got {list(arr.shape)}",
            )
        return arr

    # -- operations --

    def op_init(self, req) -> dict:
        try:
            indexer = build_indexer(int(req.get("n", 0)))
        except (LatticeError, TypeError, ValueError) as err:
            raise _ProtocolError("bad_request", str(err)) from None
        observed = req.get("observed_sets")
        if observed is None:
            mask = ops.full_mask(indexer)
        else:
            try:
                sets = frozenset(int(s, 16) if isinstance(s, str) else int(s) for s in observed)
                mask = ops.ObservationMask(indexer, sets)
            except (ValueError, ops.OperatorError) as err:
                raise _ProtocolError("bad_request", str(err)) from None
        raw_opts = req.get("options") or {}
        unknown = set(raw_opts) - set(_OPTION_KEYS)
        if unknown:
            raise _ProtocolError("bad_request", f"unknown options: {sorted(unknown)}")
        try:
            options = IpmOptions(**{k: raw_opts[k] for k in raw_opts})
        except (TypeError, ValueError) as err:
            raise _ProtocolError("bad_request", str(err)) from None
        hid = self._next_handle
        self._next_handle += 1
        self._handles[hid] = _Handle(indexer=indexer, mask=mask, options=options)
        return {
            "ok": True,
            "handle": hid,
            "num_pairs": indexer.num_pairs,
            "num_reduced": indexer.num_reduced,
        }

    def op_forward(self, req) -> dict:
        hid, handle = self._handle(req)
        batch = self._batch(req, "batch", handle.indexer.num_pairs)
        rho_star, distance, converged, context = [], [], [], []
        for row in batch:
            try:
                res = project(handle.indexer, row, handle.mask, handle.options)
            except (ops.OperatorError, RuntimeError) as err:
                raise _ProtocolError("invalid_input", str(err)) from None
            converged.append(bool(res.converged))
            rho_star.append([float(x) for x in res.rho_star])
            distance.append(float(res.distance_sq))
            if res.converged:
                cid = self._next_context
                self._next_context += 1
                self._contexts[cid] = (hid, res)
                context.append(cid)
            else:
                context.append(None)
        return {
            "ok": True,
            "rho_star": rho_star,
            "distance_sq": distance,
            "converged": converged,
            "context": context,
        }

    def op_backward(self, req) -> dict:
        hid, handle = self._handle(req)
        tokens = req.get("context")
        if not isinstance(tokens, list):
            raise _ProtocolError("bad_request", "context must be a list of tokens")
        grads = self._batch(req, "grad", handle.indexer.num_pairs)
        if len(tokens) != len(grads):
            raise _ProtocolError(
                "bad_request",
                f"{len(tokens)} context tokens for {len(grads)} gradient rows",
            )
        out = []
        for tok, grad in zip(tokens, grads):
            entry = self._contexts.get(tok) if isinstance(tok, int) else None
            if entry is None or entry[0] != hid:
                raise _ProtocolError(
                    "stale_context", f"context token {tok!r} does not match handle {hid}"
                )
            try:
                g = backward(
                    handle.indexer,
                    BackwardRequest(entry[1], grad, handle.mask),
                )
            except BackwardSolveError as err:
                raise _ProtocolError("backward_failed", str(err)) from None
            except ValueError as err:
                raise _ProtocolError("invalid_input", str(err)) from None
            out.append([float(x) for x in g])
        return {"ok": True, "grad_input": out}

    def op_free(self, req) -> dict:
        tokens = req.get("context")
        if not isinstance(tokens, list):
            raise _ProtocolError("bad_request", "context must be a list of tokens")
        freed = 0
        for tok in tokens:
            if isinstance(tok, int) and self._contexts.pop(tok, None) is not None:
                freed += 1
        return {"ok": True, "freed": freed}

    def op_close_handle(self, req) -> dict:
        hid, _ = self._handle(req)
        del self._handles[hid]
        stale = [tok for tok, (owner, _) in self._contexts.items() if owner == hid]
        for tok in stale:
            del self._contexts[tok]
        return {"ok": True, "freed": len(stale)}

    @property
    def live_contexts(self) -> int:
        return len(self._contexts)

    def dispatch(self, req: dict) -> tuple[dict, bool]:
        """Returns (response, keep_running)."""
        if not isinstance(req, dict) or "op" not in req:
            return {"ok": False, "code": "bad_request", "message": "missing op"}, True
        op = req["op"]
        try:
            if op == "init":
                return self.op_init(req), True
            if op == "forward":
                return self.op_forward(req), True
            if op == "backward":
                return self.op_backward(req), True
            if op == "free":
                return self.op_free(req), True
            if op == "close_handle":
                return self.op_close_handle(req), True
            if op == "shutdown":
                return {"ok": True}, False
            return (
                {"ok": False, "code": "bad_request", "message": f"unknown op {op!r}"},
                True,
            )
        except _ProtocolError as err:
            return {"ok": False, "code": err.code, "message": str(err)}, True


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = LayerServer()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as err:
            resp = {"ok": False, "code": "bad_request", "message": f"bad JSON: {err}"}
            keep = True
        else:
            resp, keep = server.dispatch(req)
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
        if not keep:
            return 0
    return 0


def main() -> int:
    return serve()


if __name__ == "__main__":
    sys.exit(main())
