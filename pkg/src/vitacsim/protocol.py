"""Wire protocol v1: newline-delimited JSON with base64 array fields.

Requests: hello, reset(task, seed, config), step(action), close.
Responses: hello-ack, observation, step-result, error.  Arrays travel as
little-endian buffers with declared dtype and shape, so any client language
can reconstruct them without a numpy dependency.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .errors import ProtocolError

PROTOCOL_VERSION = "v1"
TASKS = ("peg", "lock", "fusion")
CAPABILITIES = ("privileged-diagnostics", "vision", "replay")

_DTYPES = {"<f4": np.float32, "<i4": np.int32, "|u1": np.uint8}


def encode_array(a) -> dict:
    a = np.asarray(a)
    if a.dtype == np.float64 or a.dtype == np.float32:
        a = a.astype("<f4")
        code = "<f4"
    elif a.dtype == np.bool_ or a.dtype == np.uint8:
        a = a.astype("|u1")
        code = "|u1"
    else:
        a = a.astype("<i4")
        code = "<i4"
    return {
        "dtype": code,
        "shape": list(a.shape),
        "data": base64.b64encode(np.ascontiguousarray(a).tobytes()).decode("ascii"),
    }


def decode_array(d: dict) -> np.ndarray:
    try:
        dtype = _DTYPES[d["dtype"]]
        raw = base64.b64decode(d["data"])
        return np.frombuffer(raw, dtype=dtype).reshape(d["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise ProtocolError("bad-array", f"malformed array field: {exc}") from exc


def flow_payload(flow) -> dict:
    return {
        "initial": encode_array(flow.initial),
        "current": encode_array(flow.current),
        "valid": encode_array(flow.valid),
    }


def observation_payload(obs) -> dict:
    payload = {
        "relative_motion": [float(v) for v in obs.relative_motion],
        "marker_flow_left": flow_payload(obs.marker_flow_left),
        "marker_flow_right": flow_payload(obs.marker_flow_right),
    }
    if obs.rgb_picture is not None:
        payload["rgb_picture"] = encode_array(obs.rgb_picture)
    if obs.depth_picture is not None:
        payload["depth_picture"] = encode_array(obs.depth_picture)
    if obs.point_cloud is not None:
        payload["point_cloud"] = {
            "points": encode_array(obs.point_cloud.points),
            "labels": encode_array(obs.point_cloud.labels),
        }
    return payload


def filter_diagnostics(diag: dict, privileged: bool) -> dict:
    if privileged:
        return diag
    return {k: v for k, v in diag.items() if k not in ("gt_offset", "pair_errors_mm")}


def step_result_payload(result, privileged: bool) -> dict:
    return {
        "type": "step-result",
        "observation": observation_payload(result.observation),
        "reward": result.reward,
        "done": result.done,
        "status": result.status,
        "diagnostics": filter_diagnostics(result.diagnostics, privileged),
    }


def hello_ack_payload() -> dict:
    return {
        "type": "hello-ack",
        "version": PROTOCOL_VERSION,
        "tasks": list(TASKS),
        "capabilities": list(CAPABILITIES),
    }


def error_payload(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


def encode_message(msg: dict) -> bytes:
    return (json.dumps(msg) + "\n").encode("utf-8")


def decode_message(line) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError("bad-json", f"cannot parse message: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("bad-message", "message must be an object with a 'type'")
    return msg


def validate_request(msg: dict) -> dict:
    kind = msg["type"]
    if kind == "hello":
        return msg
    if kind == "reset":
        if msg.get("task") not in TASKS:
            raise ProtocolError("unknown-task", f"task must be one of {TASKS}")
        if not isinstance(msg.get("seed", 0), int):
            raise ProtocolError("bad-message", "seed must be an integer")
        if not isinstance(msg.get("config", {}), dict):
            raise ProtocolError("bad-message", "config overrides must be an object")
        return msg
    if kind == "step":
        action = msg.get("action")
        if not isinstance(action, list) or not all(isinstance(v, (int, float)) for v in action):
            raise ProtocolError("bad-message", "action must be a list of numbers")
        return msg
    if kind == "close":
        return msg
    raise ProtocolError("bad-message", f"unknown request type {kind!r}")
