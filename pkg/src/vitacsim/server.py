"""Environment service: one session per connection, ndjson over TCP or stdio."""

from __future__ import annotations

import socket
import socketserver
import sys
import threading

from .config import EnvConfig
from .envs import make_env
from .errors import ConfigError, ProtocolError, ResetError, VitacError
from .protocol import (
    decode_message,
    encode_message,
    error_payload,
    filter_diagnostics,
    hello_ack_payload,
    observation_payload,
    step_result_payload,
    validate_request,
)


class Session:
    """Protocol state machine owning at most one environment."""

    def __init__(self, base_config: EnvConfig, privileged: bool = False):
        self.base_config = base_config
        self.privileged = privileged
        self.env = None
        self.ready = False
        self.closed = False

    def handle_line(self, line) -> dict:
        """One request in, one response out; protocol errors never kill the session."""
        try:
            msg = validate_request(decode_message(line))
        except ProtocolError as exc:
            return error_payload(exc.code, str(exc))
        kind = msg["type"]
        try:
            if kind == "hello":
                return hello_ack_payload()
            if kind == "reset":
                return self._reset(msg)
            if kind == "step":
                return self._step(msg)
            self.closed = True
            return {"type": "closed"}
        except ProtocolError as exc:
            return error_payload(exc.code, str(exc))
        except ConfigError as exc:
            return error_payload("config-error", str(exc))
        except ResetError as exc:
            self.ready = False
            return error_payload("reset-failed", str(exc))
        except VitacError as exc:
            return error_payload("sim-error", str(exc))

    def _reset(self, msg) -> dict:
        task = msg["task"]
        overrides = dict(msg.get("config", {}))
        if task != self.base_config.task and "max_steps" not in overrides:
            overrides["max_steps"] = None  # re-resolve the per-task default
        overrides["task"] = task
        config = self.base_config.merged(overrides)
        if self.env is None or self.env.config.to_dict() != config.to_dict():
            self.env = make_env(config)
        obs, diag = self.env.reset(msg.get("seed", 0))
        self.ready = True
        return {
            "type": "observation",
            "observation": observation_payload(obs),
            "diagnostics": filter_diagnostics(diag, self.privileged),
        }

    def _step(self, msg) -> dict:
        if not self.ready or self.env is None:
            raise ProtocolError("not-reset", "step before reset")
        result = self.env.step(msg["action"])
        if result.done:
            self.ready = False
        return step_result_payload(result, self.privileged)


def run_stdio_session(config: EnvConfig, privileged=False, stdin=None, stdout=None):
    """Serve exactly one session over stdin/stdout; returns on EOF or close."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    session = Session(config, privileged)
    for line in stdin:
        if not line.strip():
            continue
        response = session.handle_line(line)
        stdout.write(encode_message(response))
        stdout.flush()
        if session.closed:
            break


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server = self.server
        if not server.session_slots.acquire(blocking=False):
            self.wfile.write(encode_message(error_payload("busy", "session limit reached")))
            return
        try:
            session = Session(server.base_config, server.privileged)
            for line in self.rfile:
                if not line.strip():
                    continue
                response = session.handle_line(line)
                try:
                    self.wfile.write(encode_message(response))
                except (BrokenPipeError, ConnectionResetError):
                    return
                if session.closed:
                    return
        finally:
            server.session_slots.release()


class EnvironmentServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, config: EnvConfig, privileged=False, max_sessions=8):
        super().__init__(address, _Handler)
        self.base_config = config
        self.privileged = privileged
        self.session_slots = threading.Semaphore(max_sessions)


def serve(address=None, config: EnvConfig = None, privileged=False, max_sessions=8,
          stdio=False, ready_callback=None):
    """Run the environment service until interrupted.

    ``address`` is a ``(host, port)`` tuple for TCP mode; ``stdio=True``
    serves a single session on standard input/output instead.
    """
    config = config if config is not None else EnvConfig()
    if stdio:
        run_stdio_session(config, privileged)
        return
    try:
        server = EnvironmentServer(tuple(address), config, privileged, max_sessions)
    except OSError as exc:
        raise ConfigError(f"cannot bind {address}: {exc}") from exc
    if ready_callback:
        ready_callback(server.server_address)
    try:
        server.serve_forever(poll_interval=0.2)
    finally:
        server.server_close()


class ProtocolClient:
    """Small blocking client used by the evaluation harness and tests."""

    def __init__(self, host, port, timeout=60.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")

    def request(self, msg: dict) -> dict:
        self.file.write(encode_message(msg))
        self.file.flush()
        line = self.file.readline()
        if not line:
            raise ProtocolError("closed", "server closed the connection")
        return decode_message(line)

    def close(self):
        try:
            self.request({"type": "close"})
        except ProtocolError:
            pass
        self.sock.close()
