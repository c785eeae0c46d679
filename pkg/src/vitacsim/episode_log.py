"""Episode logs and exact replay.

A log is newline-delimited JSON: a header carrying the full merged config
(plus its hash, seed, and code version), one record per step with the action
and everything the environment reported, and a footer.  Feeding the logged
actions back into an environment rebuilt from the header reproduces every
logged number bit-for-bit; ``replay`` verifies exactly that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import __version__
from .config import EnvConfig, config_hash
from .envs import make_env
from .errors import ReplayRefusedError
from .protocol import filter_diagnostics


class EpisodeRecorder:
    """Wraps an environment and mirrors every transition into a log file."""

    def __init__(self, env, path):
        self.env = env
        self.path = path
        self._f = None

    def _write(self, record):
        self._f.write(json.dumps(record) + "\n")

    def reset(self, seed):
        if self._f is None:
            self._f = open(self.path, "w")
        obs, diag = self.env.reset(seed)
        self._write(
            {
                "type": "header",
                "version": __version__,
                "task": self.env.task,
                "seed": int(seed),
                "config": self.env.config.to_dict(),
                "config_hash": config_hash(self.env.config),
                "reset_diagnostics": diag,
            }
        )
        return obs, diag

    def step(self, action):
        result = self.env.step(action)
        self._write(
            {
                "type": "step",
                "t": self.env.t,
                "action": [float(a) for a in action],
                "reward": result.reward,
                "status": result.status,
                "done": result.done,
                "diagnostics": result.diagnostics,
            }
        )
        if result.done:
            self.close(result.status)
        return result

    def close(self, status=None):
        if self._f is not None:
            self._write({"type": "footer", "status": status or self.env.status, "steps": self.env.t})
            self._f.close()
            self._f = None


def read_log(path):
    header, steps, footer = None, [], None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["type"] == "header":
                header = rec
            elif rec["type"] == "step":
                steps.append(rec)
            elif rec["type"] == "footer":
                footer = rec
    if header is None:
        raise ReplayRefusedError("log has no header")
    return header, steps, footer


@dataclass
class ReplayReport:
    ok: bool
    steps_checked: int
    divergence_step: int = None
    field: str = None
    message: str = ""


def _first_difference(expected, actual, prefix=""):
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in expected:
            if key not in actual:
                return f"{prefix}{key} (missing)"
            sub = _first_difference(expected[key], actual[key], f"{prefix}{key}.")
            if sub:
                return sub
        return None
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return f"{prefix}length"
        for i, (e, a) in enumerate(zip(expected, actual)):
            sub = _first_difference(e, a, f"{prefix}{i}.")
            if sub:
                return sub
        return None
    if expected != actual:
        return prefix.rstrip(".")
    return None


def replay(path) -> ReplayReport:
    """Re-execute a log and report the first divergence, if any.

    Refuses logs written by a different code version or whose embedded config
    does not match its recorded hash.
    """
    header, steps, footer = read_log(path)
    if header["version"] != __version__:
        raise ReplayRefusedError(
            f"log version {header['version']} != current {__version__}"
        )
    config = EnvConfig.from_dict(header["config"])
    if config_hash(config) != header["config_hash"]:
        raise ReplayRefusedError("config hash mismatch: log or build configuration changed")

    env = make_env(config)
    _, diag0 = env.reset(header["seed"])
    field = _first_difference(header.get("reset_diagnostics", {}), _round_trip(diag0))
    if field:
        return ReplayReport(False, 0, 0, f"reset.{field}", "reset diagnostics diverged")
    for rec in steps:
        result = env.step(rec["action"])
        actual = {
            "reward": result.reward,
            "status": result.status,
            "done": result.done,
            "diagnostics": result.diagnostics,
        }
        expected = {k: rec[k] for k in ("reward", "status", "done", "diagnostics")}
        field = _first_difference(expected, _round_trip(actual))
        if field:
            return ReplayReport(False, rec["t"], rec["t"], field, "step record diverged")
    return ReplayReport(True, len(steps))


def _round_trip(record):
    """Apply the same JSON round trip the log went through."""
    return json.loads(json.dumps(record))
