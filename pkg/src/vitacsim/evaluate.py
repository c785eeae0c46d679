"""Seeded multi-episode evaluation of builtin policies, with logs.

Episodes are independent given their seeds, so they can be distributed over
worker processes; per-seed results are identical to a sequential run and are
aggregated in seed order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agents import Policy
from .config import EnvConfig
from .envs import make_env
from .episode_log import EpisodeRecorder
from .errors import VitacError

_worker_env = None
_worker_config = None


def _worker_init(config_dict):
    global _worker_env, _worker_config
    from .config import EnvConfig

    _worker_config = EnvConfig.from_dict(config_dict)
    _worker_env = make_env(_worker_config)


def _worker_episode(args):
    policy_kind, seed, gain, log_path = args
    return _run_episode(_worker_env, _worker_config, policy_kind, seed, gain, log_path)


def _run_episode(env, config, policy_kind, seed, gain, log_path):
    policy = Policy(policy_kind, config.task, config.max_action, seed=seed, gain=gain)
    recorder = EpisodeRecorder(env, log_path) if log_path else None
    stepper = recorder if recorder else env
    try:
        obs, diag = stepper.reset(seed)
        total_reward = 0.0
        while True:
            action = policy(obs, diag)
            result = stepper.step(action)
            total_reward += result.reward
            obs, diag = result.observation, result.diagnostics
            if result.done:
                break
        return {"seed": seed, "status": result.status, "steps": env.t, "reward": total_reward}
    except VitacError as exc:
        if recorder:
            recorder.close("aborted")
        return {"seed": seed, "status": "aborted", "steps": env.t, "reward": 0.0, "error": str(exc)}


@dataclass
class EvalSummary:
    task: str
    policy: str
    episodes: int = 0
    successes: int = 0
    aborted: int = 0
    steps: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    statuses: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        done = self.episodes - self.aborted
        return self.successes / done if done else 0.0

    def table(self) -> str:
        lines = [
            f"task: {self.task}  policy: {self.policy}",
            f"episodes: {self.episodes}  aborted: {self.aborted}",
            f"success rate: {self.success_rate:.3f}",
        ]
        if self.steps:
            lines.append(f"mean steps: {np.mean(self.steps):.2f}")
            lines.append(f"mean reward: {np.mean(self.rewards):.4f}")
        counts = " ".join(f"{k}={v}" for k, v in sorted(self.statuses.items()))
        lines.append(f"terminal statuses: {counts or 'none'}")
        return "\n".join(lines)


def evaluate(policy_kind: str, task: str, n_episodes: int, seeds=None,
             config: EnvConfig = None, log_dir=None, gain: float = 1.0,
             progress=None, workers: int = 1) -> EvalSummary:
    """Run seeded episodes of a builtin policy and summarize the outcomes.

    ``seeds`` defaults to range(n_episodes).  When ``log_dir`` is given each
    episode is recorded as ``episode_<seed>.jsonl`` for later replay.
    ``workers`` > 1 runs episodes in parallel processes.
    """
    from .config import default_task_config

    config = config if config is not None else default_task_config(task)
    if config.task != task:
        raise VitacError(f"config task {config.task!r} != requested {task!r}")
    seeds = list(range(n_episodes)) if seeds is None else list(seeds)[:n_episodes]
    summary = EvalSummary(task, policy_kind)
    if n_episodes == 0:
        return summary
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)

    def log_path(seed):
        return os.path.join(log_dir, f"episode_{seed}.jsonl") if log_dir else None

    if workers > 1:
        jobs = [(policy_kind, seed, gain, log_path(seed)) for seed in seeds]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(config.to_dict(),)
        ) as pool:
            outcomes = list(pool.map(_worker_episode, jobs))
    else:
        env = make_env(config)
        outcomes = [
            _run_episode(env, config, policy_kind, seed, gain, log_path(seed))
            for seed in seeds
        ]

    for out in outcomes:
        summary.episodes += 1
        if out["status"] == "aborted":
            summary.aborted += 1
        else:
            summary.statuses[out["status"]] = summary.statuses.get(out["status"], 0) + 1
            if out["status"] == "success":
                summary.successes += 1
            summary.steps.append(out["steps"])
            summary.rewards.append(out["reward"])
        if progress:
            progress(out["seed"], summary)
    return summary
