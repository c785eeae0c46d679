"""
Driving the environment service and replaying its logs
=======================================================

Everything an external agent needs: start a server, speak the ndjson
protocol over TCP, record an episode log, and verify the log replays with
zero divergence.  The same flow works from any language that can write
JSON lines to a socket.
"""

import json
import threading

import numpy as np

from vitacsim import EnvConfig, default_task_config, make_env
from vitacsim.agents import Policy
from vitacsim.episode_log import EpisodeRecorder, replay
from vitacsim.protocol import decode_array
from vitacsim.server import EnvironmentServer, ProtocolClient

# -- serve + drive over TCP ----------------------------------------------------

server = EnvironmentServer(("127.0.0.1", 0), EnvConfig(), privileged=True)
thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.1})
thread.daemon = True
thread.start()
host, port = server.server_address
print(f"server on {host}:{port}")

client = ProtocolClient(host, port)
print("hello ->", client.request({"type": "hello"}))

obs = client.request({"type": "reset", "task": "lock", "seed": 42, "config": {}})
flow = decode_array(obs["observation"]["marker_flow_left"]["initial"])
print(f"reset: marker flow shape {flow.shape}, "
      f"privileged offset {np.round(obs['diagnostics']['gt_offset'], 2)} mm")

# a crude remote policy: descend and center using the privileged channel
for step in range(12):
    gt = obs["diagnostics"]["gt_offset"] if "diagnostics" in obs else result["diagnostics"]["gt_offset"]
    action = np.clip([-gt[0], -gt[1], -gt[2]], -1, 1).tolist()
    result = client.request({"type": "step", "action": action})
    obs = result
    print(f"  t={step + 1} reward={result['reward']:+.3f} status={result['status']}")
    if result["done"]:
        break
client.close()
server.shutdown()
server.server_close()

# -- record + replay ------------------------------------------------------------

config = default_task_config("lock")
env = make_env(config)
recorder = EpisodeRecorder(env, "demo_episode.jsonl")
policy = Policy("oracle", "lock", config.max_action, seed=42)
o, d = recorder.reset(42)
while True:
    r = recorder.step(policy(o, d))
    o, d = r.observation, r.diagnostics
    if r.done:
        break
print(f"\nrecorded demo_episode.jsonl ({env.t} steps, {r.status})")

report = replay("demo_episode.jsonl")
print(f"replay: ok={report.ok}, {report.steps_checked} steps checked bit-exactly")

with open("demo_episode.jsonl") as f:
    header = json.loads(f.readline())
print(f"log header pins config hash {header['config_hash']} and seed {header['seed']}")
