/**
 * End-to-end against a real environment service: spawns `vitac serve` and
 * drives one short training burst over TCP.  Skipped when the Python side
 * is not installed.
 */

import { spawn, spawnSync } from "node:child_process";
import { describe, expect, it } from "vitest";

import { encodeObservation, flattenState, stateSize } from "../src/observation.js";
import { EnvClient } from "../src/protocol.js";
import { TD3 } from "../src/td3.js";

const PORT = 7893;

function haveServer(): boolean {
  const probe = spawnSync("python3", ["-c", "import vitacsim"], { timeout: 30000 });
  return probe.status === 0;
}

const enabled = haveServer();

describe.skipIf(!enabled)("service integration", () => {
  it(
    "collects transitions and trains against the live service",
    async () => {
      const server = spawn("python3", [
        "-m", "vitacsim.cli", "serve", "--addr", `127.0.0.1:${PORT}`, "--privileged",
      ]);
      try {
        await new Promise<void>((resolve, reject) => {
          const timer = setTimeout(() => reject(new Error("server start timeout")), 60000);
          server.stdout.on("data", (chunk: Buffer) => {
            if (chunk.toString().includes("listening")) {
              clearTimeout(timer);
              resolve();
            }
          });
          server.on("exit", () => reject(new Error("server exited early")));
        });

        const client = await EnvClient.connect("127.0.0.1", PORT);
        const hello = await client.request<{ version: string; tasks: string[] }>({ type: "hello" });
        expect(hello.version).toBe("v1");
        expect(hello.tasks).toContain("lock");

        const config = {
          rand_xy_mm: 1.5,
          rand_z_mm: 1.5,
          gel_subdivisions: [3, 2, 1],
          noise: { pixel_sigma: 0.0, dropout_prob: 0.0 },
        };
        const agent = new TD3(
          { actionDim: 3, maxAction: [1, 1, 1], privDim: 3, featureDim: 16, withVision: false, seed: 0 },
          { batchSize: 16, seed: 0 },
        );
        const buffer = agent.makeBuffer(stateSize(false));

        let reset = await client.reset("lock", 0, config);
        expect(reset.type).toBe("observation");
        let state = flattenState(encodeObservation(reset.observation, false));
        let priv = Float32Array.from((reset.diagnostics["gt_offset"] as number[]).slice(0, 3));

        // one-step dry run: exactly one correctly shaped transition
        const first = await client.step([0.2, -0.1, -0.5]);
        const firstState = flattenState(encodeObservation(first.observation, false));
        buffer.push({
          state,
          action: Float32Array.from([0.2, -0.1, -0.5]),
          reward: first.reward,
          nextState: firstState,
          done: first.done,
          privileged: priv,
        });
        expect(buffer.size).toBe(1);
        state = firstState;
        priv = Float32Array.from((first.diagnostics["gt_offset"] as number[]).slice(0, 3));

        let result = first;
        for (let step = 0; step < 24; step++) {
          if (result.done) {
            reset = await client.reset("lock", step, config);
            state = flattenState(encodeObservation(reset.observation, false));
            priv = Float32Array.from((reset.diagnostics["gt_offset"] as number[]).slice(0, 3));
          }
          const action = agent.explore(state);
          result = await client.step(Array.from(action));
          const nextState = flattenState(encodeObservation(result.observation, false));
          buffer.push({ state, action, reward: result.reward, nextState, done: result.done, privileged: priv });
          state = nextState;
          priv = Float32Array.from((result.diagnostics["gt_offset"] as number[]).slice(0, 3));
        }
        expect(buffer.size).toBeGreaterThan(20);
        const loss = agent.trainStep(buffer.sample(16, agent.rng));
        expect(Number.isFinite(loss)).toBe(true);
        await client.close();
      } finally {
        server.kill("SIGKILL");
      }
    },
    240000,
  );
});
