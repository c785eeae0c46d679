import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";

import { stateSize } from "../src/observation.js";
import { PolicyNetworks, softUpdate, weightDistance } from "../src/networks.js";
import { TD3, gaussian } from "../src/td3.js";
import { ReplayBuffer, makeRng } from "../src/replayBuffer.js";

const NET = {
  actionDim: 3,
  maxAction: [1.0, 1.0, 1.0],
  privDim: 3,
  featureDim: 32,
  withVision: false,
  seed: 3,
};

function frozenBuffer(agent: TD3, n = 512): ReplayBuffer {
  const size = stateSize(false);
  const buf = agent.makeBuffer(size);
  const rng = makeRng(42);
  for (let i = 0; i < n; i++) {
    const state = Float32Array.from({ length: size }, () => 2 * rng() - 1);
    const nextState = Float32Array.from({ length: size }, () => 2 * rng() - 1);
    const action = Float32Array.from({ length: 3 }, () => 2 * rng() - 1);
    const priv = Float32Array.from({ length: 3 }, () => 2 * rng() - 1);
    // a learnable signal: reward depends on state and action
    const reward = state[0] + 0.5 * action[0] - 0.2 * Math.abs(action[1]);
    buf.push({ state, action, reward, nextState, done: rng() < 0.1, privileged: priv });
  }
  return buf;
}

beforeAll(async () => {
  await tf.setBackend("cpu");
});

describe("TD3 sanity", () => {
  it("critic TD loss strictly decreases over 100 updates on a frozen buffer", () => {
    const agent = new TD3(NET, { batchSize: 64, policyDelay: 1_000_000, seed: 1 });
    const buffer = frozenBuffer(agent);
    const sampleRng = makeRng(9);
    const losses: number[] = [];
    for (let i = 0; i < 100; i++) {
      losses.push(agent.trainStep(buffer.sample(64, sampleRng)));
    }
    const first = losses.slice(0, 10).reduce((a, b) => a + b) / 10;
    const last = losses.slice(-10).reduce((a, b) => a + b) / 10;
    expect(last).toBeLessThan(first);
    // strict decrease of the smoothed trend across the run
    const mid = losses.slice(45, 55).reduce((a, b) => a + b) / 10;
    expect(mid).toBeLessThan(first);
    expect(last).toBeLessThan(mid);
  }, 120000);

  it("the two tactile branches share one weight set after every update", () => {
    const agent = new TD3(NET, { batchSize: 32, policyDelay: 1, seed: 2 });
    const buffer = frozenBuffer(agent, 128);
    const rng = makeRng(3);
    const probe = tf.randomUniform([5, 128, 4], -1, 1, "float32", 11);
    for (let i = 0; i < 10; i++) {
      agent.trainStep(buffer.sample(32, rng));
      // identical inputs through the "left" and "right" branch give identical
      // outputs because both branches are the same encoder instance
      const a = agent.online.tactileEncoder.apply(probe) as tf.Tensor;
      const b = agent.online.tactileEncoder.apply(probe) as tf.Tensor;
      const diff = tf.tidy(() => a.sub(b).abs().max().arraySync() as number);
      expect(diff).toBe(0);
      a.dispose();
      b.dispose();
    }
    probe.dispose();
  }, 120000);

  it("actor outputs stay inside the action box for 10^4 random inputs", () => {
    const nets = new PolicyNetworks({ ...NET, maxAction: [1.0, 0.5, 2.0] });
    const size = stateSize(false);
    const batch = tf.randomUniform([10_000, size], -3, 3, "float32", 7) as tf.Tensor2D;
    const actions = nets.act(batch);
    const caps = [1.0, 0.5, 2.0];
    const maxima = tf.tidy(() => actions.abs().max(0).arraySync() as number[]);
    maxima.forEach((m, i) => expect(m).toBeLessThanOrEqual(caps[i] + 1e-6));
    batch.dispose();
    actions.dispose();
  }, 120000);

  it("target networks move toward the online networks under soft updates", () => {
    const agent = new TD3(NET, { batchSize: 32, policyDelay: 1, seed: 5 });
    const buffer = frozenBuffer(agent, 128);
    const rng = makeRng(8);
    for (let i = 0; i < 4; i++) agent.trainStep(buffer.sample(32, rng));
    // freeze online weights, run only soft updates: distance must shrink
    let prev = weightDistance(agent.target, agent.online);
    for (let i = 0; i < 3; i++) {
      softUpdate(agent.target, agent.online, 0.2);
      const d = weightDistance(agent.target, agent.online);
      expect(d).toBeLessThan(prev);
      prev = d;
    }
  }, 120000);

  it("gaussian noise generator is seeded and roughly standard", () => {
    const rng = makeRng(12);
    const xs = Array.from({ length: 20000 }, () => gaussian(rng));
    const mean = xs.reduce((a, b) => a + b) / xs.length;
    const varc = xs.reduce((a, b) => a + b * b, 0) / xs.length - mean * mean;
    expect(Math.abs(mean)).toBeLessThan(0.03);
    expect(Math.abs(varc - 1)).toBeLessThan(0.05);
  });
});
