/**
 * Twin-Delayed DDPG over the environment service's observations.
 *
 * Standard recipe: twin critics trained on clipped-double-Q targets with
 * smoothed target actions, delayed actor updates through the shared
 * encoders, Polyak-averaged target networks.  The critics consume the
 * privileged ground-truth offsets; the actor never sees them.
 */

import * as tf from "@tensorflow/tfjs";

import { NetConfig, PolicyNetworks, hardUpdate, softUpdate } from "./networks.js";
import { ReplayBuffer, TransitionBatch, makeRng } from "./replayBuffer.js";

export interface TrainerConfig {
  replayCapacity: number;
  batchSize: number;
  discount: number;
  tau: number;
  policyDelay: number;
  explorationNoise: number;
  targetNoise: number;
  targetNoiseClip: number;
  actorLr: number;
  criticLr: number;
  seed: number;
}

export const DEFAULT_TRAINER: TrainerConfig = {
  replayCapacity: 200_000,
  batchSize: 128,
  discount: 0.99,
  tau: 0.005,
  policyDelay: 2,
  explorationNoise: 0.2,
  targetNoise: 0.2,
  targetNoiseClip: 0.5,
  actorLr: 3e-4,
  criticLr: 3e-4,
  seed: 0,
};

export class TD3 {
  readonly online: PolicyNetworks;
  readonly target: PolicyNetworks;
  readonly config: TrainerConfig;
  readonly netConfig: NetConfig;
  private criticOpt: tf.Optimizer;
  private actorOpt: tf.Optimizer;
  private updates = 0;
  readonly rng: () => number;

  constructor(netConfig: NetConfig, config: Partial<TrainerConfig> = {}) {
    this.config = { ...DEFAULT_TRAINER, ...config };
    this.netConfig = netConfig;
    this.online = new PolicyNetworks(netConfig);
    this.target = new PolicyNetworks({ ...netConfig, seed: netConfig.seed + 1000 });
    hardUpdate(this.target, this.online);
    this.criticOpt = tf.train.adam(this.config.criticLr);
    this.actorOpt = tf.train.adam(this.config.actorLr);
    this.rng = makeRng(this.config.seed ^ 0x51ed);
  }

  /** Exploration action for one flat state. */
  explore(state: Float32Array): Float32Array {
    const caps = this.netConfig.maxAction;
    const out = tf.tidy(() => {
      const s = tf.tensor2d(state, [1, state.length]);
      return (this.online.act(s) as tf.Tensor2D).arraySync() as number[][];
    })[0];
    for (let i = 0; i < out.length; i++) {
      const noise = gaussian(this.rng) * this.config.explorationNoise * caps[i];
      out[i] = Math.min(caps[i], Math.max(-caps[i], out[i] + noise));
    }
    return Float32Array.from(out);
  }

  /** Deterministic action for one flat state. */
  act(state: Float32Array): Float32Array {
    const out = tf.tidy(() => {
      const s = tf.tensor2d(state, [1, state.length]);
      return (this.online.act(s) as tf.Tensor2D).arraySync() as number[][];
    })[0];
    return Float32Array.from(out);
  }

  /** One gradient step on a batch; returns the critic TD loss. */
  trainStep(batch: TransitionBatch): number {
    this.updates += 1;
    const caps = this.netConfig.maxAction;
    const cfg = this.config;
    const b = batch.size;
    const stateDim = batch.states.length / b;
    const privDim = batch.privileged.length / b;
    const actionDim = batch.actions.length / b;

    const states = tf.tensor2d(batch.states, [b, stateDim]);
    const nextStates = tf.tensor2d(batch.nextStates, [b, stateDim]);
    const actions = tf.tensor2d(batch.actions, [b, actionDim]);
    const rewards = tf.tensor2d(batch.rewards, [b, 1]);
    const dones = tf.tensor2d(batch.dones, [b, 1]);
    const privileged = tf.tensor2d(batch.privileged, [b, privDim]);

    const targetQ = tf.tidy(() => {
      const nextAction = this.target.act(nextStates);
      const noiseVals = new Float32Array(b * actionDim);
      for (let i = 0; i < noiseVals.length; i++) {
        const raw = gaussian(this.rng) * cfg.targetNoise;
        noiseVals[i] = Math.min(cfg.targetNoiseClip, Math.max(-cfg.targetNoiseClip, raw));
      }
      const capsT = tf.tensor2d([caps]);
      const smoothed = nextAction
        .add(tf.tensor2d(noiseVals, [b, actionDim]).mul(capsT))
        .minimum(capsT)
        .maximum(capsT.neg()) as tf.Tensor2D;
      const nextFeats = this.target.features(nextStates);
      const [q1, q2] = this.target.criticValues(nextFeats, privileged, smoothed);
      const minQ = tf.minimum(q1, q2);
      return rewards.add(minQ.mul(cfg.discount).mul(tf.scalar(1).sub(dones)));
    });

    const criticVars = this.online.criticWeights();
    const lossVal = this.criticOpt.minimize(
      () => {
        const feats = this.online.features(states);
        const [q1, q2] = this.online.criticValues(feats, privileged, actions);
        const loss1 = q1.sub(targetQ).square().mean();
        const loss2 = q2.sub(targetQ).square().mean();
        return loss1.add(loss2) as tf.Scalar;
      },
      true,
      criticVars,
    ) as tf.Scalar;
    const loss = lossVal.arraySync() as number;
    lossVal.dispose();

    if (this.updates % cfg.policyDelay === 0) {
      const actorVars = this.online.actorWeights();
      const actorLoss = this.actorOpt.minimize(
        () => {
          const feats = this.online.features(states);
          const action = (this.online.actorHead.apply(feats) as tf.Tensor2D).mul(
            tf.tensor2d([caps]),
          ) as tf.Tensor2D;
          const [q1] = this.online.criticValues(feats, privileged, action);
          return q1.mean().neg() as tf.Scalar;
        },
        true,
        actorVars,
      ) as tf.Scalar;
      actorLoss.dispose();
      softUpdate(this.target, this.online, cfg.tau);
    }

    targetQ.dispose();
    states.dispose();
    nextStates.dispose();
    actions.dispose();
    rewards.dispose();
    dones.dispose();
    privileged.dispose();
    return loss;
  }

  makeBuffer(stateSize: number): ReplayBuffer {
    return new ReplayBuffer(
      this.config.replayCapacity,
      stateSize,
      this.netConfig.actionDim,
      this.netConfig.privDim,
    );
  }
}

let spare: number | null = null;

export function gaussian(rng: () => number): number {
  if (spare !== null) {
    const v = spare;
    spare = null;
    return v;
  }
  let u = 0;
  let v = 0;
  while (u === 0) u = rng();
  while (v === 0) v = rng();
  const mag = Math.sqrt(-2.0 * Math.log(u));
  spare = mag * Math.sin(2.0 * Math.PI * v);
  return mag * Math.cos(2.0 * Math.PI * v);
}
