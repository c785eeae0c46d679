/**
 * Policy and value networks.
 *
 * Both sensors share one tactile encoder instance (a per-marker MLP pooled
 * over the marker set, so the feature is order-invariant); the fusion task
 * adds point-cloud encoders of the same pooled shape.  The actor bounds its
 * output with tanh scaled by the action caps; the twin critics additionally
 * see the privileged ground-truth offset.
 */

import * as tf from "@tensorflow/tfjs";

import { CLOUD_POINTS, FLOW_SIZE } from "./observation.js";

export interface NetConfig {
  actionDim: number;
  maxAction: number[];
  privDim: number;
  featureDim: number;
  withVision: boolean;
  seed: number;
}

function dense(units: number, activation: "relu" | "tanh" | undefined, seed: number): tf.layers.Layer {
  return tf.layers.dense({
    units,
    activation,
    kernelInitializer: tf.initializers.glorotUniform({ seed }),
    biasInitializer: "zeros",
  });
}

/** Shared-weight set encoder: per-element MLP, mean pool, projection. */
export function buildSetEncoder(inputDim: number, nElements: number, featureDim: number, seed: number): tf.LayersModel {
  const input = tf.input({ shape: [nElements, inputDim] });
  let x = tf.layers
    .timeDistributed({ layer: dense(64, "relu", seed) })
    .apply(input) as tf.SymbolicTensor;
  x = tf.layers.timeDistributed({ layer: dense(64, "relu", seed + 1) }).apply(x) as tf.SymbolicTensor;
  const pooled = tf.layers.globalAveragePooling1d({}).apply(x) as tf.SymbolicTensor;
  const feature = dense(featureDim, "relu", seed + 2).apply(pooled) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: feature });
}

export function buildMlp(inputDim: number, outputDim: number, seed: number, tanhHead: boolean): tf.LayersModel {
  const input = tf.input({ shape: [inputDim] });
  let x = dense(256, "relu", seed).apply(input) as tf.SymbolicTensor;
  x = dense(256, "relu", seed + 1).apply(x) as tf.SymbolicTensor;
  const out = dense(outputDim, tanhHead ? "tanh" : undefined, seed + 2).apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: out });
}

export class PolicyNetworks {
  readonly config: NetConfig;
  readonly tactileEncoder: tf.LayersModel; // one instance, applied to both sensors
  readonly cloudEncoder?: tf.LayersModel; // one instance, applied to both clouds
  readonly actorHead: tf.LayersModel;
  readonly critic1: tf.LayersModel;
  readonly critic2: tf.LayersModel;

  constructor(config: NetConfig) {
    this.config = config;
    const k = config.featureDim;
    this.tactileEncoder = buildSetEncoder(4, FLOW_SIZE, k, config.seed);
    let featTotal = 2 * k + 4;
    if (config.withVision) {
      this.cloudEncoder = buildSetEncoder(3, CLOUD_POINTS, k, config.seed + 10);
      featTotal += 2 * k;
    }
    this.actorHead = buildMlp(featTotal, config.actionDim, config.seed + 20, true);
    const criticIn = featTotal + config.privDim + config.actionDim;
    this.critic1 = buildMlp(criticIn, 1, config.seed + 30, false);
    this.critic2 = buildMlp(criticIn, 1, config.seed + 40, false);
  }

  /** Encoder features from a flat state batch [b, stateSize]. */
  features(states: tf.Tensor2D): tf.Tensor2D {
    return tf.tidy(() => {
      const b = states.shape[0];
      const flowLen = FLOW_SIZE * 4;
      const left = states.slice([0, 0], [b, flowLen]).reshape([b, FLOW_SIZE, 4]);
      const right = states.slice([0, flowLen], [b, flowLen]).reshape([b, FLOW_SIZE, 4]);
      const rel = states.slice([0, 2 * flowLen], [b, 4]);
      // the same encoder instance runs both branches: weights shared by construction
      const fl = this.tactileEncoder.apply(left) as tf.Tensor2D;
      const fr = this.tactileEncoder.apply(right) as tf.Tensor2D;
      const parts: tf.Tensor2D[] = [fl, fr, rel as tf.Tensor2D];
      if (this.config.withVision && this.cloudEncoder) {
        const cloudLen = CLOUD_POINTS * 3;
        const peg = states
          .slice([0, 2 * flowLen + 4], [b, cloudLen])
          .reshape([b, CLOUD_POINTS, 3]);
        const hole = states
          .slice([0, 2 * flowLen + 4 + cloudLen], [b, cloudLen])
          .reshape([b, CLOUD_POINTS, 3]);
        parts.push(this.cloudEncoder.apply(peg) as tf.Tensor2D);
        parts.push(this.cloudEncoder.apply(hole) as tf.Tensor2D);
      }
      return tf.concat(parts, 1) as tf.Tensor2D;
    });
  }

  /** Bounded actions for a flat state batch. */
  act(states: tf.Tensor2D): tf.Tensor2D {
    return tf.tidy(() => {
      const feats = this.features(states);
      const raw = this.actorHead.apply(feats) as tf.Tensor2D;
      return raw.mul(tf.tensor2d([this.config.maxAction])) as tf.Tensor2D;
    });
  }

  criticValues(
    feats: tf.Tensor2D,
    privileged: tf.Tensor2D,
    actions: tf.Tensor2D,
  ): [tf.Tensor2D, tf.Tensor2D] {
    const input = tf.concat([feats, privileged, actions], 1);
    const q1 = this.critic1.apply(input) as tf.Tensor2D;
    const q2 = this.critic2.apply(input) as tf.Tensor2D;
    return [q1, q2];
  }

  actorWeights(): tf.Variable[] {
    const models: tf.LayersModel[] = [this.tactileEncoder, this.actorHead];
    if (this.cloudEncoder) models.push(this.cloudEncoder);
    // LayerVariable.val is the live tf.Variable; typed as protected upstream
    return models.flatMap((m) => m.trainableWeights.map((w) => (w as any).val as tf.Variable));
  }

  criticWeights(): tf.Variable[] {
    return [this.critic1, this.critic2].flatMap((m) =>
      m.trainableWeights.map((w) => (w as any).val as tf.Variable),
    );
  }

  allModels(): tf.LayersModel[] {
    const models = [this.tactileEncoder, this.actorHead, this.critic1, this.critic2];
    if (this.cloudEncoder) models.push(this.cloudEncoder);
    return models;
  }
}

/** Copy every weight of src into dst (hard update). */
export function hardUpdate(dst: PolicyNetworks, src: PolicyNetworks): void {
  const d = dst.allModels();
  const s = src.allModels();
  for (let i = 0; i < s.length; i++) {
    d[i].setWeights(s[i].getWeights());
  }
}

/** Polyak-average src into dst: dst <- (1 - tau) dst + tau src. */
export function softUpdate(dst: PolicyNetworks, src: PolicyNetworks, tau: number): void {
  const d = dst.allModels();
  const s = src.allModels();
  tf.tidy(() => {
    for (let i = 0; i < s.length; i++) {
      const mixed = s[i]
        .getWeights()
        .map((w, j) => tf.keep(w.mul(tau).add(d[i].getWeights()[j].mul(1 - tau))));
      d[i].setWeights(mixed);
      mixed.forEach((t) => t.dispose());
    }
  });
}

/** Parameter distance between two network stacks (for target-update tests). */
export function weightDistance(a: PolicyNetworks, b: PolicyNetworks): number {
  const am = a.allModels();
  const bm = b.allModels();
  let total = 0;
  for (let i = 0; i < am.length; i++) {
    const aw = am[i].getWeights();
    const bw = bm[i].getWeights();
    for (let j = 0; j < aw.length; j++) {
      total += tf.tidy(() => aw[j].sub(bw[j]).square().sum().arraySync() as number);
    }
  }
  return Math.sqrt(total);
}
