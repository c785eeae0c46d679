/**
 * Weight checkpoints as plain JSON: base64 float32 blobs per layer weight,
 * plus the network configuration needed to rebuild the architecture.
 */

import * as fs from "node:fs";

import * as tf from "@tensorflow/tfjs";

import { NetConfig, PolicyNetworks } from "./networks.js";

interface WeightBlob {
  shape: number[];
  data: string;
}

export interface Checkpoint {
  netConfig: NetConfig;
  task: string;
  models: WeightBlob[][];
  steps: number;
}

function blobFromTensor(t: tf.Tensor): WeightBlob {
  const data = t.dataSync() as Float32Array;
  const bytes = new Uint8Array(data.buffer, data.byteOffset, data.byteLength);
  return { shape: t.shape.slice(), data: Buffer.from(bytes).toString("base64") };
}

function tensorFromBlob(b: WeightBlob): tf.Tensor {
  const raw = Buffer.from(b.data, "base64");
  const f = new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
  return tf.tensor(f, b.shape);
}

export function saveCheckpoint(path: string, nets: PolicyNetworks, task: string, steps: number): void {
  const models = nets.allModels().map((m) => m.getWeights().map(blobFromTensor));
  const ckpt: Checkpoint = { netConfig: nets.config, task, models, steps };
  fs.writeFileSync(path, JSON.stringify(ckpt));
}

export function loadCheckpoint(path: string): { nets: PolicyNetworks; task: string; steps: number } {
  const ckpt = JSON.parse(fs.readFileSync(path, "utf8")) as Checkpoint;
  const nets = new PolicyNetworks(ckpt.netConfig);
  const models = nets.allModels();
  if (models.length !== ckpt.models.length) {
    throw new Error("checkpoint does not match this architecture");
  }
  models.forEach((m, i) => {
    const weights = ckpt.models[i].map(tensorFromBlob);
    m.setWeights(weights);
    weights.forEach((w) => w.dispose());
  });
  return { nets, task: ckpt.task, steps: ckpt.steps };
}
