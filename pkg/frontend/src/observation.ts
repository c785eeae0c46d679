/**
 * Turning wire observations into the fixed-shape tensors the networks eat.
 *
 * Tactile input per sensor: flowSize rows of [u0, v0, du, dv], pixel
 * coordinates normalized to [-1, 1] and displacements scaled to match.
 * Fusion adds two point clouds (peg and matching-plus-decoy hole walls),
 * each subsampled/padded to a fixed point count.
 */

import { ObservationPayload, decodeArray } from "./protocol.js";

export const FLOW_SIZE = 128;
export const CLOUD_POINTS = 192;

export interface EncodedObs {
  /** [flowSize, 4] per sensor, row-major. */
  left: Float32Array;
  right: Float32Array;
  /** x, y, z in mm / 10, theta in deg / 10. */
  relMotion: Float32Array;
  /** fusion only: [CLOUD_POINTS, 3] camera-frame meters, zero-padded. */
  pegCloud?: Float32Array;
  holeCloud?: Float32Array;
}

const HALF_W = 160.0;
const HALF_H = 120.0;

function flowFeatures(flow: { initial: Float32Array; current: Float32Array }, n: number): Float32Array {
  const out = new Float32Array(n * 4);
  for (let i = 0; i < n; i++) {
    const u0 = flow.initial[2 * i];
    const v0 = flow.initial[2 * i + 1];
    const u1 = flow.current[2 * i];
    const v1 = flow.current[2 * i + 1];
    out[4 * i] = (u0 - HALF_W) / HALF_W;
    out[4 * i + 1] = (v0 - HALF_H) / HALF_H;
    out[4 * i + 2] = (u1 - u0) / 20.0;
    out[4 * i + 3] = (v1 - v0) / 20.0;
  }
  return out;
}

function subsampleCloud(points: Float32Array, labels: Int32Array, target: number, count: number): Float32Array {
  const idx: number[] = [];
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] === target) idx.push(i);
  }
  const out = new Float32Array(count * 3);
  if (idx.length === 0) return out;
  for (let k = 0; k < count; k++) {
    const src = idx[Math.floor((k * idx.length) / count)];
    out[3 * k] = points[3 * src];
    out[3 * k + 1] = points[3 * src + 1];
    out[3 * k + 2] = points[3 * src + 2];
  }
  return out;
}

export function encodeObservation(obs: ObservationPayload, withVision: boolean): EncodedObs {
  const left = {
    initial: decodeArray(obs.marker_flow_left.initial).data as Float32Array,
    current: decodeArray(obs.marker_flow_left.current).data as Float32Array,
  };
  const right = {
    initial: decodeArray(obs.marker_flow_right.initial).data as Float32Array,
    current: decodeArray(obs.marker_flow_right.current).data as Float32Array,
  };
  const rm = obs.relative_motion;
  const encoded: EncodedObs = {
    left: flowFeatures(left, FLOW_SIZE),
    right: flowFeatures(right, FLOW_SIZE),
    relMotion: new Float32Array([rm[0] / 10, rm[1] / 10, rm[2] / 10, rm[3] / 10]),
  };
  if (withVision && obs.point_cloud) {
    const pts = decodeArray(obs.point_cloud.points).data as Float32Array;
    const labels = decodeArray(obs.point_cloud.labels).data as Int32Array;
    encoded.pegCloud = subsampleCloud(pts, labels, 2, CLOUD_POINTS);
    encoded.holeCloud = subsampleCloud(pts, labels, 3, CLOUD_POINTS);
  }
  return encoded;
}

/** Flat feature layout sizes for the replay buffer. */
export function stateSize(withVision: boolean): number {
  const tactile = 2 * FLOW_SIZE * 4 + 4;
  return withVision ? tactile + 2 * CLOUD_POINTS * 3 : tactile;
}

export function flattenState(e: EncodedObs): Float32Array {
  const parts: Float32Array[] = [e.left, e.right, e.relMotion];
  if (e.pegCloud && e.holeCloud) {
    parts.push(e.pegCloud, e.holeCloud);
  }
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Float32Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}
