/**
 * Client side of the environment service's wire protocol (v1).
 *
 * Newline-delimited JSON over TCP; array fields are base64 little-endian
 * buffers with declared dtype and shape.
 */

import * as net from "node:net";

export interface WireArray {
  dtype: "<f4" | "<i4" | "|u1";
  shape: number[];
  data: string;
}

export interface MarkerFlowPayload {
  initial: WireArray;
  current: WireArray;
  valid: WireArray;
}

export interface ObservationPayload {
  relative_motion: number[];
  marker_flow_left: MarkerFlowPayload;
  marker_flow_right: MarkerFlowPayload;
  rgb_picture?: WireArray;
  depth_picture?: WireArray;
  point_cloud?: { points: WireArray; labels: WireArray };
}

export interface StepResultPayload {
  type: "step-result";
  observation: ObservationPayload;
  reward: number;
  done: boolean;
  status: string;
  diagnostics: Record<string, unknown>;
}

export interface ResetPayload {
  type: "observation";
  observation: ObservationPayload;
  diagnostics: Record<string, unknown>;
}

export function decodeArray(wire: WireArray): { data: Float32Array | Int32Array | Uint8Array; shape: number[] } {
  const raw = Buffer.from(wire.data, "base64");
  const bytes = new Uint8Array(raw.buffer, raw.byteOffset, raw.byteLength).slice();
  let data: Float32Array | Int32Array | Uint8Array;
  if (wire.dtype === "<f4") {
    data = new Float32Array(bytes.buffer);
  } else if (wire.dtype === "<i4") {
    data = new Int32Array(bytes.buffer);
  } else {
    data = bytes;
  }
  return { data, shape: wire.shape };
}

export function encodeArray(data: Float32Array, shape: number[]): WireArray {
  const bytes = new Uint8Array(data.buffer, data.byteOffset, data.byteLength);
  return { dtype: "<f4", shape, data: Buffer.from(bytes).toString("base64") };
}

/** Blocking-style request/response client over one TCP connection. */
export class EnvClient {
  private socket: net.Socket;
  private buffer = "";
  private waiters: Array<(line: string) => void> = [];

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.setEncoding("utf8");
    socket.on("data", (chunk: string) => {
      this.buffer += chunk;
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        const waiter = this.waiters.shift();
        if (waiter) waiter(line);
      }
    });
  }

  static connect(host: string, port: number, timeoutMs = 20000): Promise<EnvClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port });
      const timer = setTimeout(() => reject(new Error("connect timeout")), timeoutMs);
      socket.once("connect", () => {
        clearTimeout(timer);
        resolve(new EnvClient(socket));
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  request<T = Record<string, unknown>>(message: Record<string, unknown>, timeoutMs = 600000): Promise<T> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("request timeout")), timeoutMs);
      this.waiters.push((line) => {
        clearTimeout(timer);
        try {
          const parsed = JSON.parse(line);
          if (parsed.type === "error") {
            reject(new Error(`server error ${parsed.code}: ${parsed.message}`));
          } else {
            resolve(parsed as T);
          }
        } catch (err) {
          reject(err);
        }
      });
      this.socket.write(JSON.stringify(message) + "\n");
    });
  }

  async reset(task: string, seed: number, config: Record<string, unknown> = {}): Promise<ResetPayload> {
    return this.request<ResetPayload>({ type: "reset", task, seed, config });
  }

  async step(action: number[]): Promise<StepResultPayload> {
    return this.request<StepResultPayload>({ type: "step", action });
  }

  async close(): Promise<void> {
    try {
      await this.request({ type: "close" }, 2000);
    } catch {
      // server may already have gone away
    }
    this.socket.destroy();
  }
}
