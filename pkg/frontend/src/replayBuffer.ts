/**
 * Ring-buffer experience replay for continuous actions.
 *
 * Flat typed arrays, constant-time push, uniform seeded sampling.  The
 * privileged ground-truth offset rides along for the critics.
 */

export interface Transition {
  state: Float32Array;
  action: Float32Array;
  reward: number;
  nextState: Float32Array;
  done: boolean;
  privileged: Float32Array;
}

export interface TransitionBatch {
  states: Float32Array;
  actions: Float32Array;
  rewards: Float32Array;
  nextStates: Float32Array;
  dones: Float32Array;
  privileged: Float32Array;
  size: number;
}

/** Deterministic 32-bit PRNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export class ReplayBuffer {
  readonly capacity: number;
  readonly stateSize: number;
  readonly actionDim: number;
  readonly privDim: number;
  private states: Float32Array;
  private actions: Float32Array;
  private rewards: Float32Array;
  private nextStates: Float32Array;
  private dones: Float32Array;
  private privileged: Float32Array;
  private head = 0;
  private count = 0;

  constructor(capacity: number, stateSize: number, actionDim: number, privDim: number) {
    this.capacity = capacity;
    this.stateSize = stateSize;
    this.actionDim = actionDim;
    this.privDim = privDim;
    this.states = new Float32Array(capacity * stateSize);
    this.actions = new Float32Array(capacity * actionDim);
    this.rewards = new Float32Array(capacity);
    this.nextStates = new Float32Array(capacity * stateSize);
    this.dones = new Float32Array(capacity);
    this.privileged = new Float32Array(capacity * privDim);
  }

  get size(): number {
    return this.count;
  }

  push(t: Transition): void {
    if (t.state.length !== this.stateSize || t.nextState.length !== this.stateSize) {
      throw new Error(`state size mismatch: ${t.state.length} != ${this.stateSize}`);
    }
    if (t.action.length !== this.actionDim) {
      throw new Error(`action dim mismatch: ${t.action.length} != ${this.actionDim}`);
    }
    const i = this.head;
    this.states.set(t.state, i * this.stateSize);
    this.actions.set(t.action, i * this.actionDim);
    this.rewards[i] = t.reward;
    this.nextStates.set(t.nextState, i * this.stateSize);
    this.dones[i] = t.done ? 1 : 0;
    this.privileged.set(t.privileged.subarray(0, this.privDim), i * this.privDim);
    this.head = (this.head + 1) % this.capacity;
    this.count = Math.min(this.count + 1, this.capacity);
  }

  sample(batchSize: number, rng: () => number): TransitionBatch {
    if (this.count === 0) throw new Error("cannot sample from an empty buffer");
    const n = Math.min(batchSize, this.count);
    const out: TransitionBatch = {
      states: new Float32Array(n * this.stateSize),
      actions: new Float32Array(n * this.actionDim),
      rewards: new Float32Array(n),
      nextStates: new Float32Array(n * this.stateSize),
      dones: new Float32Array(n),
      privileged: new Float32Array(n * this.privDim),
      size: n,
    };
    for (let k = 0; k < n; k++) {
      const i = Math.floor(rng() * this.count);
      out.states.set(this.states.subarray(i * this.stateSize, (i + 1) * this.stateSize), k * this.stateSize);
      out.actions.set(this.actions.subarray(i * this.actionDim, (i + 1) * this.actionDim), k * this.actionDim);
      out.rewards[k] = this.rewards[i];
      out.nextStates.set(
        this.nextStates.subarray(i * this.stateSize, (i + 1) * this.stateSize),
        k * this.stateSize,
      );
      out.dones[k] = this.dones[i];
      out.privileged.set(this.privileged.subarray(i * this.privDim, (i + 1) * this.privDim), k * this.privDim);
    }
    return out;
  }
}
