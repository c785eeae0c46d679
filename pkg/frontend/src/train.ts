/**
 * TD3 training against a running environment service.
 *
 *   vitac serve --addr 127.0.0.1:7481 --privileged     # in another shell
 *   npm run train -- --task peg --steps 50000 --seed 0
 *
 * The reduced benchmark variant (noiseless sensors, +-1.5 mm / +-2 deg
 * randomization) is the default here; pass --full-randomization for the
 * stock episode distribution.  Checkpoints and an ndjson learning curve go
 * to --out-dir.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { saveCheckpoint } from "./checkpoint.js";
import { EncodedObs, encodeObservation, flattenState, stateSize } from "./observation.js";
import { EnvClient, ResetPayload, StepResultPayload } from "./protocol.js";
import { TD3 } from "./td3.js";
import { makeRng } from "./replayBuffer.js";

const TASK_ACTION_DIM: Record<string, number> = { peg: 3, lock: 3, fusion: 4 };
const TASK_PRIV_DIM: Record<string, number> = { peg: 3, lock: 3, fusion: 4 };

export interface TrainArgs {
  host: string;
  port: number;
  task: string;
  steps: number;
  seed: number;
  outDir: string;
  warmup: number;
  fullRandomization: boolean;
  evalEvery: number;
}

function privilegedVector(diag: Record<string, unknown>, dim: number): Float32Array {
  const gt = diag["gt_offset"] as number[] | undefined;
  if (!gt) {
    throw new Error("server must run with --privileged for TD3 training (critic input)");
  }
  const out = new Float32Array(dim);
  for (let i = 0; i < dim && i < gt.length; i++) out[i] = gt[i] / 10.0;
  return out;
}

export function episodeConfig(fullRandomization: boolean): Record<string, unknown> {
  if (fullRandomization) return {};
  // reduced variant: tighter initial randomization, noiseless sensors
  return {
    rand_xy_mm: 1.5,
    rand_theta_deg: 2.0,
    noise: { pixel_sigma: 0.0, dropout_prob: 0.0 },
  };
}

export async function train(args: TrainArgs): Promise<void> {
  const actionDim = TASK_ACTION_DIM[args.task];
  const privDim = TASK_PRIV_DIM[args.task];
  const withVision = args.task === "fusion";
  const maxAction = new Array(actionDim).fill(1.0);

  const agent = new TD3(
    {
      actionDim,
      maxAction,
      privDim,
      featureDim: 64,
      withVision,
      seed: args.seed,
    },
    { seed: args.seed },
  );
  const buffer = agent.makeBuffer(stateSize(withVision));
  const episodeRng = makeRng(args.seed ^ 0xbeef);

  fs.mkdirSync(args.outDir, { recursive: true });
  const curve = fs.createWriteStream(path.join(args.outDir, "learning_curve.jsonl"));

  const client = await EnvClient.connect(args.host, args.port);
  const config = episodeConfig(args.fullRandomization);

  let episode = 0;
  let reset: ResetPayload = await client.reset(args.task, args.seed, config);
  let obs: EncodedObs = encodeObservation(reset.observation, withVision);
  let state = flattenState(obs);
  let priv = privilegedVector(reset.diagnostics, privDim);
  let episodeReturn = 0;
  let lastLoss = NaN;

  for (let step = 1; step <= args.steps; step++) {
    let action: Float32Array;
    if (step <= args.warmup) {
      action = Float32Array.from(maxAction, (cap) => (2 * episodeRng() - 1) * cap);
    } else {
      action = agent.explore(state);
    }
    const result: StepResultPayload = await client.step(Array.from(action));
    const nextObs = encodeObservation(result.observation, withVision);
    const nextState = flattenState(nextObs);
    buffer.push({
      state,
      action,
      reward: result.reward,
      nextState,
      done: result.done,
      privileged: priv,
    });
    priv = privilegedVector(result.diagnostics, privDim);
    episodeReturn += result.reward;
    state = nextState;

    if (buffer.size >= Math.max(args.warmup, agent.config.batchSize)) {
      lastLoss = agent.trainStep(buffer.sample(agent.config.batchSize, agent.rng));
    }

    if (result.done) {
      curve.write(
        JSON.stringify({
          step,
          episode,
          return: episodeReturn,
          status: result.status,
          critic_loss: lastLoss,
        }) + "\n",
      );
      episode += 1;
      episodeReturn = 0;
      const seed = args.seed + 1000 + episode;
      reset = await client.reset(args.task, seed, config);
      obs = encodeObservation(reset.observation, withVision);
      state = flattenState(obs);
      priv = privilegedVector(reset.diagnostics, privDim);
    }

    if (step % args.evalEvery === 0 || step === args.steps) {
      saveCheckpoint(path.join(args.outDir, `ckpt_${step}.json`), agent.online, args.task, step);
      console.log(`step ${step}: episodes ${episode}, critic loss ${lastLoss.toFixed(4)}`);
    }
  }
  curve.close();
  await client.close();
}

const isMain = process.argv[1] && process.argv[1].endsWith("train.js");
if (isMain) {
  const argv = yargs(hideBin(process.argv))
    .option("host", { type: "string", default: "127.0.0.1" })
    .option("port", { type: "number", default: 7481 })
    .option("task", { type: "string", default: "peg", choices: ["peg", "lock", "fusion"] })
    .option("steps", { type: "number", default: 50000 })
    .option("seed", { type: "number", default: 0 })
    .option("out-dir", { type: "string", default: "runs/td3" })
    .option("warmup", { type: "number", default: 500 })
    .option("full-randomization", { type: "boolean", default: false })
    .option("eval-every", { type: "number", default: 2000 })
    .parseSync();
  train({
    host: argv.host,
    port: argv.port,
    task: argv.task,
    steps: argv.steps,
    seed: argv.seed,
    outDir: argv["out-dir"],
    warmup: argv.warmup,
    fullRandomization: argv["full-randomization"],
    evalEvery: argv["eval-every"],
  }).catch((err) => {
    console.error(err);
    process.exit(1);
  });
}
