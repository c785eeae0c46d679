/**
 * Deterministic (noise-free) rollout of a checkpointed actor; the summary
 * mirrors the primary harness's evaluate table.
 *
 *   npm run eval -- --checkpoint runs/td3/ckpt_50000.json --episodes 20
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadCheckpoint } from "./checkpoint.js";
import { PolicyNetworks } from "./networks.js";
import { encodeObservation, flattenState } from "./observation.js";
import { EnvClient } from "./protocol.js";
import * as tf from "@tensorflow/tfjs";

export interface EvalResult {
  episodes: number;
  successes: number;
  meanSteps: number;
  meanReturn: number;
  statuses: Record<string, number>;
}

export async function evaluatePolicy(
  nets: PolicyNetworks,
  task: string,
  client: EnvClient,
  episodes: number,
  seeds: number[],
  config: Record<string, unknown>,
): Promise<EvalResult> {
  const withVision = nets.config.withVision;
  const result: EvalResult = { episodes: 0, successes: 0, meanSteps: 0, meanReturn: 0, statuses: {} };
  let totalSteps = 0;
  let totalReturn = 0;
  for (let e = 0; e < episodes; e++) {
    const seed = seeds[e] ?? e;
    let reset = await client.reset(task, seed, config);
    let state = flattenState(encodeObservation(reset.observation, withVision));
    let steps = 0;
    let ret = 0;
    for (;;) {
      const action = tf.tidy(() => {
        const s = tf.tensor2d(state, [1, state.length]);
        return (nets.act(s).arraySync() as number[][])[0];
      });
      const r = await client.step(action);
      state = flattenState(encodeObservation(r.observation, withVision));
      steps += 1;
      ret += r.reward;
      if (r.done) {
        result.statuses[r.status] = (result.statuses[r.status] ?? 0) + 1;
        if (r.status === "success") result.successes += 1;
        break;
      }
    }
    result.episodes += 1;
    totalSteps += steps;
    totalReturn += ret;
  }
  result.meanSteps = totalSteps / Math.max(result.episodes, 1);
  result.meanReturn = totalReturn / Math.max(result.episodes, 1);
  return result;
}

export function summaryTable(task: string, policy: string, r: EvalResult): string {
  const statuses = Object.entries(r.statuses)
    .sort()
    .map(([k, v]) => `${k}=${v}`)
    .join(" ");
  return [
    `task: ${task}  policy: ${policy}`,
    `episodes: ${r.episodes}  aborted: 0`,
    `success rate: ${(r.successes / Math.max(r.episodes, 1)).toFixed(3)}`,
    `mean steps: ${r.meanSteps.toFixed(2)}`,
    `mean reward: ${r.meanReturn.toFixed(4)}`,
    `terminal statuses: ${statuses || "none"}`,
  ].join("\n");
}

const isMain = process.argv[1] && process.argv[1].endsWith("evalPolicy.js");
if (isMain) {
  const argv = yargs(hideBin(process.argv))
    .option("host", { type: "string", default: "127.0.0.1" })
    .option("port", { type: "number", default: 7481 })
    .option("checkpoint", { type: "string", demandOption: true })
    .option("episodes", { type: "number", default: 20 })
    .option("seed-base", { type: "number", default: 5000 })
    .option("full-randomization", { type: "boolean", default: false })
    .parseSync();
  (async () => {
    const { nets, task } = loadCheckpoint(argv.checkpoint);
    if (argv.episodes === 0) {
      console.log(summaryTable(task, "td3", { episodes: 0, successes: 0, meanSteps: 0, meanReturn: 0, statuses: {} }));
      return;
    }
    const client = await EnvClient.connect(argv.host, argv.port);
    const { episodeConfig } = await import("./train.js");
    const seeds = Array.from({ length: argv.episodes }, (_, i) => argv["seed-base"] + i);
    const res = await evaluatePolicy(
      nets, task, client, argv.episodes, seeds, episodeConfig(argv["full-randomization"]),
    );
    console.log(summaryTable(task, "td3", res));
    await client.close();
  })().catch((err) => {
    console.error(err);
    process.exit(1);
  });
}
