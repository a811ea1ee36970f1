// Scoring and advantage calls. Every number returned here is parsed
// straight out of engine output; the bridge never does reward or
// advantage arithmetic (fidelity tests compare raw bytes with direct
// CLI runs).

import { readFile, writeFile } from "node:fs/promises";
import { join } from "node:path";

import {
  AdvantageRecord,
  RewardBreakdown,
  RewardComponents,
  SUPPORTED_DUMP_SCHEMA,
  advantageRecordSchema,
  dumpLineEnvelopeSchema,
  rewardBreakdownSchema,
} from "./schemas.js";
import { BridgeSession, EngineError, runEngine } from "./session.js";

export interface ScoredRollout {
  /** Engine stdout for this roll-out, byte-identical to a direct CLI run. */
  raw: string;
  breakdown: RewardBreakdown;
}

export interface AdvantageResult {
  /** The advantage file exactly as the engine wrote it. */
  raw: string;
  records: AdvantageRecord[];
}

let scratchCounter = 0;

function scratch(session: BridgeSession, name: string): string {
  scratchCounter += 1;
  return join(session.workDir, `${scratchCounter}-${name}`);
}

async function writeTaskFile(
  session: BridgeSession,
  task: object | string,
): Promise<string> {
  if (typeof task === "string") {
    return task; // already a path
  }
  const path = scratch(session, "task.json");
  await writeFile(path, JSON.stringify(task));
  return path;
}

export async function scoreRollouts(
  session: BridgeSession,
  rolloutTexts: string[],
  task: object | string,
): Promise<ScoredRollout[]> {
  if (rolloutTexts.length === 0) {
    return [];
  }
  const taskPath = await writeTaskFile(session, task);
  const results: ScoredRollout[] = [];
  for (const text of rolloutTexts) {
    const rolloutPath = scratch(session, "rollout.txt");
    await writeFile(rolloutPath, text);
    const { stdout } = await runEngine(session, [
      "score",
      "--task",
      taskPath,
      "--rollout",
      rolloutPath,
    ]);
    results.push({ raw: stdout, breakdown: rewardBreakdownSchema.parse(JSON.parse(stdout)) });
  }
  return results;
}

export async function scoreComponents(
  session: BridgeSession,
  components: RewardComponents,
): Promise<ScoredRollout> {
  const { stdout } = await runEngine(session, [
    "score",
    "--components",
    JSON.stringify(components),
  ]);
  return { raw: stdout, breakdown: rewardBreakdownSchema.parse(JSON.parse(stdout)) };
}

export interface AdvantageOptions {
  wPhys?: number;
  epsilon?: number;
  klBeta?: number;
}

function validateDumpPayload(payload: string): void {
  const lines = payload.split("\n").filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new EngineError("dump payload contains no trajectory groups");
  }
  lines.forEach((line, index) => {
    let doc: unknown;
    try {
      doc = JSON.parse(line);
    } catch (error) {
      throw new EngineError(`dump line ${index + 1} is not valid JSON: ${error}`);
    }
    const envelope = dumpLineEnvelopeSchema.safeParse(doc);
    if (!envelope.success) {
      const field = envelope.error.issues[0];
      throw new EngineError(
        `dump line ${index + 1} field '${field.path.join(".") || "(root)"}': ${field.message}`,
      );
    }
    if (envelope.data.schema !== SUPPORTED_DUMP_SCHEMA) {
      throw new EngineError(
        `dump line ${index + 1} field 'schema': expected ${SUPPORTED_DUMP_SCHEMA}, ` +
          `got ${envelope.data.schema}`,
      );
    }
  });
}

export async function advantagesFor(
  session: BridgeSession,
  payload: string | { path: string },
  options: AdvantageOptions = {},
): Promise<AdvantageResult> {
  let dumpPath: string;
  if (typeof payload === "string") {
    validateDumpPayload(payload);
    dumpPath = scratch(session, "dump.jsonl");
    await writeFile(dumpPath, payload);
  } else {
    validateDumpPayload(await readFile(payload.path, "utf-8"));
    dumpPath = payload.path;
  }
  const outPath = scratch(session, "advantages.jsonl");
  const args = ["advantage", "--dump", dumpPath, "--out", outPath];
  if (options.wPhys !== undefined) {
    args.push("--w-phys", String(options.wPhys));
  }
  if (options.epsilon !== undefined) {
    args.push("--epsilon", String(options.epsilon));
  }
  if (options.klBeta !== undefined) {
    args.push("--kl-beta", String(options.klBeta));
  }
  await runEngine(session, args);
  const raw = await readFile(outPath, "utf-8");
  const records = raw
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => advantageRecordSchema.parse(JSON.parse(line)));
  return { raw, records };
}
