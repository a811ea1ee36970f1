// Engine session: where the binary lives, where scratch files go, and
// which schema versions this bridge speaks.

import { spawn } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
  SUPPORTED_ADVANTAGE_SCHEMA,
  SUPPORTED_DUMP_SCHEMA,
  VersionInfo,
  versionInfoSchema,
} from "./schemas.js";

export class EngineError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number | null = null,
    public readonly stderr: string = "",
  ) {
    super(stderr ? `${message}\n${stderr.trimEnd()}` : message);
    this.name = "EngineError";
  }
}

export interface SessionOptions {
  /** Engine invocation, e.g. ["python3", "-m", "spatialrl.cli"]. */
  engineCmd?: string[];
  /** Working directory for engine subprocesses. */
  cwd?: string;
  /** Engine config file forwarded to every command. */
  configPath?: string;
  timeoutMs?: number;
}

export interface BridgeSession {
  engineCmd: string[];
  cwd: string;
  configPath?: string;
  timeoutMs: number;
  workDir: string;
  engine: VersionInfo;
}

export interface EngineResult {
  stdout: string;
  stderr: string;
}

export async function runEngine(
  session: Pick<BridgeSession, "engineCmd" | "cwd" | "timeoutMs"> & {
    configPath?: string;
  },
  args: string[],
): Promise<EngineResult> {
  const [command, ...prefix] = session.engineCmd;
  const full = [...prefix, ...args];
  if (session.configPath) {
    full.push("--config", session.configPath);
  }
  return new Promise((resolve, reject) => {
    let child;
    try {
      child = spawn(command, full, { cwd: session.cwd });
    } catch (error) {
      reject(new EngineError(`cannot start engine ${command}: ${error}`));
      return;
    }
    let stdout = "";
    let stderr = "";
    const timer = setTimeout(() => {
      child.kill("SIGKILL");
      reject(new EngineError(`engine timed out after ${session.timeoutMs}ms`));
    }, session.timeoutMs);
    child.stdout.on("data", (chunk) => (stdout += chunk));
    child.stderr.on("data", (chunk) => (stderr += chunk));
    child.on("error", (error) => {
      clearTimeout(timer);
      reject(new EngineError(`cannot start engine ${command}: ${error.message}`));
    });
    child.on("close", (code) => {
      clearTimeout(timer);
      if (code !== 0) {
        reject(new EngineError(`engine exited with code ${code}`, code, stderr));
        return;
      }
      resolve({ stdout, stderr });
    });
  });
}

export async function createSession(options: SessionOptions = {}): Promise<BridgeSession> {
  const base = {
    engineCmd: options.engineCmd ?? ["python3", "-m", "spatialrl.cli"],
    cwd: options.cwd ?? process.cwd(),
    configPath: options.configPath,
    timeoutMs: options.timeoutMs ?? 120_000,
  };
  let result: EngineResult;
  try {
    result = await runEngine({ ...base, configPath: undefined }, ["version"]);
  } catch (error) {
    throw new EngineError(
      `engine is not available via [${base.engineCmd.join(" ")}]: ${
        error instanceof Error ? error.message : error
      }`,
    );
  }
  const engine = versionInfoSchema.parse(JSON.parse(result.stdout));
  if (engine.schemas.trajectory_dump !== SUPPORTED_DUMP_SCHEMA) {
    throw new EngineError(
      `engine speaks dump schema ${engine.schemas.trajectory_dump}, ` +
        `this bridge supports ${SUPPORTED_DUMP_SCHEMA}`,
    );
  }
  if (engine.schemas.advantages !== SUPPORTED_ADVANTAGE_SCHEMA) {
    throw new EngineError(
      `engine speaks advantage schema ${engine.schemas.advantages}, ` +
        `this bridge supports ${SUPPORTED_ADVANTAGE_SCHEMA}`,
    );
  }
  const workDir = await mkdtemp(join(tmpdir(), "spatialrl-bridge-"));
  return { ...base, workDir, engine };
}

export async function closeSession(session: BridgeSession): Promise<void> {
  await rm(session.workDir, { recursive: true, force: true });
}
