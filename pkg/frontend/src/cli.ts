/**
 * Invocation of the callkit CLI. The bindings never reimplement core
 * logic: every entry point shells out to the toolkit and parses its
 * documented outputs, so results cannot drift from the primary
 * implementation.
 */
import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export class CallkitError extends Error {}

export interface RunOptions {
  /** Override the command; defaults to $CALLKIT_BIN or "callkit". */
  bin?: string[];
}

export function callkitCommand(opts?: RunOptions): string[] {
  if (opts?.bin) return opts.bin;
  const env = process.env.CALLKIT_BIN;
  if (env) return env.split(" ");
  return ["callkit"];
}

export function runCallkit(args: string[], opts?: RunOptions): string {
  const [cmd, ...prefix] = callkitCommand(opts);
  const proc = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) {
    throw new CallkitError(`failed to launch callkit: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const detail = (proc.stderr || proc.stdout || "").trim();
    throw new CallkitError(detail || `callkit exited with status ${proc.status}`);
  }
  return proc.stdout;
}

/** Run fn with a throwaway scratch directory. */
export function withScratchDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "callkit-bindings-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
