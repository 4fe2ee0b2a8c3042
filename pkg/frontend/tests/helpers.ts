/**
 * Test plumbing: run the backend CLI (for the shared rubric vectors and the
 * offline statistics command) and manage a locally spawned rating-service
 * process for the end-to-end session.
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

const PYTHON_SHIM = "import sys; from diagrambench.cli import main; sys.exit(main(sys.argv[1:]))";

let cliCommand: string[] | null = null;

/** Resolve the backend CLI once: the console script if present, else python3. */
function resolveCli(): string[] {
  if (cliCommand) return cliCommand;
  try {
    execFileSync("diagrambench", ["--help"], { stdio: "ignore" });
    cliCommand = ["diagrambench"];
  } catch {
    cliCommand = ["python3", "-c", PYTHON_SHIM];
  }
  return cliCommand;
}

export function runCli(args: string[]): string {
  const [command, ...prefix] = resolveCli();
  return execFileSync(command!, [...prefix, ...args], { encoding: "utf-8" });
}

export function makeTempDir(prefix: string): { path: string; cleanup: () => void } {
  const path = mkdtempSync(join(tmpdir(), prefix));
  return { path, cleanup: () => rmSync(path, { recursive: true, force: true }) };
}

export function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.once("error", reject);
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        server.close();
        reject(new Error("could not determine a free port"));
        return;
      }
      const { port } = address;
      server.close(() => resolve(port));
    });
  });
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export interface RunningService {
  baseUrl: string;
  stop: () => Promise<void>;
}

export interface ServeOptions {
  datasetPath: string;
  configPath: string;
  dataDir: string;
  imagesDir?: string;
}

export async function startService(options: ServeOptions): Promise<RunningService> {
  const port = await freePort();
  const args = [
    "serve",
    "--dataset", options.datasetPath,
    "--config", options.configPath,
    "--data-dir", options.dataDir,
    "--host", "127.0.0.1",
    "--port", String(port),
  ];
  if (options.imagesDir) args.push("--images-dir", options.imagesDir);
  const [command, ...prefix] = resolveCli();
  const proc: ChildProcess = spawn(command!, [...prefix, ...args], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  let stderr = "";
  proc.stderr?.on("data", (chunk: Buffer) => {
    stderr += chunk.toString();
  });
  const exited = new Promise<void>((resolve) => proc.once("exit", () => resolve()));

  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited early (code ${proc.exitCode}): ${stderr}`);
    }
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) break;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) {
      proc.kill("SIGKILL");
      throw new Error(`service did not become healthy within 30s: ${stderr}`);
    }
    await sleep(100);
  }

  return {
    baseUrl,
    stop: async () => {
      proc.kill("SIGTERM");
      const killTimer = setTimeout(() => proc.kill("SIGKILL"), 5_000);
      await exited;
      clearTimeout(killTimer);
    },
  };
}
