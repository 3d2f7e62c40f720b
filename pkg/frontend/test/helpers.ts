// Spawns the Python session service for the protocol tests.

import { spawn, ChildProcess } from "node:child_process";
import path from "node:path";

export interface LiveService {
  port: number;
  proc: ChildProcess;
  stop(): void;
}

export async function startService(): Promise<LiveService> {
  const repoRoot = path.resolve(__dirname, "..", "..");
  const proc = spawn("python3", ["-m", "psfkit.cli", "serve", "--port", "0"], {
    cwd: repoRoot,
    stdio: ["ignore", "pipe", "pipe"],
  });
  const port = await new Promise<number>((resolve, reject) => {
    let out = "";
    const timer = setTimeout(() => reject(new Error("service did not start: " + out)), 30000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/on [\d.]+:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early (${code}): ${out}`));
    });
  });
  return {
    port,
    proc,
    stop() {
      proc.kill("SIGTERM");
    },
  };
}
