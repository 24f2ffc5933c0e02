/** Child-process transport: one JSON object per line, strictly in order. */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

import {
  LayerProtocolError,
  type ErrorResponse,
  type Request,
  type Response,
} from "./protocol.js";

export interface SpawnConfig {
  /** Command to launch the solver boundary; defaults to python3 -m rumflow.layerio. */
  command?: string;
  args?: string[];
  env?: NodeJS.ProcessEnv;
  cwd?: string;
}

interface Pending {
  resolve: (value: Response) => void;
  reject: (err: Error) => void;
}

/**
 * Owns one solver process. The protocol is strictly sequential, so responses
 * are matched to requests first-in first-out. All methods reject once the
 * process exits or the transport is closed.
 */
export class LayerProcess {
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending: Pending[] = [];
  private closed = false;
  private stderrTail = "";

  constructor(config: SpawnConfig = {}) {
    const command = config.command ?? "python3";
    const args = config.args ?? ["-m", "rumflow.layerio"];
    this.proc = spawn(command, args, {
      stdio: ["pipe", "pipe", "pipe"],
      env: config.env ?? process.env,
      cwd: config.cwd,
    });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => this.onLine(line));
    this.proc.stderr.on("data", (chunk: Buffer) => {
      this.stderrTail = (this.stderrTail + chunk.toString()).slice(-4000);
    });
    this.proc.on("exit", () => this.failAll(new Error(this.exitMessage())));
  }

  private exitMessage(): string {
    const hint = this.stderrTail.trim();
    return hint
      ? `solver process exited; stderr tail:\n${hint}`
      : "solver process exited";
  }

  private onLine(line: string): void {
    const next = this.pending.shift();
    if (!next) return; // unsolicited output; nothing sensible to do
    try {
      next.resolve(JSON.parse(line) as Response);
    } catch (err) {
      next.reject(new Error(`unparseable response: ${line}`));
    }
  }

  private failAll(err: Error): void {
    this.closed = true;
    for (const p of this.pending.splice(0)) p.reject(err);
  }

  /** Send one request and await its (raw) response object. */
  request(req: Request): Promise<Response> {
    if (this.closed) {
      return Promise.reject(new Error("transport is closed"));
    }
    return new Promise<Response>((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(JSON.stringify(req) + "\n", (err) => {
        if (err) reject(err);
      });
    });
  }

  /** Send a request and throw LayerProtocolError on an error response. */
  async call<T extends Response>(req: Request): Promise<T> {
    const resp = await this.request(req);
    if (!resp.ok) {
      const e = resp as ErrorResponse;
      throw new LayerProtocolError(e.code, e.message);
    }
    return resp as T;
  }

  /** Graceful shutdown; the process exits after acknowledging. */
  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    const pendingShutdown = new Promise<void>((resolve) => {
      this.proc.once("exit", () => resolve());
    });
    this.pending.push({ resolve: () => undefined, reject: () => undefined });
    this.proc.stdin.write(JSON.stringify({ op: "shutdown" }) + "\n");
    this.proc.stdin.end();
    await pendingShutdown;
  }

  /** Hard kill for error paths. */
  dispose(): void {
    this.closed = true;
    this.proc.kill();
  }
}
