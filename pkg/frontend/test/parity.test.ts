import { execFile } from "node:child_process";
import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LayerProcess } from "../src/client.js";
import { RumLayer } from "../src/layer.js";
import { randomChoiceVector, seededRng, toVectorFile } from "../src/lattice.js";

const run = promisify(execFile);

let proc: LayerProcess;
let workDir: string;

beforeAll(async () => {
  proc = new LayerProcess();
  workDir = await mkdtemp(join(tmpdir(), "rumflow-parity-"));
});

afterAll(async () => {
  await proc.close();
  await rm(workDir, { recursive: true, force: true });
});

interface CliProjection {
  distanceSq: number;
  rhoStar: number[];
}

async function cliProject(n: number, values: number[]): Promise<CliProjection> {
  const input = join(workDir, `in-${Math.random().toString(36).slice(2)}.vec`);
  await writeFile(input, toVectorFile(n, values));
  const { stdout } = await run("python3", [
    "-m",
    "rumflow.cli",
    "project",
    "--input",
    input,
  ]);
  const record = stdout.trim().split("\n")[0] as string;
  const fields = new Map<string, string>();
  for (const tok of record.split(" ")) {
    const eq = tok.indexOf("=");
    fields.set(tok.slice(0, eq), tok.slice(eq + 1));
  }
  expect(fields.get("record")).toBe("projection");
  expect(fields.get("converged")).toBe("1");
  return {
    distanceSq: Number(fields.get("distance_sq")),
    rhoStar: (fields.get("rho_star") as string).split(",").map(Number),
  };
}

describe("bit-for-bit parity with the command line", () => {
  it("forward outputs equal CLI project outputs exactly", async () => {
    const layer = await RumLayer.create(proc, 3);
    const rng = seededRng(2024);
    for (let trial = 0; trial < 3; trial++) {
      const vec = randomChoiceVector(3, rng);
      const viaCli = await cliProject(3, vec);
      const viaLayer = await layer.forward([vec]);
      expect(viaLayer.converged[0]).toBe(true);
      // exact equality: both sides serialize shortest round-trip float64
      expect(viaLayer.distanceSq[0]).toBe(viaCli.distanceSq);
      expect(viaLayer.rhoStar[0]).toEqual(viaCli.rhoStar);
      await layer.free(viaLayer.context);
    }
    await layer.dispose();
  }, 120_000);

  it("forward and backward are bit-identical across separate processes", async () => {
    const rng = seededRng(99);
    const vec = randomChoiceVector(3, rng);
    const upstream = vec.map((_, i) => Math.sin(i + 1));

    const runOnce = async (): Promise<{ rho: number[]; grad: number[] }> => {
      const local = new LayerProcess();
      try {
        const layer = await RumLayer.create(local, 3);
        const fwd = await layer.forward([vec]);
        const grad = await layer.backward(fwd.context, [upstream]);
        return { rho: fwd.rhoStar[0] as number[], grad: grad[0] as number[] };
      } finally {
        await local.close();
      }
    };

    const a = await runOnce();
    const b = await runOnce();
    expect(a.rho).toEqual(b.rho);
    expect(a.grad).toEqual(b.grad);
  }, 120_000);
});
