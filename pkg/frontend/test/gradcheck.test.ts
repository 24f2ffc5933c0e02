import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LayerProcess } from "../src/client.js";
import { gradcheckItem } from "../src/gradcheck.js";
import { RumLayer } from "../src/layer.js";
import { randomChoiceVector, seededRng } from "../src/lattice.js";

let proc: LayerProcess;

beforeAll(() => {
  proc = new LayerProcess();
});

afterAll(async () => {
  await proc.close();
});

describe("numerical gradient check through the boundary", () => {
  it("matches central finite differences at 1e-3 on an n=3 batch of 2", async () => {
    // tight solves keep the finite-difference bias far below the tolerance
    const layer = await RumLayer.create(proc, 3, null, {
      mu_tol: 1e-12,
      residual_tol: 1e-10,
    });
    const rng = seededRng(31);
    const batch = [randomChoiceVector(3, rng), randomChoiceVector(3, rng)];
    for (const input of batch) {
      const weights = input.map((_, j) => Math.cos(2.0 + 3.0 * j));
      const { maxRelError } = await gradcheckItem(layer, input, weights);
      expect(maxRelError).toBeLessThan(1e-3);
    }
    await layer.dispose();
  }, 180_000);

  it("gradients of strictly feasible inputs follow the interior limit", async () => {
    // deep inside the polytope the layer is locally the projection onto the
    // normalization-preserving subspace, so gradients of a constant-shift
    // direction vanish
    const layer = await RumLayer.create(proc, 2, null, { mu_tol: 1e-12 });
    const uniform = [1.0, 1.0, 0.5, 0.5]; // subsets {0}, {1}, {0,1}
    const fwd = await layer.forward([uniform]);
    expect(fwd.distanceSq[0]).toBeLessThan(1e-8);
    const ones = new Array(layer.numPairs).fill(1);
    const grad = (await layer.backward(fwd.context, [ones]))[0] as number[];
    // each simplex block of the upstream all-ones gradient is constant, and
    // constant-per-block directions are normal to the feasible chart
    for (const g of grad) expect(Math.abs(g)).toBeLessThan(1e-5);
    await layer.free(fwd.context);
    await layer.dispose();
  }, 60_000);
});
