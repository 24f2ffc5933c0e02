/** Host-framework numerical gradient check through the layer boundary. */

import type { RumLayer } from "./layer.js";

export interface GradcheckResult {
  maxRelError: number;
  adjoint: number[];
  numerical: number[];
}

/**
 * Compare the boundary's backward pass against central finite differences of
 * the scalar loss sum_j w_j * rhoStar_j for one batch item. Every finite
 * difference re-runs the forward pass through the same boundary.
 */
export async function gradcheckItem(
  layer: RumLayer,
  input: number[],
  lossWeights: number[],
  step = 1e-4,
  coords?: number[],
): Promise<GradcheckResult> {
  const fwd = await layer.forward([input]);
  if (!fwd.converged[0]) throw new Error("base forward did not converge");
  const adjointFull = (await layer.backward(fwd.context, [lossWeights]))[0] as number[];
  await layer.free(fwd.context);

  const loss = async (vec: number[]): Promise<number> => {
    const out = await layer.forward([vec]);
    if (!out.converged[0]) throw new Error("perturbed forward did not converge");
    await layer.free(out.context);
    const rho = out.rhoStar[0] as number[];
    return rho.reduce((acc, v, j) => acc + v * (lossWeights[j] as number), 0);
  };

  const checked = coords ?? input.map((_, i) => i);
  const numerical: number[] = [];
  const adjoint: number[] = [];
  let maxRelError = 0;
  for (const i of checked) {
    const plus = input.slice();
    const minus = input.slice();
    plus[i] = (plus[i] as number) + step;
    minus[i] = (minus[i] as number) - step;
    const fd = ((await loss(plus)) - (await loss(minus))) / (2 * step);
    const adj = adjointFull[i] as number;
    numerical.push(fd);
    adjoint.push(adj);
    const denom = Math.max(Math.abs(fd), Math.abs(adj), 1e-6);
    maxRelError = Math.max(maxRelError, Math.abs(fd - adj) / denom);
  }
  return { maxRelError, adjoint, numerical };
}
