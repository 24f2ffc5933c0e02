/** Host-side handle for the batched differentiable projection layer. */

import { LayerProcess } from "./client.js";
import type {
  BackwardResponse,
  ForwardResponse,
  FreeResponse,
  InitResponse,
  OkResponse,
  SolverOptions,
} from "./protocol.js";

export interface ForwardResult {
  /** Projected vectors, one row per batch item. */
  rhoStar: number[][];
  /** Squared masked distance per item (the conflict measure). */
  distanceSq: number[];
  /** Per-item solver convergence; failed items carry a null context. */
  converged: boolean[];
  /** Opaque context tokens consumed by backward and free. */
  context: (number | null)[];
}

export class RumLayer {
  private constructor(
    private readonly proc: LayerProcess,
    readonly handle: number,
    readonly numPairs: number,
    readonly numReduced: number,
  ) {}

  /** Validate the geometry once; all later calls go through the handle. */
  static async create(
    proc: LayerProcess,
    n: number,
    observedSets: string[] | null = null,
    options: SolverOptions = {},
  ): Promise<RumLayer> {
    const resp = await proc.call<InitResponse>({
      op: "init",
      n,
      observed_sets: observedSets,
      options,
    });
    return new RumLayer(proc, resp.handle, resp.num_pairs, resp.num_reduced);
  }

  private checkWidth(rows: number[][], what: string): void {
    for (const row of rows) {
      if (row.length !== this.numPairs) {
        throw new RangeError(
          `${what} rows must have length ${this.numPairs}, got ${row.length}`,
        );
      }
    }
  }

  async forward(batch: number[][]): Promise<ForwardResult> {
    this.checkWidth(batch, "batch");
    const resp = await this.proc.call<ForwardResponse>({
      op: "forward",
      handle: this.handle,
      batch,
    });
    return {
      rhoStar: resp.rho_star,
      distanceSq: resp.distance_sq,
      converged: resp.converged,
      context: resp.context,
    };
  }

  /** Pull upstream gradients at rho* back to the layer inputs. */
  async backward(
    context: (number | null)[],
    gradRhoStar: number[][],
  ): Promise<number[][]> {
    this.checkWidth(gradRhoStar, "grad");
    const resp = await this.proc.call<BackwardResponse>({
      op: "backward",
      handle: this.handle,
      context,
      grad: gradRhoStar,
    });
    return resp.grad_input;
  }

  /** Release solver state retained for the given contexts. */
  async free(context: (number | null)[]): Promise<number> {
    const resp = await this.proc.call<FreeResponse>({ op: "free", context });
    return resp.freed;
  }

  /** Drop the handle and everything it retains on the solver side. */
  async dispose(): Promise<void> {
    await this.proc.call<OkResponse>({ op: "close_handle", handle: this.handle });
  }
}
