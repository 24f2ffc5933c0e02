/** Wire types for the line-delimited JSON boundary of the projection layer. */

export interface SolverOptions {
  tau?: number;
  mu_tol?: number;
  residual_tol?: number;
  max_iter?: number;
}

export interface InitRequest {
  op: "init";
  n: number;
  observed_sets?: string[] | null;
  options?: SolverOptions;
}

export interface ForwardRequest {
  op: "forward";
  handle: number;
  batch: number[][];
}

export interface BackwardRequest {
  op: "backward";
  handle: number;
  context: (number | null)[];
  grad: number[][];
}

export interface FreeRequest {
  op: "free";
  context: (number | null)[];
}

export interface CloseHandleRequest {
  op: "close_handle";
  handle: number;
}

export interface ShutdownRequest {
  op: "shutdown";
}

export type Request =
  | InitRequest
  | ForwardRequest
  | BackwardRequest
  | FreeRequest
  | CloseHandleRequest
  | ShutdownRequest;

export type ErrorCode =
  | "bad_request"
  | "unknown_handle"
  | "stale_context"
  | "invalid_input"
  | "backward_failed";

export interface ErrorResponse {
  ok: false;
  code: ErrorCode;
  message: string;
}

export interface InitResponse {
  ok: true;
  handle: number;
  num_pairs: number;
  num_reduced: number;
}

export interface ForwardResponse {
  ok: true;
  rho_star: number[][];
  distance_sq: number[];
  converged: boolean[];
  context: (number | null)[];
}

export interface BackwardResponse {
  ok: true;
  grad_input: number[][];
}

export interface FreeResponse {
  ok: true;
  freed: number;
}

export interface OkResponse {
  ok: true;
}

export type Response =
  | ErrorResponse
  | InitResponse
  | ForwardResponse
  | BackwardResponse
  | FreeResponse
  | OkResponse;

/** Raised when the boundary reports an error object. */
export class LayerProtocolError extends Error {
  constructor(
    public readonly code: ErrorCode,
    message: string,
  ) {
    super(`${code}: ${message}`);
    this.name = "LayerProtocolError";
  }
}
