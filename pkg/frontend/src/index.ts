export { LayerProcess, type SpawnConfig } from "./client.js";
export { RumLayer, type ForwardResult } from "./layer.js";
export { gradcheckItem, type GradcheckResult } from "./gradcheck.js";
export {
  enumeratePairs,
  formatFloat,
  pairCount,
  randomChoiceVector,
  seededRng,
  toVectorFile,
  type Pair,
} from "./lattice.js";
export * from "./protocol.js";
