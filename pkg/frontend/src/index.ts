export {
  SketchWorker,
  SketchHandle,
  WorkerError,
  type SketchSpec,
  type SpawnOptions,
  type HvpCallback,
} from "./client.js";
export {
  dumpVector,
  loadVector,
  loadAll,
  readVectors,
  writeVectors,
  type Vector,
} from "./skvb.js";
