export { exportCheckpoint, exportCheckpointBytes } from "./checkpoint.js";
export { parseCompactMlp, parseDescriptor, parseDescriptorJson } from "./descriptor.js";
export type { Descriptor } from "./descriptor.js";
export { stableStringify, writeModelFile, writeTensorFile } from "./format.js";
export { serializeModel } from "./model.js";
export type { Model } from "./model.js";
export { SplitMix64 } from "./rng.js";
export { SYNTH_VARIANCE, synthModel, synthModelBytes } from "./synth.js";
