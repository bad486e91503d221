/**
 * Checkpoint conversion: mean-field Gaussian parameters from a
 * probabilistic-programming training stack into a PFPM model.
 *
 * Input is a JSON checkpoint mapping parameter keys to (nested) numeric
 * arrays. The default key naming per compute layer `<name>` is
 *
 *     <name>.weight.loc      weight means
 *     <name>.weight.scale    weight sigmas  (.log_scale with --log-sigma)
 *     <name>.bias.loc        bias means          (bias != none)
 *     <name>.bias.scale      bias sigmas         (bias == probabilistic)
 *
 * Stacks with other naming conventions supply a key-map JSON object from
 * these logical keys to their actual checkpoint keys. Scales convert as
 * variance = sigma^2, with sigma = exp(value) first under the log-sigma
 * convention; negative sigmas are rejected.
 */

import { ArchBias, Descriptor } from "./descriptor.js";
import { Layer, Model, serializeModel } from "./model.js";

export interface ExportOptions {
  logSigma?: boolean;
  keyMap?: Record<string, string>;
}

type Checkpoint = Record<string, unknown>;

function flatten(value: unknown, out: number[], ctx: string): number[] {
  if (typeof value === "number") {
    out.push(value);
    return out;
  }
  if (Array.isArray(value)) {
    for (const v of value) flatten(v, out, ctx);
    return out;
  }
  throw new Error(`checkpoint value ${ctx} must be a (nested) numeric array`);
}

function lookup(ckpt: Checkpoint, logical: string, keyMap: Record<string, string>,
                expected: number): Float64Array {
  const key = keyMap[logical] ?? logical;
  if (!(key in ckpt)) {
    throw new Error(`checkpoint is missing parameter ${JSON.stringify(key)}` +
                    (key === logical ? "" : ` (mapped from ${logical})`));
  }
  const flat = flatten(ckpt[key], [], key);
  if (flat.length !== expected) {
    throw new Error(
      `checkpoint parameter ${key} has ${flat.length} values, expected ${expected}`);
  }
  return Float64Array.from(flat);
}

function toVariance(scales: Float64Array, logSigma: boolean, key: string): Float64Array {
  const out = new Float64Array(scales.length);
  for (let i = 0; i < scales.length; i++) {
    const sigma = logSigma ? Math.exp(scales[i]) : scales[i];
    if (!(sigma >= 0) || !Number.isFinite(sigma)) {
      throw new Error(`checkpoint parameter ${key} holds a negative or non-finite sigma`);
    }
    out[i] = sigma * sigma;
  }
  return out;
}

export function exportCheckpoint(descriptor: Descriptor, ckpt: Checkpoint,
                                 opts: ExportOptions = {}): Model {
  const keyMap = opts.keyMap ?? {};
  const logSigma = opts.logSigma ?? false;
  const layers: Layer[] = descriptor.layers.map((arch) => {
    if (arch.kind !== "dense" && arch.kind !== "conv2d") {
      return { kind: arch.kind };
    }
    const count = arch.kind === "dense"
      ? arch.out * arch.in
      : arch.outChannels * arch.inChannels * arch.kernel[0] * arch.kernel[1];
    const width = arch.kind === "dense" ? arch.out : arch.outChannels;
    const scaleSuffix = logSigma ? "log_scale" : "scale";
    const wMean = lookup(ckpt, `${arch.name}.weight.loc`, keyMap, count);
    const wVar = toVariance(
      lookup(ckpt, `${arch.name}.weight.${scaleSuffix}`, keyMap, count),
      logSigma, `${arch.name}.weight.${scaleSuffix}`);
    const bias: ArchBias = arch.bias;
    const biasMean = bias === "none"
      ? undefined
      : lookup(ckpt, `${arch.name}.bias.loc`, keyMap, width);
    const biasVariance = bias === "probabilistic"
      ? toVariance(lookup(ckpt, `${arch.name}.bias.${scaleSuffix}`, keyMap, width),
                   logSigma, `${arch.name}.bias.${scaleSuffix}`)
      : undefined;
    const common = {
      name: arch.name,
      weightMean: wMean,
      weightVariance: wVar,
      bias,
      biasMean,
      biasVariance,
    };
    return arch.kind === "dense"
      ? { kind: "dense", inFeatures: arch.in, outFeatures: arch.out, ...common }
      : {
          kind: "conv2d", inChannels: arch.inChannels,
          outChannels: arch.outChannels, kernel: arch.kernel,
          stride: arch.stride, ...common,
        };
  });
  return {
    name: descriptor.name,
    inputShape: descriptor.inputShape,
    layers,
    calibrationFactor: 1.0,
  };
}

export function exportCheckpointBytes(descriptor: Descriptor, ckpt: Checkpoint,
                                      opts: ExportOptions = {}): Buffer {
  return serializeModel(exportCheckpoint(descriptor, ckpt, opts));
}
