/**
 * Seeded random test-model synthesis.
 *
 * Compute-layer weight means draw from N(0, 2 / fan_in); every variance
 * is the flat 1e-4 (or exactly zero with the zero-variance flag). The
 * generator consumes normals in layer order, weights before bias, so a
 * (descriptor, seed) pair always produces identical file bytes.
 */

import { Descriptor } from "./descriptor.js";
import { Layer, Model, serializeModel } from "./model.js";
import { SplitMix64 } from "./rng.js";

export const SYNTH_VARIANCE = 1e-4;

export interface SynthOptions {
  zeroVariance?: boolean;
}

export function synthModel(descriptor: Descriptor, seed: number | bigint,
                           opts: SynthOptions = {}): Model {
  const rng = new SplitMix64(seed);
  const variance = opts.zeroVariance ? 0.0 : SYNTH_VARIANCE;
  const layers: Layer[] = descriptor.layers.map((arch) => {
    if (arch.kind === "dense" || arch.kind === "conv2d") {
      const fanIn = arch.kind === "dense"
        ? arch.in
        : arch.inChannels * arch.kernel[0] * arch.kernel[1];
      const count = arch.kind === "dense"
        ? arch.out * arch.in
        : arch.outChannels * arch.inChannels * arch.kernel[0] * arch.kernel[1];
      const width = arch.kind === "dense" ? arch.out : arch.outChannels;
      const std = Math.sqrt(2.0 / fanIn);
      const mean = rng.normals(count).map((z) => std * z);
      const common = {
        name: arch.name,
        weightMean: mean,
        weightVariance: new Float64Array(count).fill(variance),
        bias: arch.bias,
        biasMean: arch.bias === "none"
          ? undefined
          : rng.normals(width).map((z) => std * z),
        biasVariance: arch.bias === "probabilistic"
          ? new Float64Array(width).fill(variance)
          : undefined,
      };
      return arch.kind === "dense"
        ? { kind: "dense", inFeatures: arch.in, outFeatures: arch.out, ...common }
        : {
            kind: "conv2d", inChannels: arch.inChannels,
            outChannels: arch.outChannels, kernel: arch.kernel,
            stride: arch.stride, ...common,
          };
    }
    return { kind: arch.kind };
  });
  return {
    name: descriptor.name,
    inputShape: descriptor.inputShape,
    layers,
    calibrationFactor: 1.0,
  };
}

export function synthModelBytes(descriptor: Descriptor, seed: number | bigint,
                                opts: SynthOptions = {}): Buffer {
  return serializeModel(synthModel(descriptor, seed, opts));
}
