/**
 * In-memory model description plus serialization into PFPM bytes.
 *
 * Weights are always carried (and stored) as means + variances; the
 * engine converts representations on load. Validation here is the
 * structural part only — the engine remains the authority on layer
 * chaining and re-validates everything when the file is opened.
 */

import { PayloadBuilder, writeModelFile } from "./format.js";

export type BiasKind = "none" | "deterministic" | "probabilistic";

export interface DenseLayer {
  kind: "dense";
  name: string;
  inFeatures: number;
  outFeatures: number;
  weightMean: Float64Array;
  weightVariance: Float64Array;
  bias: BiasKind;
  biasMean?: Float64Array;
  biasVariance?: Float64Array;
}

export interface ConvLayer {
  kind: "conv2d";
  name: string;
  inChannels: number;
  outChannels: number;
  kernel: [number, number];
  stride: number;
  weightMean: Float64Array;
  weightVariance: Float64Array;
  bias: BiasKind;
  biasMean?: Float64Array;
  biasVariance?: Float64Array;
}

export interface MarkerLayer {
  kind: "relu" | "maxpool2x2" | "flatten";
}

export type Layer = DenseLayer | ConvLayer | MarkerLayer;

export interface Model {
  name: string;
  inputShape: number[];
  layers: Layer[];
  calibrationFactor: number;
}

export function isCompute(layer: Layer): layer is DenseLayer | ConvLayer {
  return layer.kind === "dense" || layer.kind === "conv2d";
}

function weightShape(layer: DenseLayer | ConvLayer): number[] {
  return layer.kind === "dense"
    ? [layer.outFeatures, layer.inFeatures]
    : [layer.outChannels, layer.inChannels, layer.kernel[0], layer.kernel[1]];
}

function outWidth(layer: DenseLayer | ConvLayer): number {
  return layer.kind === "dense" ? layer.outFeatures : layer.outChannels;
}

function checkLayer(layer: DenseLayer | ConvLayer): void {
  const count = weightShape(layer).reduce((a, b) => a * b, 1);
  if (layer.weightMean.length !== count || layer.weightVariance.length !== count) {
    throw new Error(
      `layer ${layer.name}: weight buffers have ${layer.weightMean.length}/` +
      `${layer.weightVariance.length} values, shape needs ${count}`);
  }
  for (const v of layer.weightVariance) {
    if (!(v >= 0)) throw new Error(`layer ${layer.name}: negative weight variance`);
  }
  const width = outWidth(layer);
  if (layer.bias !== "none") {
    if (!layer.biasMean || layer.biasMean.length !== width) {
      throw new Error(`layer ${layer.name}: bias mean must have ${width} values`);
    }
  }
  if (layer.bias === "probabilistic") {
    if (!layer.biasVariance || layer.biasVariance.length !== width) {
      throw new Error(`layer ${layer.name}: bias variance must have ${width} values`);
    }
    for (const v of layer.biasVariance) {
      if (!(v >= 0)) throw new Error(`layer ${layer.name}: negative bias variance`);
    }
  }
}

export function serializeModel(model: Model): Buffer {
  if (model.layers.length === 0) {
    throw new Error("refusing to serialize a model with no layers");
  }
  if (!(model.calibrationFactor > 0)) {
    throw new Error("calibration factor must be positive");
  }
  const payload = new PayloadBuilder();
  const layerEntries = model.layers.map((layer) => {
    if (!isCompute(layer)) {
      return { kind: layer.kind };
    }
    checkLayer(layer);
    const shape = weightShape(layer);
    const tensors: Record<string, unknown> = {
      weight_mean: payload.push(layer.weightMean, shape),
      weight_variance: payload.push(layer.weightVariance, shape),
    };
    if (layer.bias !== "none") {
      tensors.bias_mean = payload.push(layer.biasMean!, [outWidth(layer)]);
    }
    if (layer.bias === "probabilistic") {
      tensors.bias_variance = payload.push(layer.biasVariance!, [outWidth(layer)]);
    }
    const entry: Record<string, unknown> = {
      kind: layer.kind,
      spread_kind: "variance",
      bias: layer.bias,
      tensors,
    };
    if (layer.kind === "conv2d") {
      entry.stride = layer.stride;
    }
    return entry;
  });
  const manifest = {
    calibration_factor: model.calibrationFactor,
    format_version: 1,
    input_shape: model.inputShape,
    layers: layerEntries,
    name: model.name,
  };
  return writeModelFile(manifest, payload.bytes());
}
