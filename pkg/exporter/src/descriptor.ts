/**
 * Architecture descriptors: the layer list a synthesized or exported
 * model is built around.
 *
 * Two input forms:
 *  - a JSON object (usually a file) with explicit layers, e.g.
 *      {"name": "lenet", "input_shape": [1, 8, 8], "layers": [
 *        {"kind": "conv2d", "name": "c1", "in_channels": 1,
 *         "out_channels": 4, "kernel": [3, 3], "stride": 1, "bias": "none"},
 *        {"kind": "relu"}, {"kind": "maxpool2x2"}, {"kind": "flatten"},
 *        {"kind": "dense", "name": "fc1", "in": 36, "out": 10,
 *         "bias": "probabilistic"}]}
 *  - a compact MLP string such as "dense 784-100-10 relu" (hidden
 *    rectifiers between consecutive dense layers; names fc1, fc2, ...).
 */

export type ArchBias = "none" | "deterministic" | "probabilistic";

export interface ArchDense {
  kind: "dense";
  name: string;
  in: number;
  out: number;
  bias: ArchBias;
}

export interface ArchConv {
  kind: "conv2d";
  name: string;
  inChannels: number;
  outChannels: number;
  kernel: [number, number];
  stride: number;
  bias: ArchBias;
}

export interface ArchMarker {
  kind: "relu" | "maxpool2x2" | "flatten";
}

export type ArchLayer = ArchDense | ArchConv | ArchMarker;

export interface Descriptor {
  name: string;
  inputShape: number[];
  layers: ArchLayer[];
}

function bad(msg: string): never {
  throw new Error(`descriptor: ${msg}`);
}

function asPositiveInt(v: unknown, ctx: string): number {
  if (typeof v !== "number" || !Number.isInteger(v) || v < 1) {
    bad(`${ctx} must be a positive integer`);
  }
  return v;
}

function asBias(v: unknown, ctx: string): ArchBias {
  if (v === undefined) return "none";
  if (v === "none" || v === "deterministic" || v === "probabilistic") return v;
  bad(`${ctx} has unknown bias kind ${JSON.stringify(v)}`);
}

export function parseDescriptorJson(raw: unknown): Descriptor {
  if (typeof raw !== "object" || raw === null) bad("must be a JSON object");
  const obj = raw as Record<string, unknown>;
  const name = typeof obj.name === "string" ? obj.name : "model";
  const shapeRaw = obj.input_shape;
  if (!Array.isArray(shapeRaw) || shapeRaw.length < 1 || shapeRaw.length > 4) {
    bad("input_shape must be a short array of positive integers");
  }
  const inputShape = shapeRaw.map((d, i) => asPositiveInt(d, `input_shape[${i}]`));
  if (!Array.isArray(obj.layers) || obj.layers.length === 0) {
    bad("layers must be a non-empty array");
  }
  const layers: ArchLayer[] = obj.layers.map((entry, i) => {
    if (typeof entry !== "object" || entry === null) bad(`layers[${i}] must be an object`);
    const l = entry as Record<string, unknown>;
    const ctx = `layers[${i}]`;
    switch (l.kind) {
      case "dense":
        return {
          kind: "dense",
          name: typeof l.name === "string" ? l.name : `fc${i}`,
          in: asPositiveInt(l.in, `${ctx}.in`),
          out: asPositiveInt(l.out, `${ctx}.out`),
          bias: asBias(l.bias, ctx),
        };
      case "conv2d": {
        const kernel = l.kernel;
        if (!Array.isArray(kernel) || kernel.length !== 2) {
          bad(`${ctx}.kernel must be [kh, kw]`);
        }
        return {
          kind: "conv2d",
          name: typeof l.name === "string" ? l.name : `conv${i}`,
          inChannels: asPositiveInt(l.in_channels, `${ctx}.in_channels`),
          outChannels: asPositiveInt(l.out_channels, `${ctx}.out_channels`),
          kernel: [asPositiveInt(kernel[0], `${ctx}.kernel[0]`),
                   asPositiveInt(kernel[1], `${ctx}.kernel[1]`)],
          stride: l.stride === undefined ? 1 : asPositiveInt(l.stride, `${ctx}.stride`),
          bias: asBias(l.bias, ctx),
        };
      }
      case "relu":
      case "maxpool2x2":
      case "flatten":
        return { kind: l.kind };
      default:
        bad(`${ctx} has unknown kind ${JSON.stringify(l.kind)}`);
    }
  });
  return { name, inputShape, layers };
}

/** Compact MLP form: "dense 784-100-10 relu" (separators -, x or unicode arrow). */
export function parseCompactMlp(text: string): Descriptor {
  const tokens = text.trim().split(/\s+/).filter((t) => t !== "with");
  if (tokens[0] !== "dense" || tokens.length < 2 || tokens.length > 3) {
    bad(`compact form is "dense <w0>-<w1>-...-<wn> [relu]", got ${JSON.stringify(text)}`);
  }
  const widths = tokens[1].split(/[-x→]/).map((w) => {
    const n = Number(w);
    if (!Number.isInteger(n) || n < 1) bad(`bad width ${JSON.stringify(w)}`);
    return n;
  });
  if (widths.length < 2) bad("need at least two widths");
  const withRelu = tokens.length === 3 && tokens[2] === "relu";
  if (tokens.length === 3 && !withRelu) bad(`unknown trailing token ${JSON.stringify(tokens[2])}`);
  const layers: ArchLayer[] = [];
  for (let i = 0; i + 1 < widths.length; i++) {
    layers.push({ kind: "dense", name: `fc${i + 1}`, in: widths[i],
                  out: widths[i + 1], bias: "probabilistic" });
    if (withRelu && i + 2 < widths.length) {
      layers.push({ kind: "relu" });
    }
  }
  return { name: "mlp", inputShape: [widths[0]], layers };
}

/** Dispatch: JSON text when it looks like an object, compact string otherwise. */
export function parseDescriptor(text: string): Descriptor {
  const trimmed = text.trim();
  if (trimmed.startsWith("{")) {
    return parseDescriptorJson(JSON.parse(trimmed));
  }
  return parseCompactMlp(trimmed);
}
