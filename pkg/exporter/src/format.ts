/**
 * Byte-level writers for the engine's PFPM model and PFPT tensor
 * containers. All multi-byte integers are little-endian; tensor payloads
 * are IEEE-754 float32, row-major, tiled exactly (offset 0, no gaps).
 *
 * The manifest is JSON with recursively sorted keys and no whitespace, so
 * a given logical model always serializes to the same bytes.
 */

export const MODEL_MAGIC = "PFPM";
export const TENSOR_MAGIC = "PFPT";
export const FORMAT_VERSION = 1;

/** JSON.stringify with object keys sorted at every level. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${stableStringify(v)}`);
  return `{${entries.join(",")}}`;
}

export interface TensorRef {
  offset: number;
  shape: number[];
}

/** Accumulates float32 tensors and hands out manifest offset entries. */
export class PayloadBuilder {
  private parts: Buffer[] = [];
  private cursor = 0;

  push(values: Float64Array | number[], shape: number[]): TensorRef {
    const count = shape.reduce((a, b) => a * b, 1);
    if (values.length !== count) {
      throw new Error(
        `tensor has ${values.length} values but shape [${shape}] needs ${count}`);
    }
    const buf = Buffer.alloc(count * 4);
    for (let i = 0; i < count; i++) {
      buf.writeFloatLE(Math.fround(values[i]), i * 4);
    }
    const ref = { offset: this.cursor, shape: [...shape] };
    this.parts.push(buf);
    this.cursor += buf.length;
    return ref;
  }

  bytes(): Buffer {
    return Buffer.concat(this.parts);
  }
}

export function writeModelFile(manifest: Record<string, unknown>, payload: Buffer): Buffer {
  const blob = Buffer.from(stableStringify(manifest), "utf-8");
  const header = Buffer.alloc(16);
  header.write(MODEL_MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeBigUInt64LE(BigInt(blob.length), 8);
  return Buffer.concat([header, blob, payload]);
}

export function writeTensorFile(shape: number[], values: Float64Array | number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (values.length !== count) {
    throw new Error(
      `tensor has ${values.length} values but shape [${shape}] needs ${count}`);
  }
  const header = Buffer.alloc(4 + 4 + 4 + 8 * shape.length + 4);
  header.write(TENSOR_MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(shape.length, 8);
  shape.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 12 + 8 * i));
  header.writeUInt32LE(1, 12 + 8 * shape.length); // dtype code 1 = float32
  const body = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) {
    body.writeFloatLE(Math.fround(values[i]), i * 4);
  }
  return Buffer.concat([header, body]);
}
