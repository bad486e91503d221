#!/usr/bin/env node
/**
 * pfp-export: write PFPM/PFPT files for the inference engine.
 *
 *   pfp-export synth --arch <file-or-string> --seed 42 --out model.pfpm
 *                    [--zero-variance]
 *   pfp-export checkpoint --arch <file-or-string> --checkpoint ckpt.json
 *                    --out model.pfpm [--log-sigma] [--key-map map.json]
 *   pfp-export tensor --data data.json --out x.pfpt
 *
 * --arch takes a path to a descriptor JSON file, inline JSON, or the
 * compact MLP form "dense 784-100-10 relu". `tensor` reads a JSON array
 * (nested = multi-dimensional) and writes it as a PFPT file.
 */

import { readFileSync, writeFileSync, existsSync } from "node:fs";
import { parseArgs } from "node:util";

import { exportCheckpointBytes } from "./checkpoint.js";
import { Descriptor, parseDescriptor } from "./descriptor.js";
import { writeTensorFile } from "./format.js";
import { synthModelBytes } from "./synth.js";

function loadDescriptor(arg: string): Descriptor {
  const text = existsSync(arg) ? readFileSync(arg, "utf-8") : arg;
  return parseDescriptor(text);
}

function tensorFromJson(value: unknown): { shape: number[]; values: number[] } {
  const shape: number[] = [];
  let probe = value;
  while (Array.isArray(probe)) {
    shape.push(probe.length);
    probe = probe[0];
  }
  const values: number[] = [];
  const walk = (v: unknown, depth: number): void => {
    if (depth === shape.length) {
      if (typeof v !== "number") throw new Error("tensor JSON must hold numbers");
      values.push(v);
      return;
    }
    if (!Array.isArray(v) || v.length !== shape[depth]) {
      throw new Error("tensor JSON is ragged");
    }
    for (const child of v) walk(child, depth + 1);
  };
  walk(value, 0);
  return { shape, values };
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "synth") {
      const { values } = parseArgs({
        args: rest,
        options: {
          arch: { type: "string" },
          seed: { type: "string", default: "42" },
          out: { type: "string" },
          "zero-variance": { type: "boolean", default: false },
        },
      });
      if (!values.arch || !values.out) throw new Error("synth needs --arch and --out");
      const bytes = synthModelBytes(loadDescriptor(values.arch),
                                    BigInt(values.seed!),
                                    { zeroVariance: values["zero-variance"] });
      writeFileSync(values.out, bytes);
      console.log(`wrote ${values.out} (${bytes.length} bytes)`);
      return 0;
    }
    if (command === "checkpoint") {
      const { values } = parseArgs({
        args: rest,
        options: {
          arch: { type: "string" },
          checkpoint: { type: "string" },
          out: { type: "string" },
          "log-sigma": { type: "boolean", default: false },
          "key-map": { type: "string" },
        },
      });
      if (!values.arch || !values.checkpoint || !values.out) {
        throw new Error("checkpoint needs --arch, --checkpoint and --out");
      }
      const ckpt = JSON.parse(readFileSync(values.checkpoint, "utf-8"));
      const keyMap = values["key-map"]
        ? JSON.parse(readFileSync(values["key-map"], "utf-8"))
        : undefined;
      const bytes = exportCheckpointBytes(loadDescriptor(values.arch), ckpt,
                                          { logSigma: values["log-sigma"], keyMap });
      writeFileSync(values.out, bytes);
      console.log(`wrote ${values.out} (${bytes.length} bytes)`);
      return 0;
    }
    if (command === "tensor") {
      const { values } = parseArgs({
        args: rest,
        options: { data: { type: "string" }, out: { type: "string" } },
      });
      if (!values.data || !values.out) throw new Error("tensor needs --data and --out");
      const parsed = tensorFromJson(JSON.parse(readFileSync(values.data, "utf-8")));
      writeFileSync(values.out, writeTensorFile(parsed.shape, parsed.values));
      console.log(`wrote ${values.out}`);
      return 0;
    }
    throw new Error(`unknown command ${JSON.stringify(command)} ` +
                    "(expected synth, checkpoint or tensor)");
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
