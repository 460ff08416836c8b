#!/usr/bin/env node
/**
 * plots --run DIR --kind KIND --out FILE [--slice AXIS:INDEX] [--snapshot NAME]
 *
 * Renders one figure from a pilotwave run directory. Exits nonzero with a
 * message naming the offending file on missing or corrupt inputs.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { FigureKind, render } from "./figures.js";

const KINDS: FigureKind[] = ["overlay", "slice", "collapse", "convergence"];

export interface CliArgs {
  run: string;
  kind: FigureKind;
  out: string;
  axis: 0 | 1 | 2;
  index: number | null;
  snapshot: string | null;
}

export function parseArgs(argv: string[]): CliArgs {
  const out: Partial<CliArgs> = { axis: 2, index: null, snapshot: null };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`${arg} needs a value`);
      return argv[i];
    };
    switch (arg) {
      case "--run":
        out.run = next();
        break;
      case "--kind": {
        const k = next();
        if (!KINDS.includes(k as FigureKind)) {
          throw new Error(`--kind must be one of ${KINDS.join(", ")}; got ${k}`);
        }
        out.kind = k as FigureKind;
        break;
      }
      case "--out":
        out.out = next();
        break;
      case "--slice": {
        const spec = next();
        const m = /^([xyz]):(\d+)$/.exec(spec);
        if (!m) throw new Error(`--slice wants AXIS:INDEX (e.g. z:8); got ${spec}`);
        out.axis = "xyz".indexOf(m[1]) as 0 | 1 | 2;
        out.index = parseInt(m[2], 10);
        break;
      }
      case "--snapshot":
        out.snapshot = next();
        break;
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  for (const key of ["run", "kind", "out"] as const) {
    if (out[key] === undefined) throw new Error(`missing required --${key}`);
  }
  return out as CliArgs;
}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`plots: ${(err as Error).message}`);
    return 2;
  }
  try {
    if (!fs.existsSync(args.run)) throw new Error(`missing input file: ${args.run}`);
    const fig = render(args.run, args.kind, {
      axis: args.axis,
      index: args.index,
      snapshot: args.snapshot,
    });
    fs.mkdirSync(path.dirname(path.resolve(args.out)), { recursive: true });
    fs.writeFileSync(args.out, fig.png);
    console.log(`wrote ${args.out} (${fig.png.length} bytes)`);
    return 0;
  } catch (err) {
    console.error(`plots: ${(err as Error).message}`);
    return 1;
  }
}

const isDirectRun =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
