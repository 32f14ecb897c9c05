#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { runJob } from "./extract.js";
import { DEFAULT_LEVEL_SETTINGS, MASK_LEVELS, type MaskLevel } from "./types.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .usage("$0 --images <dir> --out <dir>")
    .option("images", { type: "string", demandOption: true, describe: "directory of input PNG frames" })
    .option("out", { type: "string", demandOption: true, describe: "output directory for masks, features, frames.json" })
    .option("levels", {
      type: "string",
      default: MASK_LEVELS.join(","),
      describe: "comma-separated granularity levels to extract",
    })
    .option("mask-backend", { type: "string", default: "graph" })
    .option("clip-backend", { type: "string", default: "histogram" })
    .option("dino-backend", { type: "string", default: "patchstats" })
    .strict()
    .help()
    .parse();

  const levels = argv.levels.split(",").map((s) => s.trim()).filter(Boolean) as MaskLevel[];
  for (const level of levels) {
    if (!MASK_LEVELS.includes(level)) {
      throw new Error(`unknown level '${level}' (expected ${MASK_LEVELS.join(", ")})`);
    }
  }

  const manifest = runJob({
    imageDir: argv.images,
    outDir: argv.out,
    maskBackend: argv["mask-backend"],
    clipBackend: argv["clip-backend"],
    dinoBackend: argv["dino-backend"],
    levels,
    levelSettings: DEFAULT_LEVEL_SETTINGS,
  });
  console.log(`wrote ${manifest}`);
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  });
