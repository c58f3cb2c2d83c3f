#!/usr/bin/env node
/** Command-line wrapper over the export pipeline. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { Augmentation } from "./augment.js";
import { ModelName } from "./encoder.js";
import { exportDataset } from "./export.js";

async function main(): Promise<void> {
  const argv = await yargs(hideBin(process.argv))
    .option("model", {
      choices: ["dino-vit-b16", "clip-vit-b16", "toy-patch"] as const,
      demandOption: true,
    })
    .option("weights", { type: "string", describe: "TensorFlow.js GraphModel directory" })
    .option("dataset", { type: "string", demandOption: true })
    .option("augmentation", { choices: ["none", "paper"] as const, default: "none" as const })
    .option("known-classes", {
      type: "string",
      default: "",
      describe: "comma-separated class directory names treated as known",
    })
    .option("labeled-fraction", { type: "number", default: 0.5 })
    .option("val-fraction", { type: "number", default: 0.0 })
    .option("seed", { type: "number", default: 0 })
    .option("toy-dim", { type: "number", default: 64 })
    .option("out", { type: "string", demandOption: true })
    .strict()
    .parse();

  const result = await exportDataset({
    model: argv.model as ModelName,
    weightsDir: argv.weights,
    datasetPath: argv.dataset,
    augmentation: argv.augmentation as Augmentation,
    knownClasses: argv["known-classes"] ? argv["known-classes"].split(",") : [],
    labeledFraction: argv["labeled-fraction"],
    valFraction: argv["val-fraction"],
    seed: argv.seed,
    outDir: argv.out,
    toyDim: argv["toy-dim"],
  });
  const labeled = result.rows.filter((r) => r.split === "labeled").length;
  console.log(`exported ${result.items.length} items, dim ${result.dim}`);
  console.log(`labeled=${labeled} manifest=${result.paths.manifest}`);
}

main().catch((error) => {
  console.error(`error: ${error instanceof Error ? error.message : error}`);
  process.exit(1);
});
