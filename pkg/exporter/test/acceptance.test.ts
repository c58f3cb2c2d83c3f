/**
 * Exporter acceptance: the wire formats must round-trip into the Python
 * clustering pipeline. Exported EMB1 banks load with no renormalization,
 * a 10-image augmentation=none smoke export yields view banks byte-identical
 * to the base bank, and the manifest follows the 50%-labeled rule exactly.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { exportDataset } from "../src/export.js";
import { writeToyDataset } from "./helpers.js";

let root: string;
let paths: { base: string; viewA: string; viewB: string; manifest: string };

beforeAll(async () => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), "exporter-acceptance-"));
  const datasetDir = path.join(root, "dataset");
  writeToyDataset(datasetDir, 5);
  const result = await exportDataset({
    model: "toy-patch",
    datasetPath: datasetDir,
    augmentation: "none",
    knownClasses: ["blue"],
    labeledFraction: 0.5,
    valFraction: 0.0,
    seed: 21,
    outDir: path.join(root, "out"),
    toyDim: 16,
  });
  paths = result.paths;
});

afterAll(() => {
  fs.rmSync(root, { recursive: true, force: true });
});

function python(code: string): string {
  return execFileSync("python3", ["-c", code], { encoding: "utf-8" }).trim();
}

describe("exporter round-trip acceptance", () => {
  it("EMB1 banks load in the primary pipeline with no renormalization warning", () => {
    for (const bankPath of [paths.base, paths.viewA, paths.viewB]) {
      const out = python(
        `from cmshift.data import load_embedding_bank\n` +
          `bank = load_embedding_bank(${JSON.stringify(bankPath)})\n` +
          `print(bank.renormalized, bank.count, bank.dim)`,
      );
      expect(out).toBe("False 10 16");
    }
    console.log("[acceptance] exporter-emb1-roundtrip: PASS");
  });

  it("smoke export view banks are byte-identical to the base bank", () => {
    const base = fs.readFileSync(paths.base);
    expect(fs.readFileSync(paths.viewA).equals(base)).toBe(true);
    expect(fs.readFileSync(paths.viewB).equals(base)).toBe(true);
    console.log("[acceptance] exporter-view-identity: PASS");
  });

  it("manifest loads in the primary pipeline and follows the 50%-labeled rule", () => {
    const out = python(
      `from cmshift.data import load_manifest\n` +
        `import math\n` +
        `m = load_manifest(${JSON.stringify(paths.manifest)})\n` +
        `known = m.is_known_class.sum()\n` +
        `labeled = m.labeled_indices().size\n` +
        `print(len(m), int(known), int(labeled), math.ceil(0.5 * int(known)))`,
    );
    const [total, known, labeled, expected] = out.split(" ").map(Number);
    expect(total).toBe(10);
    expect(known).toBe(5);
    expect(labeled).toBe(expected);
    console.log("[acceptance] exporter-manifest-splits: PASS");
  });
});
