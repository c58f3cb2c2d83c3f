/**
 * Export pipeline: scan a class-per-directory image folder, extract frozen
 * features for the unaugmented image and (optionally) two augmented views,
 * L2-normalize, and write the EMB1 banks plus manifest consumed by the
 * clustering pipeline.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Augmentation, augmentImage } from "./augment.js";
import { EmbeddingBank, encodeEmb1, l2NormalizeRows } from "./emb1.js";
import { FeatureEncoder, ModelName, createEncoder } from "./encoder.js";
import { loadPng } from "./image.js";
import { ManifestRow, assignSplits, encodeManifest } from "./manifest.js";
import { Rng, deriveSeed } from "./rng.js";

export interface ExportSpec {
  model: ModelName;
  weightsDir?: string;
  datasetPath: string;
  augmentation: Augmentation;
  knownClasses: string[];
  labeledFraction: number;
  valFraction: number;
  seed: number;
  outDir: string;
  /** Output dimension of the toy-patch encoder; ignored by ViT models. */
  toyDim?: number;
}

export interface DatasetItem {
  index: number;
  classId: number;
  className: string;
  file: string;
}

export interface ExportResult {
  items: DatasetItem[];
  rows: ManifestRow[];
  dim: number;
  paths: { base: string; viewA: string; viewB: string; manifest: string };
}

/** Class subdirectories (sorted) of PNG files (sorted) define the dataset order. */
export function scanDataset(root: string): DatasetItem[] {
  const classNames = fs
    .readdirSync(root, { withFileTypes: true })
    .filter((entry) => entry.isDirectory())
    .map((entry) => entry.name)
    .sort();
  if (classNames.length === 0) {
    throw new Error(`${root}: no class subdirectories found`);
  }
  const items: DatasetItem[] = [];
  classNames.forEach((className, classId) => {
    const files = fs
      .readdirSync(path.join(root, className))
      .filter((name) => name.toLowerCase().endsWith(".png"))
      .sort();
    for (const file of files) {
      items.push({
        index: items.length,
        classId,
        className,
        file: path.join(root, className, file),
      });
    }
  });
  if (items.length === 0) {
    throw new Error(`${root}: no PNG images found`);
  }
  return items;
}

async function encodeViews(
  encoder: FeatureEncoder,
  spec: ExportSpec,
  items: DatasetItem[],
): Promise<{ base: Float32Array; viewA: Float32Array; viewB: Float32Array }> {
  const dim = encoder.dim;
  const base = new Float32Array(items.length * dim);
  const viewA = new Float32Array(items.length * dim);
  const viewB = new Float32Array(items.length * dim);
  for (const item of items) {
    const image = loadPng(item.file);
    const features = await encoder.encode(image);
    base.set(features, item.index * dim);
    if (spec.augmentation === "none") {
      viewA.set(features, item.index * dim);
      viewB.set(features, item.index * dim);
    } else {
      const a = await encoder.encode(
        augmentImage(image, spec.augmentation, new Rng(deriveSeed(spec.seed, item.index, 1))),
      );
      const b = await encoder.encode(
        augmentImage(image, spec.augmentation, new Rng(deriveSeed(spec.seed, item.index, 2))),
      );
      viewA.set(a, item.index * dim);
      viewB.set(b, item.index * dim);
    }
  }
  return { base, viewA, viewB };
}

export async function exportDataset(spec: ExportSpec): Promise<ExportResult> {
  const items = scanDataset(spec.datasetPath);
  const encoder = await createEncoder(spec.model, spec.weightsDir, spec.toyDim ?? 64, spec.seed);
  const { base, viewA, viewB } = await encodeViews(encoder, spec, items);
  for (const values of [base, viewA, viewB]) {
    l2NormalizeRows(values, items.length, encoder.dim);
  }

  const classItems = new Map<number, number[]>();
  for (const item of items) {
    if (!classItems.has(item.classId)) {
      classItems.set(item.classId, []);
    }
    classItems.get(item.classId)!.push(item.index);
  }
  const classNames = [...new Set(items.map((i) => i.className))].sort();
  const knownIds = new Set<number>();
  for (const name of spec.knownClasses) {
    const id = classNames.indexOf(name);
    if (id < 0) {
      throw new Error(`known class ${name!} not present in the dataset`);
    }
    knownIds.add(id);
  }
  const rows = assignSplits({
    classItems,
    knownClasses: knownIds,
    labeledFraction: spec.labeledFraction,
    valFraction: spec.valFraction,
    seed: spec.seed,
  });

  fs.mkdirSync(spec.outDir, { recursive: true });
  const paths = {
    base: path.join(spec.outDir, "base.emb1"),
    viewA: path.join(spec.outDir, "view_a.emb1"),
    viewB: path.join(spec.outDir, "view_b.emb1"),
    manifest: path.join(spec.outDir, "manifest.csv"),
  };
  const banks: [string, Float32Array][] = [
    [paths.base, base],
    [paths.viewA, viewA],
    [paths.viewB, viewB],
  ];
  for (const [file, values] of banks) {
    const bank: EmbeddingBank = { count: items.length, dim: encoder.dim, values };
    fs.writeFileSync(file, encodeEmb1(bank));
  }
  fs.writeFileSync(paths.manifest, encodeManifest(rows));
  return { items, rows, dim: encoder.dim, paths };
}
