/**
 * Manifest rows for the clustering pipeline:
 * header `index,gt_class,is_known_class,split`, split in
 * {labeled, unlabeled, validation}.
 *
 * Split rule mirrors the pipeline's synthetic generator: per class,
 * floor(valFraction * n) items go to validation first; for known classes
 * ceil(labeledFraction * n) of the remaining items are labeled; everything
 * else is unlabeled. Item selection within a class is a seeded shuffle.
 */

import { Rng, deriveSeed } from "./rng.js";

export type Split = "labeled" | "unlabeled" | "validation";

export interface ManifestRow {
  index: number;
  gtClass: number;
  isKnownClass: boolean;
  split: Split;
}

export interface SplitSpec {
  /** class id -> item indices, in dataset order */
  classItems: Map<number, number[]>;
  knownClasses: Set<number>;
  labeledFraction: number;
  valFraction: number;
  seed: number;
}

export function assignSplits(spec: SplitSpec): ManifestRow[] {
  const rows: ManifestRow[] = [];
  const classes = [...spec.classItems.keys()].sort((a, b) => a - b);
  for (const cls of classes) {
    const items = [...spec.classItems.get(cls)!];
    const known = spec.knownClasses.has(cls);
    const shuffled = new Rng(deriveSeed(spec.seed, cls)).shuffle([...items]);
    const nVal = Math.floor(spec.valFraction * items.length);
    const nLab = known ? Math.ceil(spec.labeledFraction * items.length) : 0;
    if (nVal + nLab > items.length) {
      throw new Error(
        `class ${cls}: validation (${nVal}) + labeled (${nLab}) exceeds ${items.length} items`,
      );
    }
    shuffled.forEach((index, position) => {
      let split: Split;
      if (position < nVal) {
        split = "validation";
      } else if (known && position < nVal + nLab) {
        split = "labeled";
      } else {
        split = "unlabeled";
      }
      rows.push({ index, gtClass: cls, isKnownClass: known, split });
    });
  }
  rows.sort((a, b) => a.index - b.index);
  return rows;
}

export function encodeManifest(rows: ManifestRow[]): string {
  const lines = ["index,gt_class,is_known_class,split"];
  for (const row of rows) {
    lines.push(`${row.index},${row.gtClass},${row.isKnownClass ? 1 : 0},${row.split}`);
  }
  return lines.join("\n") + "\n";
}
