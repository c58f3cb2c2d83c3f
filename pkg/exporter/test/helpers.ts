import * as fs from "node:fs";
import * as path from "node:path";

import { RgbImage, savePng } from "../src/image.js";
import { Rng, deriveSeed } from "../src/rng.js";

/** Tiny two-class PNG dataset: reddish vs bluish noise images. */
export function writeToyDataset(root: string, perClass = 5, size = 24): void {
  const classes: Array<[string, [number, number, number]]> = [
    ["blue", [0.1, 0.2, 0.8]],
    ["red", [0.8, 0.15, 0.1]],
  ];
  classes.forEach(([name, tint], classIndex) => {
    const dir = path.join(root, name);
    fs.mkdirSync(dir, { recursive: true });
    for (let i = 0; i < perClass; i++) {
      const rng = new Rng(deriveSeed(1234, classIndex, i));
      const data = new Float32Array(size * size * 3);
      for (let p = 0; p < size * size; p++) {
        for (let c = 0; c < 3; c++) {
          data[p * 3 + c] = Math.max(0, Math.min(1, tint[c] + rng.uniform(-0.1, 0.1)));
        }
      }
      const image: RgbImage = { width: size, height: size, data };
      savePng(image, path.join(dir, `img_${String(i).padStart(2, "0")}.png`));
    }
  });
}
