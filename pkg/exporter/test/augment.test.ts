import { describe, expect, it } from "vitest";

import { augmentImage } from "../src/augment.js";
import { RgbImage } from "../src/image.js";
import { Rng } from "../src/rng.js";

function gradientImage(size = 32): RgbImage {
  const data = new Float32Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      data[(y * size + x) * 3] = x / size;
      data[(y * size + x) * 3 + 1] = y / size;
      data[(y * size + x) * 3 + 2] = 0.5;
    }
  }
  return { width: size, height: size, data };
}

describe("augmentation", () => {
  it("none is the identity", () => {
    const image = gradientImage();
    const out = augmentImage(image, "none", new Rng(1));
    expect(out).toBe(image);
  });

  it("paper preserves shape and value range", () => {
    const out = augmentImage(gradientImage(), "paper", new Rng(2));
    expect(out.width).toBe(32);
    expect(out.height).toBe(32);
    for (const v of out.data) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
  });

  it("paper is deterministic per seed and varies across seeds", () => {
    const image = gradientImage();
    const a = augmentImage(image, "paper", new Rng(3));
    const b = augmentImage(image, "paper", new Rng(3));
    expect([...a.data]).toEqual([...b.data]);
    const c = augmentImage(image, "paper", new Rng(4));
    expect([...c.data]).not.toEqual([...a.data]);
  });

  it("paper actually changes the image", () => {
    const image = gradientImage();
    const out = augmentImage(image, "paper", new Rng(5));
    expect([...out.data]).not.toEqual([...image.data]);
  });
});
