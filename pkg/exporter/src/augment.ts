/**
 * Image-space augmentation producing the two training views: random resized
 * crop, horizontal flip, and color jitter. Parameter ranges follow the
 * torchvision conventions commonly used for this recipe (crop area scale
 * 0.3-1.0, jitter strength 0.4 applied with probability 0.8); the exact
 * values are unpublished defaults, not verified constants.
 */

import { RgbImage, bilinearResize, cropImage } from "./image.js";
import { Rng } from "./rng.js";

export type Augmentation = "none" | "paper";

const CROP_SCALE: [number, number] = [0.3, 1.0];
const CROP_RATIO: [number, number] = [3 / 4, 4 / 3];
const JITTER = 0.4;
const JITTER_PROB = 0.8;
const FLIP_PROB = 0.5;

function randomResizedCrop(image: RgbImage, rng: Rng): RgbImage {
  const area = image.width * image.height;
  for (let attempt = 0; attempt < 10; attempt++) {
    const targetArea = area * rng.uniform(CROP_SCALE[0], CROP_SCALE[1]);
    const logRatio = rng.uniform(Math.log(CROP_RATIO[0]), Math.log(CROP_RATIO[1]));
    const ratio = Math.exp(logRatio);
    const w = Math.round(Math.sqrt(targetArea * ratio));
    const h = Math.round(Math.sqrt(targetArea / ratio));
    if (w <= image.width && h <= image.height && w > 0 && h > 0) {
      const x = rng.intBelow(image.width - w + 1);
      const y = rng.intBelow(image.height - h + 1);
      return bilinearResize(cropImage(image, x, y, w, h), image.width, image.height);
    }
  }
  return image;
}

function horizontalFlip(image: RgbImage): RgbImage {
  const data = new Float32Array(image.data.length);
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < image.width; x++) {
      for (let c = 0; c < 3; c++) {
        data[(y * image.width + x) * 3 + c] =
          image.data[(y * image.width + (image.width - 1 - x)) * 3 + c];
      }
    }
  }
  return { ...image, data };
}

function colorJitter(image: RgbImage, rng: Rng): RgbImage {
  const brightness = rng.uniform(1 - JITTER, 1 + JITTER);
  const contrast = rng.uniform(1 - JITTER, 1 + JITTER);
  const saturation = rng.uniform(1 - JITTER, 1 + JITTER);
  const data = new Float32Array(image.data.length);
  let meanLuma = 0;
  for (let p = 0; p < image.width * image.height; p++) {
    meanLuma +=
      0.299 * image.data[p * 3] + 0.587 * image.data[p * 3 + 1] + 0.114 * image.data[p * 3 + 2];
  }
  meanLuma /= image.width * image.height;
  for (let p = 0; p < image.width * image.height; p++) {
    const r = image.data[p * 3];
    const g = image.data[p * 3 + 1];
    const b = image.data[p * 3 + 2];
    const luma = 0.299 * r + 0.587 * g + 0.114 * b;
    const channels = [r, g, b].map((v) => {
      let out = luma + (v - luma) * saturation;        // saturation about per-pixel luma
      out = meanLuma + (out - meanLuma) * contrast;    // contrast about global mean
      out *= brightness;
      return Math.max(0, Math.min(1, out));
    });
    data[p * 3] = channels[0];
    data[p * 3 + 1] = channels[1];
    data[p * 3 + 2] = channels[2];
  }
  return { ...image, data };
}

export function augmentImage(image: RgbImage, kind: Augmentation, rng: Rng): RgbImage {
  if (kind === "none") {
    return image;
  }
  let out = randomResizedCrop(image, rng);
  if (rng.next() < FLIP_PROB) {
    out = horizontalFlip(out);
  }
  if (rng.next() < JITTER_PROB) {
    out = colorJitter(out, rng);
  }
  return out;
}
