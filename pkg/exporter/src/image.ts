/** PNG loading and pixel-space helpers over interleaved RGB float arrays in [0, 1]. */

import * as fs from "node:fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Interleaved RGB, length width*height*3, values in [0, 1]. */
  data: Float32Array;
}

export function loadPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const data = new Float32Array(png.width * png.height * 3);
  for (let p = 0; p < png.width * png.height; p++) {
    data[p * 3] = png.data[p * 4] / 255;
    data[p * 3 + 1] = png.data[p * 4 + 1] / 255;
    data[p * 3 + 2] = png.data[p * 4 + 2] / 255;
  }
  return { width: png.width, height: png.height, data };
}

export function savePng(image: RgbImage, path: string): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let p = 0; p < image.width * image.height; p++) {
    for (let c = 0; c < 3; c++) {
      png.data[p * 4 + c] = Math.max(0, Math.min(255, Math.round(image.data[p * 3 + c] * 255)));
    }
    png.data[p * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}

function sample(image: RgbImage, x: number, y: number, c: number): number {
  const xi = Math.max(0, Math.min(image.width - 1, x));
  const yi = Math.max(0, Math.min(image.height - 1, y));
  return image.data[(yi * image.width + xi) * 3 + c];
}

export function bilinearResize(image: RgbImage, width: number, height: number): RgbImage {
  const data = new Float32Array(width * height * 3);
  const sx = image.width / width;
  const sy = image.height / height;
  for (let y = 0; y < height; y++) {
    const fy = (y + 0.5) * sy - 0.5;
    const y0 = Math.floor(fy);
    const wy = fy - y0;
    for (let x = 0; x < width; x++) {
      const fx = (x + 0.5) * sx - 0.5;
      const x0 = Math.floor(fx);
      const wx = fx - x0;
      for (let c = 0; c < 3; c++) {
        const top = sample(image, x0, y0, c) * (1 - wx) + sample(image, x0 + 1, y0, c) * wx;
        const bottom =
          sample(image, x0, y0 + 1, c) * (1 - wx) + sample(image, x0 + 1, y0 + 1, c) * wx;
        data[(y * width + x) * 3 + c] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return { width, height, data };
}

export function cropImage(image: RgbImage, x: number, y: number, w: number, h: number): RgbImage {
  const data = new Float32Array(w * h * 3);
  for (let row = 0; row < h; row++) {
    for (let col = 0; col < w; col++) {
      for (let c = 0; c < 3; c++) {
        data[(row * w + col) * 3 + c] = image.data[((y + row) * image.width + (x + col)) * 3 + c];
      }
    }
  }
  return { width: w, height: h, data };
}
