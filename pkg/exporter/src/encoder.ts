/**
 * Frozen feature extractors. The pretrained ViT backbones (dino-vit-b16,
 * clip-vit-b16) run through a locally supplied TensorFlow.js GraphModel;
 * weights are never downloaded here. The toy-patch encoder is a
 * deterministic, dependency-light stand-in used by tests and smoke runs.
 */

import * as path from "node:path";
import * as fs from "node:fs";

import { RgbImage, bilinearResize } from "./image.js";
import { Rng, deriveSeed } from "./rng.js";

export type ModelName = "dino-vit-b16" | "clip-vit-b16" | "toy-patch";

export interface FeatureEncoder {
  name: string;
  dim: number;
  encode(image: RgbImage): Promise<Float32Array>;
}

const TOY_PATCH_SIZE = 16;

/**
 * Deterministic local encoder: bilinear-resize to 16x16, flatten RGB, and
 * project through a fixed seeded random matrix. Geometry-preserving enough
 * for smoke datasets, with zero model weights involved.
 */
export function toyPatchEncoder(dim = 64, seed = 0): FeatureEncoder {
  const inDim = TOY_PATCH_SIZE * TOY_PATCH_SIZE * 3;
  const projection = new Float32Array(dim * inDim);
  const rng = new Rng(deriveSeed(seed, 0xfeed));
  for (let i = 0; i < projection.length; i++) {
    projection[i] = rng.uniform(-1, 1) / Math.sqrt(inDim);
  }
  return {
    name: "toy-patch",
    dim,
    async encode(image: RgbImage): Promise<Float32Array> {
      const patch = bilinearResize(image, TOY_PATCH_SIZE, TOY_PATCH_SIZE);
      const out = new Float32Array(dim);
      for (let r = 0; r < dim; r++) {
        let acc = 0;
        for (let c = 0; c < inDim; c++) {
          acc += projection[r * inDim + c] * patch.data[c];
        }
        out[r] = acc;
      }
      return out;
    },
  };
}

interface VitPreset {
  dim: number;
  inputSize: number;
  mean: [number, number, number];
  std: [number, number, number];
}

const VIT_PRESETS: Record<Exclude<ModelName, "toy-patch">, VitPreset> = {
  "dino-vit-b16": {
    dim: 768,
    inputSize: 224,
    mean: [0.485, 0.456, 0.406],
    std: [0.229, 0.224, 0.225],
  },
  "clip-vit-b16": {
    dim: 512,
    inputSize: 224,
    mean: [0.48145466, 0.4578275, 0.40821073],
    std: [0.26862954, 0.26130258, 0.27577711],
  },
};

/**
 * Wrap a TensorFlow.js GraphModel exported from the named backbone. The
 * weights directory must hold model.json + shards; the model takes one
 * [1, size, size, 3] image tensor and returns either pooled features
 * [1, dim] or a token sequence [1, tokens, dim] (the class token is used).
 */
export async function tfjsGraphEncoder(
  model: Exclude<ModelName, "toy-patch">,
  weightsDir: string,
): Promise<FeatureEncoder> {
  const preset = VIT_PRESETS[model];
  const modelJson = path.join(weightsDir, "model.json");
  if (!fs.existsSync(modelJson)) {
    throw new Error(
      `${model}: weights not obtainable (no model.json under ${weightsDir}); ` +
        `export the backbone as a TensorFlow.js GraphModel first`,
    );
  }
  const tf = await import("@tensorflow/tfjs");
  const graph = await tf.loadGraphModel(`file://${modelJson}`);
  return {
    name: model,
    dim: preset.dim,
    async encode(image: RgbImage): Promise<Float32Array> {
      const resized = bilinearResize(image, preset.inputSize, preset.inputSize);
      const pixels = new Float32Array(resized.data.length);
      for (let p = 0; p < resized.width * resized.height; p++) {
        for (let c = 0; c < 3; c++) {
          pixels[p * 3 + c] = (resized.data[p * 3 + c] - preset.mean[c]) / preset.std[c];
        }
      }
      const input = tf.tensor4d(pixels, [1, preset.inputSize, preset.inputSize, 3]);
      const output = graph.predict(input) as { shape: number[]; data(): Promise<ArrayLike<number>> };
      const raw = await output.data();
      input.dispose();
      (output as unknown as { dispose(): void }).dispose();
      if (output.shape.length === 3) {
        return Float32Array.from(Array.prototype.slice.call(raw, 0, preset.dim));
      }
      if (raw.length !== preset.dim) {
        throw new Error(`${model}: expected ${preset.dim} features, got ${raw.length}`);
      }
      return Float32Array.from(raw as ArrayLike<number>);
    },
  };
}

export async function createEncoder(
  model: ModelName,
  weightsDir?: string,
  toyDim = 64,
  seed = 0,
): Promise<FeatureEncoder> {
  if (model === "toy-patch") {
    return toyPatchEncoder(toyDim, seed);
  }
  if (!weightsDir) {
    throw new Error(`${model} requires --weights pointing at a TensorFlow.js GraphModel`);
  }
  return tfjsGraphEncoder(model, weightsDir);
}
