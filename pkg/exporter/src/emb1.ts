/**
 * EMB1 binary format, the feature-bank interchange file of the clustering
 * pipeline (all integers little-endian):
 *
 *   bytes 0-3    ASCII "EMB1"
 *   bytes 4-7    uint32 version (= 1)
 *   bytes 8-15   uint64 row count N
 *   bytes 16-19  uint32 dimension d
 *   then N*d float32, row-major
 */

const MAGIC = "EMB1";
const VERSION = 1;
const HEADER_BYTES = 20;

export interface EmbeddingBank {
  count: number;
  dim: number;
  /** Row-major float32 payload, length count*dim. */
  values: Float32Array;
}

export function l2NormalizeRows(values: Float32Array, count: number, dim: number): void {
  for (let i = 0; i < count; i++) {
    let sq = 0;
    for (let j = 0; j < dim; j++) {
      const v = values[i * dim + j];
      sq += v * v;
    }
    const norm = Math.sqrt(sq);
    if (norm === 0) {
      throw new Error(`row ${i} has zero norm and cannot be normalized`);
    }
    for (let j = 0; j < dim; j++) {
      values[i * dim + j] /= norm;
    }
  }
}

export function encodeEmb1(bank: EmbeddingBank): Buffer {
  if (bank.values.length !== bank.count * bank.dim) {
    throw new Error(
      `payload holds ${bank.values.length} floats, expected ${bank.count * bank.dim}`,
    );
  }
  const buffer = Buffer.alloc(HEADER_BYTES + bank.values.length * 4);
  buffer.write(MAGIC, 0, "ascii");
  buffer.writeUInt32LE(VERSION, 4);
  buffer.writeBigUInt64LE(BigInt(bank.count), 8);
  buffer.writeUInt32LE(bank.dim, 16);
  for (let i = 0; i < bank.values.length; i++) {
    buffer.writeFloatLE(bank.values[i], HEADER_BYTES + i * 4);
  }
  return buffer;
}

export function decodeEmb1(buffer: Buffer): EmbeddingBank {
  if (buffer.length < HEADER_BYTES) {
    throw new Error("file shorter than the EMB1 header");
  }
  if (buffer.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("bad EMB1 magic");
  }
  const version = buffer.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported EMB1 version ${version}`);
  }
  const count = Number(buffer.readBigUInt64LE(8));
  const dim = buffer.readUInt32LE(16);
  const expected = count * dim * 4;
  if (buffer.length - HEADER_BYTES !== expected) {
    throw new Error(
      `payload holds ${buffer.length - HEADER_BYTES} bytes, header implies ${expected}`,
    );
  }
  const values = new Float32Array(count * dim);
  for (let i = 0; i < values.length; i++) {
    values[i] = buffer.readFloatLE(HEADER_BYTES + i * 4);
  }
  return { count, dim, values };
}

/** Largest |row norm - 1| over the bank; the pipeline renormalizes above 1e-5. */
export function maxNormDeviation(bank: EmbeddingBank): number {
  let worst = 0;
  for (let i = 0; i < bank.count; i++) {
    let sq = 0;
    for (let j = 0; j < bank.dim; j++) {
      const v = bank.values[i * bank.dim + j];
      sq += v * v;
    }
    worst = Math.max(worst, Math.abs(Math.sqrt(sq) - 1));
  }
  return worst;
}
