/**
 * Per-instance feature rows: a global crop descriptor concatenated with a
 * local patch-statistics descriptor, in that fixed order, unit-normalized.
 *
 * The shipping embedders are deterministic image statistics so the tool
 * runs without model weights; learned embedders can be registered behind
 * the same two interfaces without touching the file format.
 */

import type { RawImage } from "./types.js";

export interface CropEmbedder {
  name: string;
  dimension: number;
  embed(image: RawImage, pixels: number[]): Float32Array;
}

export interface PatchEmbedder {
  name: string;
  dimension: number;
  embed(image: RawImage, pixels: number[]): Float32Array;
}

/** 4x4x4 RGB histogram over the masked pixels, Hellinger-mapped. */
const HISTOGRAM_EMBEDDER: CropEmbedder = {
  name: "histogram",
  dimension: 64,
  embed(image, pixels) {
    const bins = new Float64Array(64);
    for (const p of pixels) {
      const r = image.rgb[p * 3] >> 6;
      const g = image.rgb[p * 3 + 1] >> 6;
      const b = image.rgb[p * 3 + 2] >> 6;
      bins[(r << 4) | (g << 2) | b] += 1;
    }
    const out = new Float32Array(64);
    for (let i = 0; i < 64; i++) out[i] = Math.sqrt(bins[i] / pixels.length);
    return out;
  },
};

function luma(image: RawImage, p: number): number {
  return (
    0.299 * image.rgb[p * 3] + 0.587 * image.rgb[p * 3 + 1] + 0.114 * image.rgb[p * 3 + 2]
  );
}

/**
 * 16 dims: 8-bin gradient orientation histogram (magnitude weighted),
 * luma mean/std, RGB means, edge density, bounding-box aspect, fill ratio.
 */
const PATCH_STATS_EMBEDDER: PatchEmbedder = {
  name: "patchstats",
  dimension: 16,
  embed(image, pixels) {
    const { width, height } = image;
    const orient = new Float64Array(8);
    let lumaSum = 0;
    let lumaSq = 0;
    let edgeCount = 0;
    const rgbSum = [0, 0, 0];
    let minX = width, maxX = -1, minY = height, maxY = -1;

    for (const p of pixels) {
      const x = p % width;
      const y = (p - x) / width;
      const here = luma(image, p);
      lumaSum += here;
      lumaSq += here * here;
      for (let c = 0; c < 3; c++) rgbSum[c] += image.rgb[p * 3 + c];
      if (x < minX) minX = x;
      if (x > maxX) maxX = x;
      if (y < minY) minY = y;
      if (y > maxY) maxY = y;

      const gx = (x + 1 < width ? luma(image, p + 1) : here) - (x > 0 ? luma(image, p - 1) : here);
      const gy = (y + 1 < height ? luma(image, p + width) : here) - (y > 0 ? luma(image, p - width) : here);
      const magnitude = Math.hypot(gx, gy);
      if (magnitude > 8) edgeCount++;
      if (magnitude > 0) {
        let bin = Math.floor(((Math.atan2(gy, gx) + Math.PI) / (2 * Math.PI)) * 8);
        if (bin === 8) bin = 0;
        orient[bin] += magnitude;
      }
    }

    const count = pixels.length;
    const orientTotal = orient.reduce((s, v) => s + v, 0);
    const mean = lumaSum / count;
    const variance = Math.max(lumaSq / count - mean * mean, 0);
    const boxW = maxX - minX + 1;
    const boxH = maxY - minY + 1;

    const out = new Float32Array(16);
    for (let i = 0; i < 8; i++) out[i] = orientTotal > 0 ? orient[i] / orientTotal : 0;
    out[8] = mean / 255;
    out[9] = Math.sqrt(variance) / 255;
    out[10] = rgbSum[0] / count / 255;
    out[11] = rgbSum[1] / count / 255;
    out[12] = rgbSum[2] / count / 255;
    out[13] = edgeCount / count;
    out[14] = boxW / (boxW + boxH);
    out[15] = count / (boxW * boxH);
    return out;
  },
};

const CROP_EMBEDDERS: Record<string, CropEmbedder> = { histogram: HISTOGRAM_EMBEDDER };
const PATCH_EMBEDDERS: Record<string, PatchEmbedder> = { patchstats: PATCH_STATS_EMBEDDER };

export function resolveCropEmbedder(name: string): CropEmbedder {
  const embedder = CROP_EMBEDDERS[name];
  if (!embedder) {
    throw new Error(
      `cannot load crop embedder '${name}' (available: ${Object.keys(CROP_EMBEDDERS).join(", ")})`
    );
  }
  return embedder;
}

export function resolvePatchEmbedder(name: string): PatchEmbedder {
  const embedder = PATCH_EMBEDDERS[name];
  if (!embedder) {
    throw new Error(
      `cannot load patch embedder '${name}' (available: ${Object.keys(PATCH_EMBEDDERS).join(", ")})`
    );
  }
  return embedder;
}

/**
 * One feature row for mask id `id` in the label map: crop embedding then
 * patch embedding, L2-normalized together. A mask with zero pixels gets an
 * all-zero row and a warning; it cannot participate in semantic matching.
 */
export function embedInstance(
  image: RawImage,
  labels: Uint16Array,
  id: number,
  crop: CropEmbedder,
  patch: PatchEmbedder
): Float32Array {
  const pixels: number[] = [];
  for (let p = 0; p < labels.length; p++) {
    if (labels[p] === id) pixels.push(p);
  }
  const dimension = crop.dimension + patch.dimension;
  if (pixels.length === 0) {
    console.warn(`mask id ${id} has zero pixels; writing a zero feature row`);
    return new Float32Array(dimension);
  }
  const row = new Float32Array(dimension);
  row.set(crop.embed(image, pixels), 0);
  row.set(patch.embed(image, pixels), crop.dimension);
  let norm = 0;
  for (const v of row) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm > 0) {
    for (let d = 0; d < row.length; d++) row[d] /= norm;
  }
  return row;
}
