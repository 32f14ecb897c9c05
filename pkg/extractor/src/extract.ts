/**
 * Batch extraction over an image directory: per-frame, per-level mask PNGs
 * and feature tables, plus a frames.json with the manifest fragments to
 * splice into a scene manifest (cameras are added by the caller).
 */

import { readFileSync, readdirSync, mkdirSync, writeFileSync } from "node:fs";
import path from "node:path";

import { embedInstance, resolveCropEmbedder, resolvePatchEmbedder } from "./embed.js";
import { encodeFeatureTable } from "./lbgf.js";
import { decodePng, encodeGray16, toRawImage } from "./png.js";
import { flattenMasks, resolveMaskBackend } from "./segment.js";
import type { ExtractionJob, FrameMasks, MaskLevel, RawImage } from "./types.js";

function listImages(dir: string): string[] {
  let entries: string[];
  try {
    entries = readdirSync(dir);
  } catch {
    throw new Error(`image directory not readable: ${dir}`);
  }
  const images = entries.filter((f) => f.toLowerCase().endsWith(".png")).sort();
  if (images.length === 0) throw new Error(`no PNG images found in ${dir}`);
  return images;
}

function loadImage(filePath: string): RawImage {
  return toRawImage(decodePng(readFileSync(filePath)));
}

export function extractMasks(job: ExtractionJob): FrameMasks[] {
  const backend = resolveMaskBackend(job.maskBackend);
  mkdirSync(job.outDir, { recursive: true });
  const frames: FrameMasks[] = [];
  for (const file of listImages(job.imageDir)) {
    const frameId = path.basename(file, path.extname(file));
    const image = loadImage(path.join(job.imageDir, file));
    const frame: FrameMasks = {
      frameId,
      width: image.width,
      height: image.height,
      labels: {},
      maskFiles: {},
    };
    for (const level of job.levels) {
      const masks = backend.segment(image, job.levelSettings[level]);
      const labels = flattenMasks(masks, image.width, image.height);
      const name = `${frameId}_${level}.png`;
      writeFileSync(
        path.join(job.outDir, name),
        encodeGray16(labels, image.width, image.height)
      );
      frame.labels[level] = labels;
      frame.maskFiles[level] = name;
    }
    frames.push(frame);
  }
  return frames;
}

export function extractFeatures(
  job: ExtractionJob,
  frames: FrameMasks[]
): Map<string, Partial<Record<MaskLevel, string>>> {
  const crop = resolveCropEmbedder(job.clipBackend);
  const patch = resolvePatchEmbedder(job.dinoBackend);
  const dimension = crop.dimension + patch.dimension;
  const featureFiles = new Map<string, Partial<Record<MaskLevel, string>>>();

  for (const frame of frames) {
    const image = loadImage(path.join(job.imageDir, `${frame.frameId}.png`));
    const perLevel: Partial<Record<MaskLevel, string>> = {};
    for (const level of job.levels) {
      const labels = frame.labels[level]!;
      let maxId = 0;
      for (const v of labels) if (v > maxId) maxId = v;
      const rows: Float32Array[] = [];
      for (let id = 1; id <= maxId; id++) {
        rows.push(embedInstance(image, labels, id, crop, patch));
      }
      const name = `${frame.frameId}_${level}.lbgf`;
      writeFileSync(path.join(job.outDir, name), encodeFeatureTable(rows, dimension));
      perLevel[level] = name;
    }
    featureFiles.set(frame.frameId, perLevel);
  }
  return featureFiles;
}

export function runJob(job: ExtractionJob): string {
  const frames = extractMasks(job);
  const featureFiles = extractFeatures(job, frames);
  const records = frames.map((frame) => ({
    id: frame.frameId,
    width: frame.width,
    height: frame.height,
    masks: frame.maskFiles,
    features: featureFiles.get(frame.frameId) ?? {},
  }));
  const manifestPath = path.join(job.outDir, "frames.json");
  writeFileSync(manifestPath, JSON.stringify({ frames: records }, null, 1));
  return manifestPath;
}
