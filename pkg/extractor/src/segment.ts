/**
 * Class-agnostic mask generation at three granularities.
 *
 * The shipping backend is a deterministic graph segmentation (greedy
 * region merging over the 4-connected pixel grid): no weights to download,
 * same masks on every run. Heavier model-based backends can be registered
 * behind the same interface; the rest of the pipeline only sees scored
 * bitmaps.
 */

import type { LevelSettings, RawImage, ScoredMask } from "./types.js";

export interface MaskBackend {
  name: string;
  segment(image: RawImage, settings: LevelSettings): ScoredMask[];
}

interface Edge {
  a: number;
  b: number;
  w: number;
}

class Regions {
  parent: Int32Array;
  size: Int32Array;
  threshold: Float64Array;

  constructor(n: number, scale: number) {
    this.parent = new Int32Array(n);
    this.size = new Int32Array(n).fill(1);
    this.threshold = new Float64Array(n).fill(scale);
    for (let i = 0; i < n; i++) this.parent[i] = i;
  }

  find(x: number): number {
    let root = x;
    while (this.parent[root] !== root) root = this.parent[root];
    while (this.parent[x] !== root) {
      const next = this.parent[x];
      this.parent[x] = root;
      x = next;
    }
    return root;
  }

  union(a: number, b: number): number {
    if (this.size[a] < this.size[b]) [a, b] = [b, a];
    this.parent[b] = a;
    this.size[a] += this.size[b];
    return a;
  }
}

function edgeWeight(rgb: Uint8Array, p: number, q: number): number {
  const dr = rgb[p * 3] - rgb[q * 3];
  const dg = rgb[p * 3 + 1] - rgb[q * 3 + 1];
  const db = rgb[p * 3 + 2] - rgb[q * 3 + 2];
  return Math.sqrt(dr * dr + dg * dg + db * db);
}

function gridEdges(image: RawImage): Edge[] {
  const { width, height, rgb } = image;
  const edges: Edge[] = [];
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const p = y * width + x;
      if (x + 1 < width) edges.push({ a: p, b: p + 1, w: edgeWeight(rgb, p, p + 1) });
      if (y + 1 < height) edges.push({ a: p, b: p + width, w: edgeWeight(rgb, p, p + width) });
    }
  }
  // stable sort keeps construction order on ties, so runs are reproducible
  edges.sort((e1, e2) => e1.w - e2.w);
  return edges;
}

function segmentGraph(image: RawImage, settings: LevelSettings): ScoredMask[] {
  const n = image.width * image.height;
  const regions = new Regions(n, settings.scale);
  const edges = gridEdges(image);

  for (const e of edges) {
    const ra = regions.find(e.a);
    const rb = regions.find(e.b);
    if (ra === rb) continue;
    if (e.w <= regions.threshold[ra] && e.w <= regions.threshold[rb]) {
      const root = regions.union(ra, rb);
      regions.threshold[root] = e.w + settings.scale / regions.size[root];
    }
  }
  // absorb fragments below the minimum size into whichever neighbor touches
  for (const e of edges) {
    const ra = regions.find(e.a);
    const rb = regions.find(e.b);
    if (ra === rb) continue;
    if (regions.size[ra] < settings.minSize || regions.size[rb] < settings.minSize) {
      regions.union(ra, rb);
    }
  }

  const rootFirstSeen = new Map<number, number>();
  for (let p = 0; p < n; p++) {
    const root = regions.find(p);
    if (!rootFirstSeen.has(root)) rootFirstSeen.set(root, rootFirstSeen.size);
  }
  // a single frame-filling region carries no instance evidence (blank image)
  if (rootFirstSeen.size <= 1) return [];

  const bitmaps = new Map<number, Uint8Array>();
  for (const root of rootFirstSeen.keys()) bitmaps.set(root, new Uint8Array(n));
  for (let p = 0; p < n; p++) bitmaps.get(regions.find(p))![p] = 1;

  const masks: ScoredMask[] = [];
  for (const [root, bitmap] of bitmaps) {
    masks.push({ score: regions.size[root] / n, bitmap });
  }
  return masks;
}

const GRAPH_BACKEND: MaskBackend = { name: "graph", segment: segmentGraph };

const MASK_BACKENDS: Record<string, MaskBackend> = { graph: GRAPH_BACKEND };

export function resolveMaskBackend(name: string): MaskBackend {
  const backend = MASK_BACKENDS[name];
  if (!backend) {
    throw new Error(
      `cannot load mask backend '${name}' (available: ${Object.keys(MASK_BACKENDS).join(", ")})`
    );
  }
  return backend;
}

/**
 * Resolve possibly overlapping scored masks into one dense label map.
 * Each pixel goes to the highest-confidence mask covering it; surviving
 * masks are renumbered 1..M by descending confidence.
 */
export function flattenMasks(masks: ScoredMask[], width: number, height: number): Uint16Array {
  const n = width * height;
  const labels = new Uint16Array(n);
  if (masks.length === 0) return labels;

  const order = masks
    .map((mask, index) => ({ mask, index }))
    .sort((u, v) => v.mask.score - u.mask.score || u.index - v.index);

  const winner = new Int32Array(n).fill(-1);
  order.forEach(({ mask }, rank) => {
    for (let p = 0; p < n; p++) {
      if (mask.bitmap[p] && winner[p] === -1) winner[p] = rank;
    }
  });

  // drop masks that lost every pixel, keep ids dense
  const idForRank = new Int32Array(order.length).fill(0);
  let next = 0;
  for (let rank = 0; rank < order.length; rank++) {
    let survived = false;
    for (let p = 0; p < n; p++) {
      if (winner[p] === rank) {
        survived = true;
        break;
      }
    }
    if (survived) idForRank[rank] = ++next;
  }
  if (next > 0xffff) throw new Error(`${next} masks exceed the 16-bit id range`);
  for (let p = 0; p < n; p++) {
    if (winner[p] >= 0) labels[p] = idForRank[winner[p]];
  }
  return labels;
}
