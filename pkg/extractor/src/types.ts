export type MaskLevel = "object" | "part" | "subpart";

export const MASK_LEVELS: MaskLevel[] = ["object", "part", "subpart"];

/** Decoded raster image, 8-bit RGB, row-major. */
export interface RawImage {
  width: number;
  height: number;
  /** length = width * height * 3 */
  rgb: Uint8Array;
}

/**
 * One candidate instance mask with a confidence score. Backends may emit
 * overlapping masks; the flattening step resolves each pixel to the
 * highest-confidence candidate covering it.
 */
export interface ScoredMask {
  score: number;
  /** length = width * height, nonzero marks membership */
  bitmap: Uint8Array;
}

/** Per-level knobs for the mask backend. */
export interface LevelSettings {
  /** region-growing tolerance; larger values merge more aggressively */
  scale: number;
  /** regions below this pixel count are absorbed into a neighbor */
  minSize: number;
}

export interface ExtractionJob {
  imageDir: string;
  outDir: string;
  maskBackend: string;
  clipBackend: string;
  dinoBackend: string;
  levels: MaskLevel[];
  levelSettings: Record<MaskLevel, LevelSettings>;
}

/** In-memory result of the mask pass, consumed by the feature pass. */
export interface FrameMasks {
  frameId: string;
  width: number;
  height: number;
  /** level -> dense label map (0 = unassigned), length = width * height */
  labels: Partial<Record<MaskLevel, Uint16Array>>;
  /** level -> mask file path relative to the output directory */
  maskFiles: Partial<Record<MaskLevel, string>>;
}

export const DEFAULT_LEVEL_SETTINGS: Record<MaskLevel, LevelSettings> = {
  object: { scale: 800, minSize: 48 },
  part: { scale: 200, minSize: 16 },
  subpart: { scale: 50, minSize: 4 },
};
