/**
 * Minimal PNG codec for the two shapes this tool touches: writing 16-bit
 * grayscale mask maps and reading ordinary 8/16-bit gray, RGB, or RGBA
 * images. No palette or interlace support.
 */

import { crc32, deflateSync, inflateSync } from "node:zlib";

const SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);

export interface DecodedPng {
  width: number;
  height: number;
  bitDepth: 8 | 16;
  /** samples per pixel: 1 gray, 3 RGB, 4 RGBA */
  channels: 1 | 3 | 4;
  /** row-major samples; 16-bit values already assembled from big-endian */
  samples: Uint8Array | Uint16Array;
}

function chunk(type: string, data: Buffer): Buffer {
  const header = Buffer.alloc(4);
  header.writeUInt32BE(data.length, 0);
  const body = Buffer.concat([Buffer.from(type, "latin1"), data]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(body) >>> 0, 0);
  return Buffer.concat([header, body, crc]);
}

/** Encode a dense label map as a 16-bit grayscale PNG (filter 0 rows). */
export function encodeGray16(ids: Uint16Array, width: number, height: number): Buffer {
  if (ids.length !== width * height) {
    throw new Error(`label map has ${ids.length} values, expected ${width}x${height}`);
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 16; // bit depth
  ihdr[9] = 0; // grayscale
  const raw = Buffer.alloc(height * (1 + width * 2));
  let offset = 0;
  for (let y = 0; y < height; y++) {
    raw[offset++] = 0; // no per-row filtering
    for (let x = 0; x < width; x++) {
      raw.writeUInt16BE(ids[y * width + x], offset);
      offset += 2;
    }
  }
  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

export function decodePng(data: Buffer): DecodedPng {
  if (data.length < 8 || !data.subarray(0, 8).equals(SIGNATURE)) {
    throw new Error("not a PNG file (bad signature)");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = -1;
  const idat: Buffer[] = [];
  while (pos + 8 <= data.length) {
    const length = data.readUInt32BE(pos);
    const type = data.toString("latin1", pos + 4, pos + 8);
    const body = data.subarray(pos + 8, pos + 8 + length);
    pos += 12 + length;
    if (type === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      bitDepth = body[8];
      colorType = body[9];
      if (body[12] !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(Buffer.from(body));
    } else if (type === "IEND") {
      break;
    }
  }
  if (colorType === -1) throw new Error("PNG missing IHDR chunk");
  const channelsByType: Record<number, 1 | 3 | 4> = { 0: 1, 2: 3, 6: 4 };
  const channels = channelsByType[colorType];
  if (!channels) throw new Error(`unsupported PNG color type ${colorType}`);
  if (bitDepth !== 8 && bitDepth !== 16) {
    throw new Error(`unsupported PNG bit depth ${bitDepth}`);
  }

  const raw = inflateSync(Buffer.concat(idat));
  const bytesPerPixel = channels * (bitDepth / 8);
  const stride = width * bytesPerPixel;
  if (raw.length < height * (stride + 1)) {
    throw new Error("PNG pixel data truncated");
  }
  const out = Buffer.alloc(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let i = 0; i < stride; i++) {
      const left = i >= bytesPerPixel ? cur[i - bytesPerPixel] : 0;
      const up = prev ? prev[i] : 0;
      const upLeft = prev && i >= bytesPerPixel ? prev[i - bytesPerPixel] : 0;
      let value = row[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          value += left;
          break;
        case 2:
          value += up;
          break;
        case 3:
          value += (left + up) >> 1;
          break;
        case 4:
          value += paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unsupported PNG filter ${filter}`);
      }
      cur[i] = value & 0xff;
    }
  }

  if (bitDepth === 8) {
    return { width, height, bitDepth, channels, samples: new Uint8Array(out) };
  }
  const samples = new Uint16Array(width * height * channels);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = out.readUInt16BE(i * 2);
  }
  return { width, height, bitDepth, channels, samples };
}

/** Flatten any decoded PNG into the 8-bit RGB layout the backends consume. */
export function toRawImage(png: DecodedPng): { width: number; height: number; rgb: Uint8Array } {
  const { width, height, channels, samples } = png;
  const shift = png.bitDepth === 16 ? 8 : 0;
  const rgb = new Uint8Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    const base = p * channels;
    const r = samples[base] >> shift;
    const g = channels >= 3 ? samples[base + 1] >> shift : r;
    const b = channels >= 3 ? samples[base + 2] >> shift : r;
    rgb[p * 3] = r;
    rgb[p * 3 + 1] = g;
    rgb[p * 3 + 2] = b;
  }
  return { width, height, rgb };
}
