import { readFileSync } from "node:fs";
import path from "node:path";
import { describe, expect, it } from "vitest";

import { decodePng, encodeGray16, toRawImage } from "../src/png.js";

const FIXTURES = path.join(__dirname, "fixtures");
const expected = JSON.parse(readFileSync(path.join(FIXTURES, "expected.json"), "utf-8"));

describe("encodeGray16", () => {
  it("round-trips arbitrary 16-bit ids", () => {
    const width = 13;
    const height = 5;
    const ids = new Uint16Array(width * height);
    for (let i = 0; i < ids.length; i++) ids[i] = (i * 9973) % 65536;
    const decoded = decodePng(encodeGray16(ids, width, height));
    expect(decoded.width).toBe(width);
    expect(decoded.height).toBe(height);
    expect(decoded.bitDepth).toBe(16);
    expect(decoded.channels).toBe(1);
    expect(Array.from(decoded.samples)).toEqual(Array.from(ids));
  });

  it("rejects a label map that does not match the frame size", () => {
    expect(() => encodeGray16(new Uint16Array(5), 3, 3)).toThrow(/expected 3x3/);
  });
});

describe("decodePng", () => {
  it("reads an 8-bit RGB file written by another encoder", () => {
    const decoded = decodePng(readFileSync(path.join(FIXTURES, "pil_rgb8.png")));
    expect(decoded.channels).toBe(3);
    const want: number[][][] = expected.rgb8;
    expect(decoded.height).toBe(want.length);
    expect(decoded.width).toBe(want[0].length);
    for (let y = 0; y < decoded.height; y++) {
      for (let x = 0; x < decoded.width; x++) {
        for (let c = 0; c < 3; c++) {
          expect(decoded.samples[(y * decoded.width + x) * 3 + c]).toBe(want[y][x][c]);
        }
      }
    }
  });

  it("reads a 16-bit grayscale file written by another encoder", () => {
    const decoded = decodePng(readFileSync(path.join(FIXTURES, "pil_gray16.png")));
    expect(decoded.bitDepth).toBe(16);
    const want: number[][] = expected.gray16;
    for (let y = 0; y < decoded.height; y++) {
      for (let x = 0; x < decoded.width; x++) {
        expect(decoded.samples[y * decoded.width + x]).toBe(want[y][x]);
      }
    }
  });

  it("rejects non-PNG payloads", () => {
    expect(() => decodePng(Buffer.from("definitely not a png"))).toThrow(/signature/);
  });
});

describe("toRawImage", () => {
  it("replicates gray samples into RGB and rescales 16-bit", () => {
    const ids = new Uint16Array([0, 65535, 32768, 255]);
    const image = toRawImage(decodePng(encodeGray16(ids, 2, 2)));
    expect(Array.from(image.rgb.slice(0, 3))).toEqual([0, 0, 0]);
    expect(Array.from(image.rgb.slice(3, 6))).toEqual([255, 255, 255]);
    expect(Array.from(image.rgb.slice(6, 9))).toEqual([128, 128, 128]);
  });
});
