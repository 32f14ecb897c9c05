/**
 * LBGF feature tables: magic "LBGF", u32 version (1), u32 row count M,
 * u32 dimension D, then M*D little-endian float32 values row-major.
 * Row m-1 carries the feature for mask id m.
 */

const MAGIC = "LBGF";
const VERSION = 1;

export function encodeFeatureTable(rows: Float32Array[], dimension: number): Buffer {
  for (const row of rows) {
    if (row.length !== dimension) {
      throw new Error(`feature row has ${row.length} values, expected ${dimension}`);
    }
  }
  const header = Buffer.alloc(16);
  header.write(MAGIC, 0, "latin1");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(rows.length, 8);
  header.writeUInt32LE(dimension, 12);
  const payload = Buffer.alloc(rows.length * dimension * 4);
  rows.forEach((row, m) => {
    for (let d = 0; d < dimension; d++) {
      payload.writeFloatLE(row[d], (m * dimension + d) * 4);
    }
  });
  return Buffer.concat([header, payload]);
}

export function decodeFeatureTable(data: Buffer): { rows: Float32Array[]; dimension: number } {
  if (data.length < 16) throw new Error("feature file shorter than its 16-byte header");
  if (data.toString("latin1", 0, 4) !== MAGIC) {
    throw new Error("bad feature file magic");
  }
  const version = data.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`unsupported feature file version ${version}`);
  const count = data.readUInt32LE(8);
  const dimension = data.readUInt32LE(12);
  if (data.length < 16 + count * dimension * 4) {
    throw new Error("feature payload truncated");
  }
  const rows: Float32Array[] = [];
  for (let m = 0; m < count; m++) {
    const row = new Float32Array(dimension);
    for (let d = 0; d < dimension; d++) {
      row[d] = data.readFloatLE(16 + (m * dimension + d) * 4);
    }
    rows.push(row);
  }
  return { rows, dimension };
}
