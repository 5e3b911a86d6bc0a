/** Just enough NIfTI-1 reading to consume generated pair directories:
 * little-endian, 3-D, datatypes uint8/int16/uint16/float32, optional gzip. */

import { readFileSync } from "node:fs";
import { gunzipSync } from "node:zlib";

export interface NiftiVolume {
  dims: [number, number, number];
  /** x-fastest flat order, scaled values. */
  data: Float32Array;
}

const HEADER = 348;
const DT_UINT8 = 2;
const DT_INT16 = 4;
const DT_FLOAT32 = 16;
const DT_UINT16 = 512;

export function readNifti(path: string): NiftiVolume {
  let buf: Buffer = readFileSync(path);
  if (buf.length >= 2 && buf[0] === 0x1f && buf[1] === 0x8b) {
    buf = gunzipSync(buf);
  }
  if (buf.length < HEADER) throw new Error(`${path}: truncated header`);
  if (buf.readInt32LE(0) !== HEADER) {
    throw new Error(`${path}: bad header size ${buf.readInt32LE(0)}`);
  }
  if (buf.toString("latin1", 344, 347) !== "n+1") {
    throw new Error(`${path}: bad magic`);
  }
  const rank = buf.readInt16LE(40);
  if (rank !== 3) throw new Error(`${path}: expected 3-D, got dim[0] = ${rank}`);
  const nx = buf.readInt16LE(42);
  const ny = buf.readInt16LE(44);
  const nz = buf.readInt16LE(46);
  const datatype = buf.readInt16LE(70);
  const voxOffset = buf.readFloatLE(108);
  const slope = buf.readFloatLE(112);
  const inter = buf.readFloatLE(116);
  const voxels = nx * ny * nz;
  const start = Math.floor(voxOffset);

  const out = new Float32Array(voxels);
  const readers: Record<number, (i: number) => number> = {
    [DT_UINT8]: (i) => buf.readUInt8(start + i),
    [DT_INT16]: (i) => buf.readInt16LE(start + 2 * i),
    [DT_UINT16]: (i) => buf.readUInt16LE(start + 2 * i),
    [DT_FLOAT32]: (i) => buf.readFloatLE(start + 4 * i),
  };
  const read = readers[datatype];
  if (!read) throw new Error(`${path}: unsupported datatype ${datatype}`);
  const itemSize = datatype === DT_UINT8 ? 1 : datatype === DT_FLOAT32 ? 4 : 2;
  if (buf.length < start + voxels * itemSize) {
    throw new Error(`${path}: truncated payload`);
  }
  const scale = slope !== 0 && slope !== 1 ? slope : 1;
  const shift = inter;
  for (let i = 0; i < voxels; i++) out[i] = read(i) * scale + shift;
  return { dims: [nx, ny, nz], data: out };
}
