/** Reader for the binary training-pair stream (SVP1 records).
 *
 * Record layout, little-endian:
 *   magic "SVP1" | sample_index u64 | dims 3 x u32 |
 *   image f32 x nxyz (x-fastest) | target u16 x nxyz | param_len u32 |
 *   params UTF-8 JSON
 *
 * Lengths are validated before any allocation; decode failures carry the
 * sample index when the header was readable.
 */

import { createReadStream } from "node:fs";

export const MAGIC = "SVP1";
const HEADER_BYTES = 4 + 8 + 12;
const MAX_VOXELS = 2 ** 31;
const MAX_PARAM_BYTES = 2 ** 26;

export class StreamDecodeError extends Error {}

export interface PairRecord {
  sampleIndex: number;
  dims: [number, number, number];
  /** x-fastest flat order, matching the wire layout. */
  image: Float32Array;
  target: Uint16Array;
  params: Record<string, unknown>;
}

/** Parse one record starting at `offset`; null if the buffer holds a clean
 * end (no bytes); throws on corruption or truncation. */
export function decodeRecord(
  buf: Buffer, offset = 0,
): { record: PairRecord; next: number } | null {
  if (offset === buf.length) return null;
  if (buf.length - offset < HEADER_BYTES) {
    throw new StreamDecodeError(
      `truncated stream: ${buf.length - offset} bytes left, need ${HEADER_BYTES} for a header`,
    );
  }
  const magic = buf.toString("latin1", offset, offset + 4);
  if (magic !== MAGIC) {
    throw new StreamDecodeError(`bad magic ${JSON.stringify(magic)}`);
  }
  const sampleIndex = Number(buf.readBigUInt64LE(offset + 4));
  const nx = buf.readUInt32LE(offset + 12);
  const ny = buf.readUInt32LE(offset + 16);
  const nz = buf.readUInt32LE(offset + 20);
  const where = `record ${sampleIndex}`;
  if (nx < 1 || ny < 1 || nz < 1) {
    throw new StreamDecodeError(`${where}: invalid dims ${nx}x${ny}x${nz}`);
  }
  const voxels = nx * ny * nz;
  if (voxels > MAX_VOXELS) {
    throw new StreamDecodeError(`${where}: length overflow (${voxels} voxels)`);
  }
  let pos = offset + HEADER_BYTES;
  const need = voxels * 4 + voxels * 2 + 4;
  if (buf.length - pos < need) {
    throw new StreamDecodeError(`${where}: truncated payload`);
  }
  // Copy out of the shared buffer so records own their memory.
  const image = new Float32Array(voxels);
  for (let i = 0; i < voxels; i++) image[i] = buf.readFloatLE(pos + 4 * i);
  pos += voxels * 4;
  const target = new Uint16Array(voxels);
  for (let i = 0; i < voxels; i++) target[i] = buf.readUInt16LE(pos + 2 * i);
  pos += voxels * 2;
  const paramLen = buf.readUInt32LE(pos);
  pos += 4;
  if (paramLen > MAX_PARAM_BYTES) {
    throw new StreamDecodeError(`${where}: length overflow (${paramLen} param bytes)`);
  }
  if (buf.length - pos < paramLen) {
    throw new StreamDecodeError(`${where}: truncated parameter record`);
  }
  let params: Record<string, unknown>;
  try {
    params = JSON.parse(buf.toString("utf-8", pos, pos + paramLen));
  } catch (e) {
    throw new StreamDecodeError(`${where}: bad parameter record: ${(e as Error).message}`);
  }
  pos += paramLen;
  return { record: { sampleIndex, dims: [nx, ny, nz], image, target, params }, next: pos };
}

export function decodeAll(buf: Buffer): PairRecord[] {
  const out: PairRecord[] = [];
  let offset = 0;
  for (;;) {
    const step = decodeRecord(buf, offset);
    if (step === null) return out;
    out.push(step.record);
    offset = step.next;
  }
}

/** Bounded async queue: producers await space, consumers await items. */
export class BoundedQueue<T> {
  private items: T[] = [];
  private done = false;
  private waitingPut: (() => void)[] = [];
  private waitingGet: (() => void)[] = [];

  constructor(readonly capacity: number) {}

  async put(item: T): Promise<void> {
    while (this.items.length >= this.capacity) {
      await new Promise<void>((resolve) => this.waitingPut.push(resolve));
    }
    this.items.push(item);
    this.waitingGet.shift()?.();
  }

  close(): void {
    this.done = true;
    for (const w of this.waitingGet.splice(0)) w();
  }

  /** null once the queue is closed and drained. */
  async get(): Promise<T | null> {
    while (this.items.length === 0) {
      if (this.done) return null;
      await new Promise<void>((resolve) => this.waitingGet.push(resolve));
    }
    const item = this.items.shift()!;
    this.waitingPut.shift()?.();
    return item;
  }
}

/** Stream records from a file through a bounded queue, yielding in order. */
export async function* readRecordFile(
  path: string, queueCapacity = 8,
): AsyncGenerator<PairRecord> {
  const queue = new BoundedQueue<PairRecord>(queueCapacity);
  let failure: Error | null = null;

  const producer = (async () => {
    let pending: Buffer = Buffer.alloc(0);
    try {
      for await (const chunk of createReadStream(path)) {
        pending = Buffer.concat([pending, chunk as Buffer]);
        for (;;) {
          let step;
          try {
            step = decodeRecord(pending);
          } catch (e) {
            if (e instanceof StreamDecodeError && /truncated/.test(e.message)) {
              break; // need more bytes
            }
            throw e;
          }
          if (step === null) break;
          await queue.put(step.record);
          pending = pending.subarray(step.next);
        }
      }
      if (pending.length > 0) {
        decodeRecord(pending); // raises the precise truncation diagnostic
      }
    } catch (e) {
      failure = e as Error;
    } finally {
      queue.close();
    }
  })();

  for (;;) {
    const item = await queue.get();
    if (item === null) break;
    yield item;
  }
  await producer;
  if (failure) throw failure;
}
