/**
 * Binary vector frames shared with the worker, little-endian:
 *
 *     offset 0   4 bytes   magic "SKVB"
 *     offset 4   1 byte    version (1)
 *     offset 5   1 byte    dtype code: 0 = float32, 1 = float64
 *     offset 6   8 bytes   element count (unsigned)
 *     offset 14  payload   raw values
 *
 * Frames concatenate back to back in files and on the wire.  Decoding
 * copies the payload once: the 14-byte header leaves float64 data
 * misaligned inside the source buffer, so a view is not possible.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const HEADER_SIZE = 14;
const MAGIC = 0x42564b53; // "SKVB" read as LE u32
const VERSION = 1;

export type Vector = Float64Array | Float32Array;

/** Encode one vector as a frame. */
export function dumpVector(vec: Vector): Buffer {
  const code = vec instanceof Float64Array ? 1 : 0;
  const out = Buffer.allocUnsafe(HEADER_SIZE + vec.byteLength);
  out.writeUInt32LE(MAGIC, 0);
  out.writeUInt8(VERSION, 4);
  out.writeUInt8(code, 5);
  out.writeBigUInt64LE(BigInt(vec.length), 6);
  Buffer.from(vec.buffer, vec.byteOffset, vec.byteLength).copy(out, HEADER_SIZE);
  return out;
}

/** Payload byte length declared by the frame header at `offset`, or -1
 * if fewer than HEADER_SIZE bytes are available. Throws on a malformed
 * header. */
export function framePayloadLength(buf: Buffer, offset: number): number {
  if (buf.length - offset < HEADER_SIZE) return -1;
  if (buf.readUInt32LE(offset) !== MAGIC) {
    throw new Error(`bad magic at offset ${offset}`);
  }
  const version = buf.readUInt8(offset + 4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const code = buf.readUInt8(offset + 5);
  if (code !== 0 && code !== 1) throw new Error(`unknown dtype code ${code}`);
  const count = buf.readBigUInt64LE(offset + 6);
  if (count > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new Error(`frame too large: ${count} elements`);
  }
  return Number(count) * (code === 1 ? 8 : 4);
}

/** Decode the frame at `offset`; returns the vector and the offset just
 * past it. */
export function loadVector(
  buf: Buffer,
  offset = 0,
): { vec: Vector; next: number } {
  const payload = framePayloadLength(buf, offset);
  if (payload < 0) throw new Error("truncated header");
  const start = offset + HEADER_SIZE;
  if (start + payload > buf.length) throw new Error("truncated payload");
  const code = buf.readUInt8(offset + 5);
  const copy = Buffer.allocUnsafe(payload);
  buf.copy(copy, 0, start, start + payload);
  const vec =
    code === 1
      ? new Float64Array(copy.buffer, copy.byteOffset, payload / 8)
      : new Float32Array(copy.buffer, copy.byteOffset, payload / 4);
  return { vec, next: start + payload };
}

/** Decode every frame in the buffer. */
export function loadAll(buf: Buffer): Vector[] {
  const out: Vector[] = [];
  let offset = 0;
  while (offset < buf.length) {
    const { vec, next } = loadVector(buf, offset);
    out.push(vec);
    offset = next;
  }
  return out;
}

/** Read all frames from a file. */
export function readVectors(path: string): Vector[] {
  return loadAll(readFileSync(path));
}

/** Write vectors to a file as concatenated frames. */
export function writeVectors(path: string, vecs: Vector[]): void {
  writeFileSync(path, Buffer.concat(vecs.map(dumpVector)));
}
