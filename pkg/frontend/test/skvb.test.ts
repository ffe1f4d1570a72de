import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  dumpVector,
  loadAll,
  loadVector,
  readVectors,
  writeVectors,
} from "../src/skvb.js";

const tmp = mkdtempSync(join(tmpdir(), "skvb-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

describe("dumpVector", () => {
  it("emits the frozen f64 frame", () => {
    const frame = dumpVector(new Float64Array([1.0]));
    expect(frame.toString("hex")).toBe(
      "534b564201010100000000000000" + "000000000000f03f",
    );
  });

  it("emits the frozen f32 frame", () => {
    const frame = dumpVector(new Float32Array([1.5, -2.0]));
    expect(frame.toString("hex")).toBe(
      "534b564201000200000000000000" + "0000c03f000000c0",
    );
  });

  it("frames an empty vector as header only", () => {
    expect(dumpVector(new Float64Array(0)).length).toBe(14);
  });
});

describe("loadVector", () => {
  it("round-trips f64 bitwise", () => {
    const v = new Float64Array([Math.PI, -0, NaN, 1e-300]);
    const { vec, next } = loadVector(dumpVector(v));
    expect(vec).toBeInstanceOf(Float64Array);
    expect(Buffer.from(vec.buffer, vec.byteOffset, vec.byteLength)).toEqual(
      Buffer.from(v.buffer),
    );
    expect(next).toBe(14 + 32);
  });

  it("round-trips f32", () => {
    const v = new Float32Array([1.5, 2.5, -3.25]);
    const { vec } = loadVector(dumpVector(v));
    expect(vec).toBeInstanceOf(Float32Array);
    expect(Array.from(vec)).toEqual([1.5, 2.5, -3.25]);
  });

  it("walks concatenated frames via next", () => {
    const buf = Buffer.concat([
      dumpVector(new Float64Array([1, 2])),
      dumpVector(new Float32Array([3])),
    ]);
    const first = loadVector(buf);
    const second = loadVector(buf, first.next);
    expect(Array.from(first.vec)).toEqual([1, 2]);
    expect(Array.from(second.vec)).toEqual([3]);
    expect(second.next).toBe(buf.length);
  });

  it("rejects truncated headers", () => {
    expect(() => loadVector(Buffer.from("SKVB\x01\x01", "binary"))).toThrow(
      /truncated header/,
    );
  });

  it("rejects truncated payloads", () => {
    const frame = dumpVector(new Float64Array([1, 2]));
    expect(() => loadVector(frame.subarray(0, frame.length - 1))).toThrow(
      /truncated payload/,
    );
  });

  it("rejects bad magic", () => {
    const frame = dumpVector(new Float64Array([1]));
    frame[0] = 0x58;
    expect(() => loadVector(frame)).toThrow(/bad magic/);
  });

  it("rejects unknown versions and dtype codes", () => {
    const a = dumpVector(new Float64Array([1]));
    a[4] = 9;
    expect(() => loadVector(a)).toThrow(/unsupported version/);
    const b = dumpVector(new Float64Array([1]));
    b[5] = 7;
    expect(() => loadVector(b)).toThrow(/unknown dtype code/);
  });

  it("copies instead of viewing the source buffer", () => {
    const frame = dumpVector(new Float64Array([5]));
    const { vec } = loadVector(frame);
    frame.fill(0);
    expect(vec[0]).toBe(5);
  });
});

describe("files", () => {
  it("loadAll decodes a mixed stream", () => {
    const buf = Buffer.concat([
      dumpVector(new Float64Array([1, -1])),
      dumpVector(new Float64Array(0)),
      dumpVector(new Float32Array([2.5])),
    ]);
    const out = loadAll(buf);
    expect(out.map((v) => v.length)).toEqual([2, 0, 1]);
  });

  it("write/read round-trips through disk", () => {
    const path = join(tmp, "vecs.skvb");
    const vecs = [new Float64Array([1, 2, 3]), new Float32Array([4])];
    writeVectors(path, vecs);
    const back = readVectors(path);
    expect(back.length).toBe(2);
    expect(Array.from(back[0]!)).toEqual([1, 2, 3]);
    expect(back[1]).toBeInstanceOf(Float32Array);
  });
});
