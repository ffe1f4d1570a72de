/**
 * Client for the stdio sketch worker.
 *
 * Each message is one JSON header line plus `frames` binary vectors.
 * The worker answers every message exactly once and in order, so
 * replies pair with requests positionally; an HVP sketch is the one
 * two-reply exchange, and its second reply is bought with the extra
 * `callback_result` message.  The worker keeps serving regular traffic
 * while a callback runs, which is what makes the callback re-entrant.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { dumpVector, framePayloadLength, HEADER_SIZE, loadVector } from "./skvb.js";

/** Mirrors the worker's build parameters. */
export interface SketchSpec {
  algorithm: "dense" | "fjl" | "ffd" | "affd" | "afjl" | "qk";
  n: number;
  d: number;
  seed: number;
  preconditioner?: "hadamard" | "fourier" | "kron";
  m?: number | null;
  max_block?: number;
}

/** A refused request; `code` is the worker's stable error code. */
export class WorkerError extends Error {
  constructor(
    message: string,
    public readonly code: string,
  ) {
    super(message);
    this.name = "WorkerError";
  }
}

interface Reply {
  doc: Record<string, unknown>;
  frames: Float64Array[];
}

interface Resolver {
  resolve: (r: Reply) => void;
  reject: (e: unknown) => void;
}

interface Incoming {
  doc: Record<string, unknown>;
  need: number;
  frames: Float64Array[];
}

export interface SpawnOptions {
  /** Interpreter running the worker; default "python3". */
  python?: string;
}

export class SketchWorker {
  private buf: Buffer = Buffer.alloc(0);
  private cur: Incoming | null = null;
  private pending: Resolver[] = [];
  private stderrTail = "";
  private exited = false;

  private constructor(private readonly child: ChildProcess) {
    child.stdout!.on("data", (chunk: Buffer) => this.onData(chunk));
    child.stderr!.on("data", (chunk: Buffer) => {
      this.stderrTail = (this.stderrTail + chunk.toString()).slice(-2000);
    });
    child.on("exit", () => {
      this.exited = true;
      const err = new Error(
        `worker exited${this.stderrTail ? `: ${this.stderrTail}` : ""}`,
      );
      for (const p of this.pending.splice(0)) p.reject(err);
    });
  }

  /** Start a worker process and confirm it answers. */
  static async spawn(options: SpawnOptions = {}): Promise<SketchWorker> {
    const child = spawn(options.python ?? "python3", ["-m", "gradsketch.serve"], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const worker = new SketchWorker(child);
    await worker.ping();
    return worker;
  }

  private onData(chunk: Buffer): void {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    for (;;) {
      if (!this.cur) {
        const nl = this.buf.indexOf(0x0a);
        if (nl < 0) return;
        const doc = JSON.parse(this.buf.subarray(0, nl).toString());
        this.buf = this.buf.subarray(nl + 1);
        this.cur = { doc, need: Number(doc.frames ?? 0), frames: [] };
      }
      while (this.cur.need > 0) {
        const payload = framePayloadLength(this.buf, 0);
        if (payload < 0 || this.buf.length < HEADER_SIZE + payload) return;
        const { vec, next } = loadVector(this.buf, 0);
        this.cur.frames.push(vec as Float64Array);
        this.buf = this.buf.subarray(next);
        this.cur.need -= 1;
      }
      const msg = this.cur;
      this.cur = null;
      this.deliver(msg);
    }
  }

  private deliver(msg: Incoming): void {
    const waiter = this.pending.shift();
    if (!waiter) return; // unsolicited; nothing sane to do with it
    if (msg.doc.ok === false) {
      waiter.reject(
        new WorkerError(String(msg.doc.error), String(msg.doc.code)),
      );
    } else {
      waiter.resolve({ doc: msg.doc, frames: msg.frames });
    }
  }

  /** One request, one reply.  Internal, but the protocol is stable. */
  request(
    doc: Record<string, unknown>,
    frames: Float64Array[] = [],
  ): Promise<Reply> {
    if (this.exited) return Promise.reject(new Error("worker exited"));
    const header = Buffer.from(
      JSON.stringify({ ...doc, frames: frames.length }) + "\n",
    );
    const payload = Buffer.concat([header, ...frames.map(dumpVector)]);
    return new Promise<Reply>((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.child.stdin!.write(payload);
    });
  }

  async ping(): Promise<void> {
    await this.request({ op: "ping" });
  }

  async build(spec: SketchSpec): Promise<SketchHandle> {
    const { doc } = await this.request({ op: "build", spec });
    return new SketchHandle(
      this,
      doc.handle as number,
      doc.n as number,
      doc.d as number,
    );
  }

  /** Ask the worker to exit, then wait for it. */
  async shutdown(): Promise<void> {
    await this.request({ op: "shutdown" });
    if (!this.exited) {
      await new Promise<void>((resolve) => this.child.once("exit", () => resolve()));
    }
  }

  /** Kill the process without the goodbye handshake. */
  dispose(): void {
    if (!this.exited) this.child.kill();
  }
}

function checkVec(name: string, v: Float64Array, length: number): void {
  if (!(v instanceof Float64Array)) {
    throw new TypeError(`${name} must be a Float64Array`);
  }
  if (v.length !== length) {
    throw new RangeError(`${name} must have length ${length}, got ${v.length}`);
  }
}

/** The model side of an HVP sketch: receives the lifted N-vector and
 * returns H times it.  May itself call back into the worker. */
export type HvpCallback = (
  lifted: Float64Array,
) => Float64Array | Promise<Float64Array>;

export class SketchHandle {
  constructor(
    private readonly worker: SketchWorker,
    readonly id: number,
    readonly n: number,
    readonly d: number,
  ) {}

  async forward(x: Float64Array): Promise<Float64Array> {
    checkVec("x", x, this.n);
    const { frames } = await this.worker.request(
      { op: "forward", handle: this.id },
      [x],
    );
    return frames[0]!;
  }

  async transpose(v: Float64Array): Promise<Float64Array> {
    checkVec("v", v, this.d);
    const { frames } = await this.worker.request(
      { op: "transpose", handle: this.id },
      [v],
    );
    return frames[0]!;
  }

  /**
   * Sketched Hessian-vector product: lift v, hand the lifted vector to
   * `callback` for the model's HVP, sketch the result.  A callback
   * failure still releases the worker (it is sent a zero vector) and
   * then rethrows here.
   */
  async hvpSketch(v: Float64Array, callback: HvpCallback): Promise<Float64Array> {
    checkVec("v", v, this.d);
    const interim = await this.worker.request(
      { op: "hvp_sketch", handle: this.id },
      [v],
    );
    const lifted = interim.frames[0]!;
    let hv: Float64Array;
    let failure: unknown = null;
    try {
      hv = await callback(lifted);
      checkVec("callback result", hv, this.n);
    } catch (e) {
      failure = e;
      hv = new Float64Array(this.n);
    }
    const final = await this.worker.request({ op: "callback_result" }, [hv]);
    if (failure !== null) throw failure;
    return final.frames[0]!;
  }

  async close(): Promise<void> {
    await this.worker.request({ op: "close", handle: this.id });
  }
}
