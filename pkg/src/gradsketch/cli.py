"""Command-line benchmark and diagnostics driver.

Subcommands mirror the library surface: ``quality`` (distortion and
score-correlation sweep), ``perf`` (wall-time medians over a D sweep),
``eigen`` (Krylov spectrum probe), ``intdim`` (intrinsic-dimension
search), ``tda`` (score correlation and layer masking).

Exit codes: 0 success, 2 invalid arguments, 3 numeric failure inside an
iteration, 4 search exhausted without reaching its target.  All output
except measured timings is deterministic for a given command line, and
every report embeds its own config so it can be reproduced from the file
alone.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .baseline import ChunkedDenseBaseline
from .calculus import SketchedOperator
from .errors import NumericError, SearchExhaustedError
from .intrinsic import SearchConfig, make_loss_metric, search_intrinsic_dimension, verify_half
from .oracles import LogisticOracle, PlantedSubspaceOracle, QuadraticOracle
from .rng import derived_rng
from .sketch import (
    ALGORITHMS,
    PRECONDITIONERS,
    SketchSpec,
    build_sketcher,
    ffd_adversarial_input,
    jl_distortion_trial,
)
from .skvb import read_all
from .spectral import arnoldi, relative_mae, spectrum_report
from .tda import block_masks, correlation_harness, layer_masked_correlation

_PRECISIONS = {"f32": np.float32, "f64": np.float64}


def host_fingerprint() -> dict:
    """Stable description of the execution environment (no timestamps)."""
    return {
        "machine": platform.machine(),
        "system": platform.system(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": BACKEND,
        "package": __version__,
    }


def _config_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "fn"}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path, - for stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--precision", choices=tuple(_PRECISIONS), default="f64")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for independent non-timed cells")


def _add_map_args(p: argparse.ArgumentParser):
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--n", type=int, required=True, help="input dimension")
    p.add_argument("--d", type=int, required=True, help="sketch dimension")
    p.add_argument("--preconditioner", choices=PRECONDITIONERS, default="hadamard")
    p.add_argument("--m", type=int, default=None,
                   help="point-count assumption (fjl sparsity)")


def _spec_from_args(args) -> SketchSpec:
    return SketchSpec(
        algorithm=args.algo,
        n=args.n,
        d=args.d,
        seed=args.seed,
        preconditioner=args.preconditioner,
        m=args.m,
    )


def _emit(args, doc: dict, csv_text: str | None = None):
    if args.format == "csv":
        if csv_text is None:
            raise ValueError("this subcommand has no csv form")
        text = csv_text
    else:
        text = json.dumps(doc, indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fp:
            fp.write(text)


def _build_oracle(args):
    if args.oracle == "quad":
        outliers = [float(t) for t in args.outliers.split(",")] if args.outliers else []
        bulk = args.bulk_coeff / np.arange(1, args.n - len(outliers) + 1) ** args.bulk_alpha
        spectrum = np.concatenate([outliers, bulk])
        return QuadraticOracle(
            spectrum,
            seed=args.seed,
            n_batches=getattr(args, "batches", 0),
            batch_profile=None,
            rotate=True,
        )
    if args.oracle == "logistic":
        return LogisticOracle(
            args.n, args.examples, seed=args.seed, ridge=args.ridge
        )
    if args.oracle == "planted":
        return PlantedSubspaceOracle(args.n, args.planted_dim, seed=args.seed)
    raise ValueError(f"unknown oracle {args.oracle!r}")


def _add_oracle_args(p: argparse.ArgumentParser, default="quad"):
    p.add_argument("--oracle", choices=("quad", "logistic", "planted"),
                   default=default)
    p.add_argument("--outliers", default="100,85,70",
                   help="comma-separated leading eigenvalues (quad)")
    p.add_argument("--bulk-coeff", type=float, default=40.0)
    p.add_argument("--bulk-alpha", type=float, default=1.6)
    p.add_argument("--examples", type=int, default=256, help="dataset size (logistic)")
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--planted-dim", type=int, default=128)


def _quality_vectors(args):
    """Unit test vectors for the distortion column, one list per call."""
    if args.vectors is not None:
        with open(args.vectors, "rb") as fp:
            vecs = [np.asarray(v, dtype=np.float64) for v in read_all(fp)]
        for v in vecs:
            if v.shape != (args.n,):
                raise ValueError(f"vector file entries must have length {args.n}")
        return [v / np.linalg.norm(v) for v in vecs]
    if args.family == "adversarial":
        return []  # built per cell, tied to the map layout
    rng = derived_rng(args.seed, "cli.quality")
    out = []
    for _ in range(args.trials):
        if args.family == "isotropic":
            x = rng.standard_normal(args.n)
        else:  # sparse family, a few equal-magnitude coordinates
            s = int(args.family.removeprefix("sparse"))
            x = np.zeros(args.n)
            support = rng.choice(args.n, size=s, replace=False)
            x[support] = rng.choice([-1.0, 1.0], size=s)
        out.append(x / np.linalg.norm(x))
    return out


def _quality_cell(args, algo: str, d: int, vectors, oracle, theta) -> dict:
    dtype = _PRECISIONS[args.precision]
    spec = SketchSpec(algo, args.n, d, seed=args.seed,
                      preconditioner=args.preconditioner, m=args.m)
    sk = build_sketcher(spec, dtype=dtype)
    if args.family == "adversarial" and args.vectors is None:
        if algo != "ffd":
            raise ValueError("the adversarial family targets ffd")
        base = ffd_adversarial_input(args.n, d)
        # vary the map, not the vector: the input is tied to the layout
        dist = np.asarray([
            jl_distortion_trial(
                build_sketcher(SketchSpec(algo, args.n, d, seed=args.seed + i,
                                          preconditioner=args.preconditioner,
                                          m=args.m)),
                base,
            )
            for i in range(args.trials)
        ])
    else:
        dist = np.asarray([jl_distortion_trial(sk, v) for v in vectors])
    res = correlation_harness(oracle, sk, theta, args.pairs, seed=args.seed)
    return {
        "algorithm": algo,
        "d": d,
        "fail_fraction": float(np.mean(dist > args.epsilon)),
        "mean_distortion": float(dist.mean()),
        "max_distortion": float(dist.max()),
        "r": res.r,
    }


def cmd_quality(args) -> int:
    vectors = _quality_vectors(args)
    oracle = LogisticOracle(args.n, args.examples, seed=args.seed, ridge=args.ridge)
    theta = derived_rng(args.seed, "cli.quality.theta").standard_normal(args.n) * 0.1
    cells = [(a, d) for a in args.algo for d in args.d]

    def one(cell):
        return _quality_cell(args, cell[0], cell[1], vectors, oracle, theta)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            rows = list(ex.map(one, cells))
    else:
        rows = [one(c) for c in cells]
    doc = {
        "config": _config_dict(args),
        "family": args.family,
        "epsilon": args.epsilon,
        "rows": rows,
        "host": host_fingerprint(),
    }
    csv_text = "algorithm,d,fail_fraction,mean_distortion,max_distortion,r\n" + "".join(
        f"{r['algorithm']},{r['d']},{r['fail_fraction']!r},"
        f"{r['mean_distortion']!r},{r['max_distortion']!r},{r['r']!r}\n"
        for r in rows
    )
    _emit(args, doc, csv_text)
    return 0


def _median_time(fn, repeats: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.monotonic()
        fn()
        samples.append(time.monotonic() - t0)
    return float(np.median(samples))


def cmd_perf(args) -> int:
    dtype = _PRECISIONS[args.precision]
    x = derived_rng(args.seed, "cli.perf").standard_normal(args.n).astype(dtype)
    rows = []
    # timing cells run strictly one at a time regardless of --threads
    for d in args.d:
        for algo in args.algo:
            spec = SketchSpec(algo, args.n, d, seed=args.seed,
                              preconditioner=args.preconditioner, m=args.m)
            sk = build_sketcher(spec, dtype=dtype)
            v = sk.forward(x)
            rows.append({
                "source": algo,
                "d": d,
                "forward_s": _median_time(lambda: sk.forward(x),
                                          args.repeats, args.warmup),
                "transpose_s": _median_time(lambda: sk.transpose(v),
                                            args.repeats, args.warmup),
            })
        if args.baseline != "none":
            bl = ChunkedDenseBaseline(args.n, d, seed=args.seed, kind=args.baseline)
            xb = np.asarray(x, dtype=np.float64)
            rows.append({
                "source": f"baseline-{args.baseline}",
                "d": d,
                "forward_s": _median_time(lambda: bl.forward(xb),
                                          args.repeats, args.warmup),
                "transpose_s": None,
            })
    doc = {
        "config": _config_dict(args),
        "rows": rows,
        "host": host_fingerprint(),
    }
    csv_text = "source,d,forward_s,transpose_s\n" + "".join(
        f"{r['source']},{r['d']},{r['forward_s']!r},{r['transpose_s']!r}\n"
        for r in rows
    )
    _emit(args, doc, csv_text)
    return 0


def cmd_eigen(args) -> int:
    oracle = _build_oracle(args)
    spec = _spec_from_args(args)
    sk = build_sketcher(spec, dtype=_PRECISIONS[args.precision])
    theta = np.zeros(oracle.dim)
    op = SketchedOperator(sk, oracle, theta, mode=args.mode)
    res = arnoldi(op.matvec, sk.d, args.steps, seed=args.seed)
    report = spectrum_report(res.ritz, k=args.top)
    doc = {
        "ritz": [float(t) for t in res.ritz],
        "rneg": report.neg_ratio,
        "outliers": report.n_outliers,
        "m": res.n_steps,
        "d": sk.d,
        "algorithm": args.algo,
        "seed": args.seed,
        "config": _config_dict(args),
        "breakdown": res.breakdown,
        "n_matvec": op.n_matvec,
        "report": report.to_dict(),
        "host": host_fingerprint(),
    }
    if args.oracle == "quad":
        exact = oracle.hessian_spectrum()[: args.top]
        doc["exact_top"] = [float(t) for t in exact]
        doc["relative_mae_top"] = relative_mae(
            res.ritz[: args.top], exact, k=min(args.top, res.ritz.size)
        )
    csv_text = "rank,ritz\n" + "".join(
        f"{i},{float(t)!r}\n" for i, t in enumerate(res.ritz[: args.top])
    )
    _emit(args, doc, csv_text)
    return 0


def cmd_intdim(args) -> int:
    oracle = _build_oracle(args)
    cfg = SearchConfig(
        d_min=args.d_min,
        d_max=args.d_max,
        c=args.steps,
        delta=args.delta,
        tau_target=args.tau,
        lr=args.lr,
        seed=args.seed,
        algorithm=args.algo,
        preconditioner=args.preconditioner,
    )
    evaluator = make_loss_metric(oracle)
    result = search_intrinsic_dimension(oracle, evaluator, cfg)
    doc = {
        "oracle": args.oracle,
        "n": args.n,
        "d_star": result.d_star,
        "trace": json.loads(result.trace.to_json()),
        "spec": json.loads(result.spec.to_json()),
        "config": _config_dict(args),
        "host": host_fingerprint(),
    }
    if args.verify and result.d_star >= 2 * cfg.d_min:
        passed, half_trace = verify_half(oracle, evaluator, result.d_star, cfg)
        doc["half_certified"] = passed
        doc["half_trace"] = json.loads(half_trace.to_json())
    elif args.verify:
        doc["half_certified"] = None  # nothing below d_min to check
    _emit(args, doc, result.trace.to_csv())
    return 0


def cmd_tda(args) -> int:
    if args.oracle == "quad":
        k = args.profile_rank
        profile = np.zeros(args.n)
        profile[:k] = args.profile_scale
        profile[k:] = args.profile_floor
        oracle = QuadraticOracle(
            np.full(args.n, 0.1),
            seed=args.seed,
            n_batches=args.batches,
            batch_profile=profile,
            rotate=True,
        )
    else:
        oracle = LogisticOracle(args.n, args.batches, seed=args.seed, ridge=args.ridge)
    spec = _spec_from_args(args)
    sk = build_sketcher(spec, dtype=_PRECISIONS[args.precision])
    theta = derived_rng(args.seed, "cli.tda.theta").standard_normal(args.n) * 0.1
    res = correlation_harness(oracle, sk, theta, args.pairs, seed=args.seed)
    doc = {
        "spec": json.loads(spec.to_json()),
        "oracle": args.oracle,
        "batches": args.batches,
        "pairs": len(res.pairs),
        "r": res.r,
        "config": _config_dict(args),
        "host": host_fingerprint(),
    }
    if args.blocks:
        sizes = [int(s) for s in args.blocks.split(",")]
        masked = layer_masked_correlation(
            oracle, theta, block_masks(args.n, sizes), args.pairs, seed=args.seed
        )
        doc["block_r"] = masked.r_blocks
    _emit(args, doc, res.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gradsketch",
        description="seeded sketching maps: quality, speed, and downstream probes",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quality", help="distortion and correlation sweep")
    q.add_argument("--algo", choices=ALGORITHMS, action="append", required=True,
                   help="repeatable")
    q.add_argument("--n", type=int, required=True, help="input dimension")
    q.add_argument("--d", type=int, action="append", required=True,
                   help="sketch dimension, repeatable")
    q.add_argument("--preconditioner", choices=PRECONDITIONERS, default="hadamard")
    q.add_argument("--m", type=int, default=None)
    q.add_argument("--trials", type=int, default=200,
                   help="generated test vectors per cell")
    q.add_argument("--vectors", default=None,
                   help="SKVB file of test vectors (overrides --family)")
    q.add_argument("--family", default="isotropic",
                   help="isotropic, sparse<k> (e.g. sparse4), or adversarial")
    q.add_argument("--epsilon", type=float, default=0.2)
    q.add_argument("--pairs", type=int, default=512,
                   help="score pairs for the r column")
    q.add_argument("--examples", type=int, default=128)
    q.add_argument("--ridge", type=float, default=1e-3)
    _add_common(q)
    q.set_defaults(fn=cmd_quality)

    p = sub.add_parser("perf", help="wall-time medians")
    p.add_argument("--algo", choices=ALGORITHMS, action="append", required=True,
                   help="repeatable")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, action="append", required=True,
                   help="repeatable")
    p.add_argument("--preconditioner", choices=PRECONDITIONERS, default="hadamard")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--baseline", choices=("rademacher", "gaussian", "none"),
                   default="none")
    _add_common(p)
    p.set_defaults(fn=cmd_perf)

    e = sub.add_parser("eigen", help="sketched curvature spectrum probe")
    _add_map_args(e)
    _add_oracle_args(e)
    e.add_argument("--steps", type=int, default=30)
    e.add_argument("--top", type=int, default=10)
    e.add_argument("--mode", choices=("explicit", "implicit"), default="explicit")
    _add_common(e)
    e.set_defaults(fn=cmd_eigen)

    i = sub.add_parser("intdim", help="intrinsic-dimension search")
    i.add_argument("--algo", choices=ALGORITHMS, default="affd")
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--preconditioner", choices=PRECONDITIONERS, default="hadamard")
    _add_oracle_args(i, default="planted")
    i.add_argument("--d-min", type=int, default=16)
    i.add_argument("--d-max", type=int, default=512)
    i.add_argument("--steps", type=int, default=300,
                   help="descent steps per budget window")
    i.add_argument("--lr", type=float, default=0.1)
    i.add_argument("--tau", type=float, default=0.9)
    i.add_argument("--delta", type=float, default=0.02)
    i.add_argument("--verify", action="store_true",
                   help="re-train at d_star/2 with the full budget")
    _add_common(i)
    i.set_defaults(fn=cmd_intdim)

    t = sub.add_parser("tda", help="attribution-score correlation")
    _add_map_args(t)
    t.add_argument("--oracle", choices=("quad", "logistic"), default="quad")
    t.add_argument("--batches", type=int, default=256)
    t.add_argument("--pairs", type=int, default=2048)
    t.add_argument("--ridge", type=float, default=1e-3)
    t.add_argument("--profile-rank", type=int, default=16,
                   help="strong batch-scatter directions (quad)")
    t.add_argument("--profile-scale", type=float, default=3.0)
    t.add_argument("--profile-floor", type=float, default=0.05)
    t.add_argument("--blocks", default=None,
                   help="comma-separated block sizes for masked scoring")
    _add_common(t)
    t.set_defaults(fn=cmd_tda)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except SearchExhaustedError as e:
        print(f"search exhausted: {e}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
