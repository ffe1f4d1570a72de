"""Parity fixtures for the client tests.

Runs the native library at a fixed seed and stores inputs next to the
exact outputs, so the client suite can assert bitwise equality across
the process boundary without recomputing anything.

    python3 tools/make_fixtures.py OUTDIR
"""

import json
import pathlib
import sys

import numpy as np

from gradsketch import skvb
from gradsketch.sketch import SketchSpec, build_sketcher

SPEC = SketchSpec("affd", 256, 32, seed=5)
N_VECTORS = 100


def main(outdir: str) -> int:
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    sk = build_sketcher(SPEC)
    rng = np.random.default_rng(42)

    xs = [rng.standard_normal(SPEC.n) for _ in range(N_VECTORS)]
    vs = [rng.standard_normal(SPEC.d) for _ in range(N_VECTORS)]
    diag = np.linspace(0.5, 3.0, SPEC.n)
    vh = rng.standard_normal(SPEC.d)

    (out / "spec.json").write_text(SPEC.to_json())
    frames = {
        "inputs_x.skvb": xs,
        "expected_forward.skvb": [sk.forward(x) for x in xs],
        "inputs_v.skvb": vs,
        "expected_transpose.skvb": [sk.transpose(v) for v in vs],
        "hvp_diag.skvb": [diag],
        "hvp_v.skvb": [vh],
        "hvp_expected.skvb": [sk.forward(diag * sk.transpose(vh))],
    }
    for name, vecs in frames.items():
        with open(out / name, "wb") as fp:
            for v in vecs:
                skvb.write_vector(fp, v)
    return 0


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print(__doc__, file=sys.stderr)
        sys.exit(2)
    sys.exit(main(sys.argv[1]))
