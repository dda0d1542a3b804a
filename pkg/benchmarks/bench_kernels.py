"""Compare the compiled and pure-Python HEOM right-hand sides.

Usage: python benchmarks/bench_kernels.py [--depth L] [--matsubara K] [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tclheom.bath import BathSpec
from tclheom.heom import HeomSolver
from tclheom.heom.kernels import BACKENDS
from tclheom.model import SpinBosonParams, build_spin_boson, load_exciton_model
from tclheom.config import sample_path


def cases(depth: int, k: int):
    sb = build_spin_boson(SpinBosonParams(0.0, 1.0, BathSpec(5.0, 5.0, 0.5, k)))
    yield f"spin-boson L={depth} K={k}", sb, depth
    fmo = load_exciton_model(sample_path().read_text())
    yield "FMO 7-site L=3 K=0", fmo, 3


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--matsubara", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backends available: {', '.join(sorted(BACKENDS))}")
    for label, model, depth in cases(args.depth, args.matsubara):
        ref = None
        for name in sorted(BACKENDS):
            solver = HeomSolver(model, depth, backend=name)
            shape = (solver.hierarchy.n_ados, model.dim, model.dim)
            if ref is None:
                rho = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            out = np.empty_like(rho)
            solver.rhs_array(rho, out=out)
            err = 0.0 if ref is None else float(np.abs(out - ref).max() / np.abs(ref).max())
            ref = out.copy() if ref is None else ref
            t = min(timeit.repeat(lambda: solver.rhs_array(rho, out=out), number=args.repeat, repeat=3))
            print(f"{label:28s} {name:7s} ADOs={shape[0]:6d} "
                  f"{1e3 * t / args.repeat:9.3f} ms/rhs  rel.diff={err:.1e}")


if __name__ == "__main__":
    main()
