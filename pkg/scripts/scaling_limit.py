"""Piecewise-constant coefficients converging to a continuous schedule.

The continuous run uses f(t) = 1 + a t and g^2 = 2 c f (equality in the
admissibility condition); the N-piece runs hold each coefficient at its
midpoint value. The step dt = 2^-k keeps every breakpoint on a step boundary.
"""
import argparse

import numpy as np

from spdelab.coefficients import CoefficientSchedule, TimeFunction
from spdelab.grid import WeightedGrid
from spdelab.oracle import GaussianState, density_on_grid
from spdelab.solver import SolverConfig, solve


def piecewise(a: float, c: float, N: int) -> CoefficientSchedule:
    fp, gp = [], []
    for i in range(N):
        mid = 1 + a * (i + 0.5) / N
        if i:
            fp.append(i / N)
            gp.append(i / N)
        fp.append(mid)
        gp.append(2 * c * mid)
    return CoefficientSchedule(TimeFunction("piecewise-constant", fp),
                               TimeFunction("piecewise-constant", gp, squared=True))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=513)
    ap.add_argument("--log2-dt", type=int, default=-10)
    ap.add_argument("--pieces", type=int, nargs="+", default=[2, 4, 8, 16, 32])
    args = ap.parse_args()

    grid = WeightedGrid.default(1, args.n, args.c)
    cfg = SolverConfig(dt=2.0**args.log2_dt, checkpoint_every=10**9)
    u0 = density_on_grid(GaussianState((0.0,), 0.25 * args.c), grid, zero_boundary=True)
    cont = CoefficientSchedule(TimeFunction("linear", (1.0, args.a)),
                               TimeFunction("linear", (2 * args.c, 2 * args.c * args.a), squared=True))
    ref = solve(u0, cfg, cont).final.values
    prev = None
    for N in args.pieces:
        gap = float(np.abs(solve(u0, cfg, piecewise(args.a, args.c, N)).final.values - ref).max())
        ratio = f"  ratio {prev / gap:.2f}" if prev else ""
        print(f"N={N:3d}  Linf gap {gap:.3e}{ratio}")
        prev = gap


if __name__ == "__main__":
    main()
