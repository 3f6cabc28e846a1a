"""The energy bound with coefficient (d f/2 - g^2/4c) against the exact pairing.

For v = e^{-|x|^2/2s} the exact identity
    2 <v, A v> = (f - g^2/2c)(d M - X/c) - g^2 G + (g^2 d / c) M,
with M = int v^2 w, G = int |grad v|^2 w, X = int |x|^2 v^2 w, gives the slack of
the bound in closed form. The script prints the closed-form slack, the grid
value, and the same numbers for the sharp coefficient (d f/2 + d g^2/4c).
"""
import argparse

from spdelab.coefficients import CoefficientSchedule
from spdelab.grid import GaussPoly, WeightedGrid, quadrature, v_norm_terms
from spdelab.operator import energy_decomposition


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--f", type=float, default=1.0)
    ap.add_argument("--g", type=float, default=2**0.5)
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=513)
    ap.add_argument("--s", type=float, nargs="+", default=[0.25, 0.35, 0.5])
    args = ap.parse_args()

    s = CoefficientSchedule.constant(args.f, args.g)
    grid = WeightedGrid.default(1, args.n, args.c)
    f, g2, c = args.f, args.g**2, args.c
    print(f"f={f} g^2={g2:.6g} c={c}  condition slack f - g^2/2c = {f - g2 / (2 * c):.3e}")
    for width in args.s:
        v = GaussPoly(((0,),), (1.0,), width).on(grid)
        t = v_norm_terms(v)
        X = quadrature(grid, grid.r2 * v.values**2)
        closed = 0.5 * ((f - g2 / (2 * c)) * X / c - 2 * g2 / (2 * c) * t.mass)
        stated = energy_decomposition(v, 0.0, s, "stated").slack
        sharp = energy_decomposition(v, 0.0, s, "sharp").slack
        print(f"s={width:.3f}  M={t.mass:.6f}  stated slack: closed form {closed:+.6f}, grid {stated:+.6f}  "
              f"sharp slack: grid {sharp:+.3e}")


if __name__ == "__main__":
    main()
