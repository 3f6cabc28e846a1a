"""Fit the regression constants C_ID and C_INEQ used by the verification battery.

For every configuration and grid level, prints the largest identity residual
and the most negative inequality slack (both normalized by |v|_V^2), divided
by h^2 in parentheses. ``tight`` is the largest |slack| / (h^2 (f + g^2)) of
the sharp energy bound, which is an equality in the continuum when f = g^2/2c,
so it measures the discretization bias an inequality check must absorb.
The frozen constants in spdelab.verify are the maxima doubled and rounded up.
"""
import argparse

import numpy as np

from spdelab.coefficients import CoefficientSchedule, TimeFunction, constants_report
from spdelab.grid import WeightedGrid, sample_family
from spdelab.verify import IDENTITIES, a2_slack, a3_slack, a4_ratio, lemma_3_4_slack

CONFIGS = {
    "equality-d1": (CoefficientSchedule.constant(1.0, 2**0.5), 1.0, 1),
    "strict-d2": (CoefficientSchedule.constant(2.0, 1.0), 1.0, 2),
    "vp-linear-d1": (CoefficientSchedule(TimeFunction("linear", (0.05, 9.95)),
                                         TimeFunction("linear", (0.1, 19.9), squared=True)), 1.0, 1),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--members", type=int, default=50)
    ap.add_argument("--t", type=float, default=0.5)
    args = ap.parse_args()

    fam1 = sample_family(args.members, 0, 1.0, 1)
    for name in IDENTITIES:
        for n in (129, 257, 513):
            g = WeightedGrid.default(1, n, 1.0)
            r = max(IDENTITIES[name](m.on(g)) for m in fam1)
            print(f"identity {name:10s} n={n:4d} max_res={r:.3e} /h^2={r / g.h**2:.3f}")

    for cname, (s, c, d) in CONFIGS.items():
        k = constants_report(s, c, d)
        fam = sample_family(args.members, 0, c, d)
        levels = (65, 129, 257) if d == 2 else (129, 257, 513)
        for n in levels:
            g = WeightedGrid.default(d, n, c)
            fs = [m.on(g) for m in fam]
            rows = {
                "3.4-sharp": min(lemma_3_4_slack(f, args.t, s, "sharp") for f in fs),
                "3.4-stated": min(lemma_3_4_slack(f, args.t, s, "stated") for f in fs),
                "A2": min(a2_slack(f, args.t, s, k.K_A2) for f in fs),
                "A3": min(a3_slack(f, args.t, s, k.K_A3, k.alpha) for f in fs),
                "A3-corr": min(a3_slack(f, args.t, s, k.K_A3_corrected, k.alpha) for f in fs),
                "A4": k.K_A4 - max(abs(a4_ratio(u, v, args.t, s)) for u in fs[:10] for v in fs[:10]),
            }
            cells = " ".join(f"{key}={val:+.3e}({-val / g.h**2:+.3f})" for key, val in rows.items())
            scale = g.h**2 * max(1.0, s.f(args.t) + s.g.square(args.t))
            tight = max(abs(lemma_3_4_slack(f, args.t, s, "sharp")) for f in fs) / scale
            cells += f" tight={tight:.3f}"
            print(f"{cname:13s} n={n:4d} {cells}")


if __name__ == "__main__":
    main()
