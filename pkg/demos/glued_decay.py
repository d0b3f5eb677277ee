#!/usr/bin/env python3
"""Exponentially small error of the glued approximate metrics.

The approximate solution keeps the fiducial model inside r_on, the
power-law limiting configuration outside r_off, and interpolates the
exponent profile with a C-infinity cutoff in between.  Its self-duality
residual is supported on the annulus and falls like exp(-mu t); this script
sweeps t, prints the per-case fits, and shows how far below double
precision the strong-pole error dives while remaining measurable.

Run:  python3 demos/glued_decay.py
"""

import numpy as np

from hitchinlab.fiducial import CaseKind, LocalCase
from hitchinlab.glue import decay_sweep, fit_exponential_decay
from hitchinlab.painleve import ParabolicWeights


def main():
    ts = [4, 6, 8, 10, 12, 14, 16]
    cases = [
        ("simple zero           ", LocalCase(CaseKind.SIMPLE_ZERO)),
        ("strong pole a2-a1=0.2 ", LocalCase(CaseKind.STRONG_POLE, ParabolicWeights(0.4, 0.6))),
        ("strong pole a2-a1=0.6 ", LocalCase(CaseKind.STRONG_POLE, ParabolicWeights(0.2, 0.8))),
    ]
    print("residual of F_perp + t^2 [Phi, Phi*] on the gluing annulus")
    print("t:      " + "  ".join(f"{t:>9d}" for t in ts))
    fits = {}
    for name, case in cases:
        samples = decay_sweep(case, ts)
        fits[name] = fit_exponential_decay(samples)
        print(name + "  ".join(f"{e:9.2e}" for _, e in samples))
    print()
    for name, fit in fits.items():
        print(f"{name} ~ {fit.c:.3e} * exp(-{fit.mu:.3f} t)   (r^2 = {fit.r2:.5f})")
    print(
        "\nthe strong-pole rate tracks 8 sqrt(r_on) = "
        f"{8*np.sqrt(0.5):.3f} (the profile decay at the annulus edge);\n"
        "the zero-case rate tracks (8/3) r_on^{3/2} = "
        f"{(8/3)*0.5**1.5:.3f} with slowly varying prefactors."
    )

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for name, case in cases:
            samples = decay_sweep(case, ts)
            ax.semilogy(*zip(*samples), "o-", label=name.strip())
        ax.set_xlabel("t")
        ax.set_ylabel("annulus residual")
        ax.legend()
        fig.tight_layout()
        fig.savefig("glued_decay.png", dpi=120)
        print("\nwrote glued_decay.png")
    except ImportError:
        pass


if __name__ == "__main__":
    main()
