"""Magneto-optic coefficient versus the detuning cutoffs used in the tail integrals.

Prints alpha for each material preset under both cutoff rules and for
cutoffs scaled by a range of factors, plus the Yb/Er ratio at each scale.

    python scripts/alpha_cutoff_sensitivity.py
"""

import numpy as np

from ybtransducer.efficiency import alpha_coefficient, default_cutoffs, load_materials


def main():
    mats = load_materials()
    yb, er = mats["yb171_yvo"], mats["er_yso"]
    for rule in ("sigma", "hwhm"):
        print(f"cutoff rule {rule}")
        for m in mats.values():
            print(f"  {m.name:14s} alpha = {alpha_coefficient(m, default_cutoffs(m, rule)).alpha_s:.3e} s")
    print("\nscale  alpha_yb     alpha_er     ratio")
    for s in np.geomspace(0.1, 10, 9):
        a = alpha_coefficient(yb, tuple(s * c for c in default_cutoffs(yb))).alpha_s
        b = alpha_coefficient(er, tuple(s * c for c in default_cutoffs(er))).alpha_s
        print(f"{s:5.2f}  {a:.3e}  {b:.3e}  {a / b:7.1f}")


if __name__ == "__main__":
    main()
