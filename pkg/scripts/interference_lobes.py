"""Lobe positions and phases of the C/F interference map versus field.

    python scripts/interference_lobes.py
"""

import numpy as np

from ybtransducer.config import default_ensemble
from ybtransducer.spectra import interference_map, lobe_phases
from ybtransducer.spin import default_params


def main():
    fields = np.linspace(0, 5, 11)
    fM = np.linspace(3.366, 3.378, 481)
    rm = interference_map(default_params(), default_ensemble(), fields, fM)
    peak = rm.magnitude.max()
    for b, row in zip(fields, rm.values):
        lobes = lobe_phases(row, fM)
        desc = ", ".join(f"{f:.5f} GHz phase {ph:+.3f}" for f, _, ph in lobes) or "none"
        print(f"B = {b:4.1f} mT  max|S| / peak = {np.abs(row).max() / peak:.3e}  lobes: {desc}")


if __name__ == "__main__":
    main()
