"""Phase II and III decay rates of the full system for several eps, against A eps and a eps."""
import math
import sys

import numpy as np

from bimono.bdsim import classify_phases, initial_state, run_full
from bimono.phase34 import spectral_constants


def main(eps_list):
    A, a = 2 / math.pi, spectral_constants().a
    print(f"{'eps':>7} {'cycles':>7} {'II/(A eps)':>11} {'III/(a eps)':>12}")
    for eps in eps_list:
        params, state = initial_state("section3", epsilon=eps)
        run = run_full(params, state, phase4_duration=0.5 / eps ** 3)
        rep = classify_phases(run.cycles, eps)
        Ec = np.array([c.E_centred for c in run.cycles])
        win = (Ec / eps >= 20 * eps ** 2) & (Ec / eps <= 0.5)
        n = np.arange(len(Ec))
        p3 = -np.polyfit(n[win], np.log(Ec[win]), 1)[0] if win.sum() > 2 else math.nan
        print(f"{eps:7.4f} {len(run.cycles):7d} {rep.rates.get('II', math.nan) / (A * eps):11.3f} "
              f"{p3 / (a * eps):12.3f}")


if __name__ == "__main__":
    main([float(x) for x in sys.argv[1:]] or [0.02, 0.01])
