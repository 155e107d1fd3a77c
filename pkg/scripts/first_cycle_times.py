"""Stage times of the first cycle from the paper-phase1 preset, and where its energy loss happens."""
import math

import numpy as np

from bimono.bdsim import direct_energy_change, energy_change_per_cycle, initial_state, integrate_cycle, \
    localization_fraction


def crossing(t, g, direction):
    s = np.sign(g)
    for k in np.where(s[:-1] != s[1:])[0]:
        if np.sign(g[k + 1] - g[k]) == direction:
            return t[k] - g[k] * (t[k + 1] - t[k]) / (g[k + 1] - g[k])
    return math.nan


def main():
    params, state = initial_state("paper-phase1")
    sl = integrate_cycle(params, state)
    le = math.log(params.epsilon)
    t = np.linspace(sl.t_start, sl.t_end, 400001)
    y = sl.traj.sol(t)
    times = {"t1": crossing(t, y[0] - le, -1), "t2": crossing(t, y[1] - le, -1),
             "t3": crossing(t, y[0] - le, +1), "t4": crossing(t, y[1] - le, +1), "T": sl.t_end}
    print(f"eps = {params.epsilon:.7f}, M = {params.total_mass:.5f}")
    for k, v in times.items():
        print(f"{k:>3} = {v:10.3f}")
    print(f"E1 - E0 direct {direct_energy_change(sl):.6f}, quadrature {energy_change_per_cycle(sl):.6f}")
    print(f"share of the loss in the burst: {localization_fraction(sl):.3f}")


if __name__ == "__main__":
    main()
