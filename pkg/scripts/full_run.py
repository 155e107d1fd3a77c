"""Multi-cycle run from the section3 preset: cycle table, phase labels and fitted rates.

    python3 scripts/full_run.py --eps 0.02 --out runs/full-0.02
"""
import argparse
import json
import math
import time
from pathlib import Path

import numpy as np

from bimono.bdsim import CYCLE_COLUMNS, classify_phases, initial_state, run_full
from bimono.io import write_csv
from bimono.phase34 import spectral_constants


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, default=0.02)
    ap.add_argument("--p4", type=float, default=2.0, help="Phase IV tracking time in units of 1/eps^3")
    ap.add_argument("--out", default="runs/full")
    args = ap.parse_args()
    eps = args.eps
    out = Path(args.out)
    params, state = initial_state("section3", epsilon=eps)
    t0 = time.perf_counter()
    run = run_full(params, state, phase4_duration=args.p4 / eps ** 3)
    wall = time.perf_counter() - t0
    rep = classify_phases(run.cycles, eps)
    A, a = 2 / math.pi, spectral_constants().a
    write_csv(out / "cycles.csv", CYCLE_COLUMNS + ("phase",),
              [[getattr(c, k) for k in CYCLE_COLUMNS] + [lab] for c, lab in zip(run.cycles, rep.labels)])
    write_csv(out / "phase4.csv", ("t", "l1_to_steady"), run.phase4_trace.tolist())
    Ec = np.array([c.E_centred for c in run.cycles])
    win = (Ec / eps >= 20 * eps ** 2) & (Ec / eps <= 0.5)
    n = np.arange(len(Ec))
    p3 = -np.polyfit(n[win], np.log(Ec[win]), 1)[0] if win.sum() > 2 else math.nan
    result = {"summary": run.summary(), "wall_s": wall, "transitions": rep.transitions, "counts": rep.counts(),
              "phase2_rate_over_A_eps": rep.rates.get("II", math.nan) / (A * eps),
              "phase3_centred_rate_over_a_eps": p3 / (a * eps)}
    (out / "result.json").write_text(json.dumps(result, indent=2, default=float))
    print(json.dumps(result, indent=2, default=float))


if __name__ == "__main__":
    main()
