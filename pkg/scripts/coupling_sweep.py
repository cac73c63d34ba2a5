"""Empirical moment constant E sup mass / (1 + mass(u0)) against the jump coupling c_g."""
import sys

import numpy as np

from jumpnls.config import load_config
from jumpnls.diagnostics import mass
from jumpnls.experiments import run_ensemble

if __name__ == "__main__":
    cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else "configs/default.ini")
    size = int(sys.argv[2]) if len(sys.argv) > 2 else 50
    m0 = mass(cfg.initial_field(), cfg.grid)
    print(f"{'c_g':>5} {'C_emp':>8} {'mean jumps':>11}")
    for c_g in (0.25, 0.5, 1.0, 2.0, 4.0):
        runs = run_ensemble(cfg.with_coefficients(c_g), cfg.experiment.seed, size)
        c = np.mean([r.sup_mass for r in runs]) / (1 + m0)
        print(f"{c_g:5.2f} {c:8.4f} {np.mean([r.jumps for r in runs]):11.2f}")
