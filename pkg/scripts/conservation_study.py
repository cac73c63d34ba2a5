"""Mass and energy drift of the deterministic splitting scheme against dt."""
import numpy as np

from jumpnls.diagnostics import energy, mass
from jumpnls.grid import Grid
from jumpnls.nls import SolverConfig, gaussian, solve


def drifts(grid, dt, T=1.0):
    sol = solve(SolverConfig(grid=grid, lam=1.0, alpha=3.0, noise=None, T=T, dt=dt, snapshot_every=1),
                None, gaussian(grid, 1.0, 0.7))
    m = np.array([mass(u, grid) for u in sol.fields])
    e = np.array([energy(u, grid, 3.0, 1.0) for u in sol.fields])
    return np.max(np.abs(m / m[0] - 1)), np.max(np.abs(e / e[0] - 1))


if __name__ == "__main__":
    grid = Grid(1, 256, 2 * np.pi)
    prev = None
    print(f"{'dt':>9} {'mass drift':>11} {'energy drift':>13} {'ratio':>7}")
    for dt in (4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4):
        m, e = drifts(grid, dt)
        ratio = prev / e if prev else float("nan")
        print(f"{dt:9.2e} {m:11.2e} {e:13.3e} {ratio:7.3f}")
        prev = e
