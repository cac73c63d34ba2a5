"""Independent reference computations used by the test-suite.

Each oracle deliberately takes a different route from the library code:
plain Python loops instead of vectorised enumeration, generic scipy
integrators instead of closed forms, brute-force grids instead of dynamic
programming.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def lp_critical_values(weights_mu, weights_nu, dist) -> float:
    """Levy-Prokhorov distance by exhaustive enumeration of critical values.

    For eps in (d_k, d_{k+1}] the open neighbourhoods A^eps are constant, so
    the worst excess D_k is constant there and the infimum over the interval
    is max(d_k, D_k) when that does not exceed d_{k+1}.
    """
    n = len(weights_mu)
    mu = [float(x) for x in weights_mu]
    nu = [float(x) for x in weights_nu]
    support = [i for i in range(n) if mu[i] > 0 or nu[i] > 0]
    if mu == nu:
        return 0.0
    levels = sorted({0.0} | {float(dist[i][j]) for i in support for j in support if i != j})
    levels.append(math.inf)
    best = math.inf
    for k in range(len(levels) - 1):
        lo, hi = levels[k], levels[k + 1]
        worst = 0.0
        for r in range(len(support) + 1):
            for A in itertools.combinations(support, r):
                near = [x for x in support if any(dist[x][a] <= lo for a in A)]
                worst = max(worst,
                            sum(mu[a] for a in A) - sum(nu[x] for x in near),
                            sum(nu[a] for a in A) - sum(mu[x] for x in near))
        cand = max(lo, worst)
        if cand <= hi:
            best = min(best, cand)
    return best


def d0_single_breakpoint_search(x, y) -> float:
    """min over time changes with one interior breakpoint (t0, l0) of
    ||lambda||_log v sup|x - y o lambda|, by brute force on a grid;
    sup evaluated on a dense time grid."""
    ts = np.linspace(0.0, 1.0, 4001)
    best = math.inf
    for t0 in np.linspace(0.05, 0.95, 37):
        for l0 in np.linspace(0.05, 0.95, 361):
            s1, s2 = l0 / t0, (1 - l0) / (1 - t0)
            log_norm = max(abs(math.log(s1)), abs(math.log(s2)))
            if log_norm >= best:
                continue
            lam = np.where(ts < t0, s1 * ts, l0 + s2 * (ts - t0))
            lam = np.clip(lam, 0.0, 1.0)
            sup = float(np.max(np.abs(x(ts) - y(lam))))
            best = min(best, max(log_norm, sup))
    return best


def single_mode_ode(k: float, t: float) -> complex:
    """Coefficient of a single Fourier mode under i c' = -k^2 c, by RK45."""
    def rhs(_, y):
        c = y[0] + 1j * y[1]
        dc = 1j * k * k * c  # i c' = -k^2 c  =>  c' = i k^2 c
        return [dc.real, dc.imag]

    sol = integrate.solve_ivp(rhs, (0.0, t), [1.0, 0.0], rtol=1e-12, atol=1e-13, method="DOP853")
    return complex(sol.y[0, -1], sol.y[1, -1])


def riemann_average(f, a: float, b: float, points: int = 10_000) -> float:
    """Midpoint Riemann sum of f over (a, b), divided by b - a."""
    s = a + (np.arange(points) + 0.5) * (b - a) / points
    return float(np.mean(f(s)))


def bump_integrals_quad(d: int):
    """int phi^2 and int phi over R^d by scipy quad in Cartesian form."""
    phi = lambda r: math.exp(1 - 1 / (1 - r * r)) if r < 1 else 0.0
    if d == 1:
        l2 = integrate.quad(lambda x: phi(abs(x)) ** 2, -1, 1, epsabs=1e-13)[0]
        i1 = integrate.quad(lambda x: phi(abs(x)), -1, 1, epsabs=1e-13)[0]
        return l2, i1
    l2 = integrate.dblquad(lambda y, x: phi(math.hypot(x, y)) ** 2, -1, 1, -1, 1, epsabs=1e-10)[0]
    i1 = integrate.dblquad(lambda y, x: phi(math.hypot(x, y)), -1, 1, -1, 1, epsabs=1e-10)[0]
    return l2, i1


def poisson_integral_moments_loop(values_by_cell, partition, rate, rng, samples):
    """Draw I(T) for a mark-independent step integrand with a per-sample loop."""
    out = np.empty(samples)
    T = partition[-1]
    for i in range(samples):
        k = rng.poisson(rate * T)
        times = rng.uniform(0, T, size=k)
        total = 0.0
        for j, v in enumerate(values_by_cell):
            a, b = partition[j], partition[j + 1]
            total += v * (np.count_nonzero((times > a) & (times <= b)) - rate * (b - a))
        out[i] = total
    return out
