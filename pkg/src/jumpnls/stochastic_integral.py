"""The compensated Poisson integral of step processes and its extensions.

For a step process xi with cells (t_{j-1}, t_j] the integral against the
compensated measure eta - nu x Leb is

    I(t) = sum_j [ sum of xi_j(z) over atoms (s, z) with s in the cell, s <= t
                   - |cell cap (0, t]| * int xi_j dnu ].

Cell values are constants (scalars or arrays) or callables of a mark batch,
so scalar- and field-valued integrands go through the same code.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .jump_measure import Marks, PointMeasure
from .paths import CadlagPath, SimpleProcess, dyadic_partition, lp_path_norm, shifted_haar_projection

__all__ = [
    "DomainError",
    "PreconditionError",
    "compensator_integrals",
    "integrate_simple",
    "sample_integrals",
    "ProgressiveResult",
    "haar_mark_projection",
    "integrate_progressive",
    "localize_tau_R",
    "isometry_oracle",
    "path_lp_mass",
]

TIME_NODES = 8  # Gauss-Legendre nodes per dyadic cell for time averages


class DomainError(ValueError):
    """An atom carries a mark outside the layer the integral is taken over."""


class PreconditionError(ValueError):
    pass


def _cell_values(v, marks: Marks):
    """xi_j evaluated on a batch of marks: shape (len(marks),) + value shape."""
    if callable(v):
        return np.asarray(v(marks))
    v = np.asarray(v)
    return np.broadcast_to(v, (len(marks),) + v.shape)


def compensator_integrals(xi: SimpleProcess, spec, layer: int, quad: Optional[dict] = None) -> list:
    """[int_{S_layer} xi_j(z) nu(dz) for every cell j]."""
    quad = quad or {}
    rate = spec.total_rate(layer)
    out = []
    for v in xi.values:
        if callable(v):
            out.append(np.asarray(spec.integrate(v, layer, **quad)))
        else:
            out.append(np.asarray(v) * rate)
    return out


def _check_marks(eta: PointMeasure, spec) -> None:
    if len(eta) and not np.all(spec.in_layer(eta.marks, eta.layer)):
        raise DomainError(f"point measure has marks outside layer S_{eta.layer}")


def _clipped_cells(xi: SimpleProcess, t: float):
    p = xi.partition
    lo = np.minimum(p[:-1], t)
    hi = np.minimum(p[1:], t)
    return lo, hi


def integrate_simple(xi: SimpleProcess, eta: PointMeasure, spec, t: Optional[float] = None,
                     quad: Optional[dict] = None, compensators: Optional[list] = None):
    """I_{xi, eta~}(t) for a step process; ``compensators`` may carry cached
    cell integrals from :func:`compensator_integrals`."""
    t = xi.horizon if t is None else t
    if not 0.0 <= t <= xi.horizon:
        raise ValueError(f"t={t} outside the partition [0, {xi.horizon}]")
    _check_marks(eta, spec)
    comp = compensators if compensators is not None else compensator_integrals(xi, spec, eta.layer, quad)
    lo, hi = _clipped_cells(xi, t)
    total = 0.0
    for j, v in enumerate(xi.values):
        if hi[j] <= lo[j]:
            continue
        sel = np.flatnonzero((eta.times > lo[j]) & (eta.times <= hi[j]))
        jumps = _cell_values(v, eta.marks[sel]).sum(axis=0) if len(sel) else 0.0
        total = total + jumps - comp[j] * (hi[j] - lo[j])
    return total


def sample_integrals(xi: SimpleProcess, spec, layer: int, t: float, samples: int,
                     rng: np.random.Generator, quad: Optional[dict] = None,
                     chunk: int = 20000) -> np.ndarray:
    """Independent draws of I(t) for a deterministic step process.

    Equivalent in law to sampling a point measure per draw and calling
    :func:`integrate_simple`, but all atoms of a chunk of draws are sampled
    and evaluated together.
    """
    comp = compensator_integrals(xi, spec, layer, quad)
    lo, hi = _clipped_cells(xi, t)
    drift = sum(c * (b - a) for c, a, b in zip(comp, lo, hi))
    rate = spec.total_rate(layer) * t
    parts = []
    for start in range(0, samples, chunk):
        m = min(chunk, samples - start)
        counts = rng.poisson(rate, size=m) if rate > 0 else np.zeros(m, dtype=np.int64)
        k = int(counts.sum())
        owner = np.repeat(np.arange(m), counts)
        times = t * (1.0 - rng.random(k))
        marks = spec.sample_marks(k, layer, rng) if k else Marks.empty(spec.dim)
        cell = np.clip(np.searchsorted(xi.partition, times, side="left") - 1, 0, len(xi.values) - 1)
        acc = None
        for j, v in enumerate(xi.values):
            sel = np.flatnonzero(cell == j)
            vals = _cell_values(v, marks[sel]) if len(sel) else np.zeros((0,) + np.shape(comp[j]))
            if acc is None:
                acc = np.zeros((m,) + vals.shape[1:], dtype=np.result_type(vals, comp[j], float))
            np.add.at(acc, owner[sel], vals)
        parts.append(acc - drift)
    return np.concatenate(parts)


def isometry_oracle(xi: SimpleProcess, spec, layer: int, t: Optional[float] = None,
                    quad: Optional[dict] = None, weight: float = 1.0) -> float:
    """int_0^t int_{S_layer} |xi(s, z)|^2 nu(dz) ds; for arrays |v|^2 = weight * sum |v_i|^2."""
    t = xi.horizon if t is None else t
    sq = xi.map(lambda v: _squared_norm(v, weight))
    lo, hi = _clipped_cells(xi, t)
    comp = compensator_integrals(sq, spec, layer, quad)
    return float(np.real(sum(c * (b - a) for c, a, b in zip(comp, lo, hi))))


def _squared_norm(v, weight: float):
    def sq(arr):
        arr = np.asarray(arr)
        return weight * np.sum(np.abs(arr.reshape(arr.shape[0], -1)) ** 2, axis=1)

    if callable(v):
        return lambda marks: sq(_cell_values(v, marks))
    arr = np.asarray(v)
    return float(weight * np.sum(np.abs(arr) ** 2))


# ---------------------------------------------------------------------------
# Progressive integrands
# ---------------------------------------------------------------------------

def haar_mark_projection(f: Callable[[float, Marks], np.ndarray], T: float, n: int,
                         time_nodes: int = TIME_NODES) -> SimpleProcess:
    """Shifted Haar projection of a mark-indexed integrand ``f(s, marks)``.

    Cell j+1 carries the time average of f over the dyadic cell j (Gauss-Legendre
    in time); the first cell carries 0.
    """
    s = dyadic_partition(T, n)
    x, w = np.polynomial.legendre.leggauss(time_nodes)

    def average(a, b):
        nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
        wts = 0.5 * w
        return lambda marks: sum(wq * np.asarray(f(sq, marks)) for sq, wq in zip(nodes, wts))

    vals = [lambda marks: 0.0 * np.asarray(f(0.0, marks))]
    vals += [average(s[j - 1], s[j]) for j in range(1, 2 ** n)]
    return SimpleProcess(s, tuple(vals))


@dataclass(frozen=True)
class ProgressiveResult:
    value: complex
    level: int
    levels: tuple = ()
    values: tuple = ()
    cauchy: tuple = field(default=())  # |I_k - I_{k-1}| for consecutive reported levels


def _l2_norm_sq(f: Callable, spec, layer: int, t: float, quad: dict, time_nodes: int = 32) -> float:
    x, w = np.polynomial.legendre.leggauss(time_nodes)
    total = 0.0
    for xq, wq in zip(x, w):
        s = 0.5 * t * (xq + 1)
        sq = _squared_norm(lambda m, s=s: f(s, m), 1.0)
        total += 0.5 * t * wq * float(np.real(spec.integrate(sq, layer, **quad)))
    return total


def integrate_progressive(xi, eta: PointMeasure, spec, t: Optional[float] = None, n: int = 6,
                          report_levels: int = 3, quad: Optional[dict] = None,
                          horizon: Optional[float] = None) -> ProgressiveResult:
    """Level-n value of the integral of a progressive integrand.

    ``xi`` is either a :class:`CadlagPath` (mark-independent integrand, projected
    exactly) or a callable ``xi(s, marks)``.  Values at the ``report_levels``
    coarser levels are returned alongside as a convergence report.
    """
    quad = quad or {}
    T = horizon if horizon is not None else (xi.horizon if isinstance(xi, CadlagPath) else eta.horizon)
    t = T if t is None else t
    if isinstance(xi, CadlagPath):
        norm_sq = float(spec.total_rate(eta.layer)) * (_path_sq_integral(xi, t))
    else:
        norm_sq = _l2_norm_sq(xi, spec, eta.layer, t, quad)
    if not np.isfinite(norm_sq):
        raise PreconditionError("integrand has no finite L^2 norm")
    levels = tuple(range(max(0, n - report_levels), n + 1))
    values = []
    for k in levels:
        if isinstance(xi, CadlagPath):
            step = shifted_haar_projection(xi, k)
        else:
            step = haar_mark_projection(xi, T, k)
        values.append(integrate_simple(step, eta, spec, t, quad))
    diffs = tuple(float(np.linalg.norm(np.ravel(b - a))) for a, b in zip(values, values[1:]))
    return ProgressiveResult(values[-1], n, levels, tuple(values), diffs)


def _path_sq_integral(x: CadlagPath, t: float) -> float:
    if t < x.horizon:
        x = CadlagPath(x.times[x.times < t], x.values[x.times < t], t, x.slopes[x.times < t])
    return lp_path_norm(x, 2) ** 2


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def path_lp_mass(xi: SimpleProcess, p: float = 2.0, spec=None, layer: Optional[int] = None,
                 quad: Optional[dict] = None, weight: float = 1.0) -> np.ndarray:
    """Per-cell rate of the running mass int_0^t |xi(s)|^p ds.

    Numeric cells use |v|^p (|v|^2 = weight * sum |v_i|^2 for arrays); mark-indexed
    cells use int |xi_j(z)|^p nu(dz) and need ``spec`` and ``layer``.
    """
    rates = []
    for v in xi.values:
        if callable(v):
            if spec is None or layer is None:
                raise ValueError("mark-indexed integrand needs the intensity and layer")
            f = lambda m, v=v: (_squared_norm(v, weight)(m)) ** (p / 2)
            rates.append(float(np.real(spec.integrate(f, layer, **(quad or {})))))
        else:
            rates.append(_squared_norm(v, weight) ** (p / 2))
    return np.array(rates)


def localize_tau_R(xi: SimpleProcess, R: float, p: float = 2.0, spec=None, layer: Optional[int] = None,
                   quad: Optional[dict] = None, weight: float = 1.0):
    """tau^R = inf{t : int_0^t |xi|^p >= R} (T if never reached) and xi * 1_[0, tau^R]."""
    if not R > 0:
        raise ValueError("R must be positive")
    rates = path_lp_mass(xi, p, spec, layer, quad, weight)
    widths = np.diff(xi.partition)
    before = np.concatenate([[0.0], np.cumsum(rates * widths)])
    tau = xi.horizon
    for j, r in enumerate(rates):
        if before[j + 1] >= R and r > 0:
            tau = float(xi.partition[j] + (R - before[j]) / r)
            tau = min(max(tau, float(xi.partition[j])), float(xi.partition[j + 1]))
            break
    return tau, xi.truncated(tau)
