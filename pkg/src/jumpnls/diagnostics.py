"""Mass, energy, Sobolev norms, exit times and the mild-solution finiteness report.

All integrals over the torus use the grid rule, which is exact for
band-limited fields; gradients and Sobolev weights are spectral.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Grid
from .jump_measure import Marks
from .noise import DiscreteIntensity, bump_profile, evaluate_mark
from .paths import CadlagPath

__all__ = [
    "mass",
    "energy",
    "sobolev_norm",
    "tau_m",
    "FinitenessReport",
    "mild_finiteness_report",
    "DIAGNOSTIC_COLUMNS",
    "diagnostics_csv",
    "read_diagnostics_csv",
]

DIAGNOSTIC_COLUMNS = ("t", "mass", "energy", "hdelta", "jump_flag")
REGULAR, POST_JUMP, LEFT_LIMIT = 0, 1, -1


def mass(u: np.ndarray, grid: Grid) -> float:
    """int |u|^2 dx."""
    return float(np.sum(np.abs(u) ** 2) * grid.cell_volume)


def energy(u: np.ndarray, grid: Grid, alpha: float, lam: float, sign: float = 1.0) -> float:
    """1/2 int |grad u|^2 + sign * lam / (alpha + 1) int |u|^(alpha + 1)."""
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    uh = grid.spectral_amplitudes(u)
    kinetic = 0.5 * float(np.sum(grid.k_squared * np.abs(uh) ** 2))
    potential = float(np.sum(np.abs(u) ** (alpha + 1)) * grid.cell_volume)
    return kinetic + sign * lam / (alpha + 1) * potential


def sobolev_norm(u: np.ndarray, grid: Grid, s: float) -> float:
    """(sum (1 + |k|^2)^s |u_hat(k)|^2)^(1/2) with sum |u_hat|^2 = mass."""
    if not -2 <= s <= 2:
        raise ValueError("Sobolev index must lie in [-2, 2]")
    uh = grid.spectral_amplitudes(u)
    return float(np.sqrt(np.sum((1.0 + grid.k_squared) ** s * np.abs(uh) ** 2)))


def tau_m(path: CadlagPath, m: float, delta: Optional[float] = None, grid: Optional[Grid] = None) -> float:
    """First breakpoint at which the H^delta norm reaches m, else the horizon.

    ``path`` holds either scalar norms or fields (then ``delta`` and ``grid``
    are required).  A path starting at norm >= m gives 0.
    """
    if path.value_shape:
        if delta is None or grid is None:
            raise ValueError("field-valued paths need delta and grid")
        norms = np.array([sobolev_norm(v, grid, delta) for v in path.values])
    else:
        norms = np.abs(path.values)
    hit = np.flatnonzero(norms >= m)
    return float(path.times[hit[0]]) if len(hit) else float(path.horizon)


# ---------------------------------------------------------------------------
# Finiteness of the terms in the mild formulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FinitenessReport:
    nonlinear: float
    small_jump: float
    large_jump: float
    compensator: float

    @property
    def terms(self) -> dict:
        return {"nonlinear": self.nonlinear, "small_jump": self.small_jump,
                "large_jump": self.large_jump, "compensator": self.compensator}

    @property
    def all_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.terms.values())

    @property
    def flagged(self) -> list:
        return [k for k, v in self.terms.items() if not np.isfinite(v)]


def _profile_norms(u_sq: np.ndarray, grid: Grid, f, marks: Marks) -> np.ndarray:
    """For each (amplitude, width) node: int |u|^2 |f(z_c)|^2 dx for every center c on the grid.

    Returns shape (len(marks), N^d); computed as one FFT convolution per node.
    """
    r = grid.distance_from(np.zeros(grid.d))
    u_hat = np.fft.fftn(u_sq)
    out = np.empty((len(marks), u_sq.size))
    for i, (a, w) in enumerate(zip(marks.amplitude, marks.width)):
        prof = np.abs(np.asarray(f(a * bump_profile(r / w)))) ** 2
        # sum_x u_sq(x) prof(x - c) for all c: correlation by FFT (prof is even)
        conv = np.fft.ifftn(u_hat * np.fft.fftn(prof)).real
        out[i] = np.maximum(conv, 0.0).ravel() * grid.cell_volume
    return out


def _jump_terms(u: np.ndarray, grid: Grid, spec, layer: int, pair, nodes: int):
    """Small-jump, large-jump and compensator integrands at one time."""
    u_sq = np.abs(u) ** 2
    if isinstance(spec, DiscreteIntensity):
        z = evaluate_mark(spec.marks, grid).reshape((len(spec.marks),) + grid.shape)
        wts = np.asarray(spec.weights)
        g_sq = np.array([np.sum(u_sq * np.abs(pair.g(zi)) ** 2) for zi in z]) * grid.cell_volume
        h_sq = np.array([np.sum(u_sq * np.abs(pair.h(zi)) ** 2) for zi in z]) * grid.cell_volume
        center_w = None
    else:
        marks, wts = spec.quadrature(layer, nodes)
        if len(wts) == 0:
            return 0.0, 0.0, 0.0
        g_sq = _profile_norms(u_sq, grid, pair.g, marks)
        h_sq = _profile_norms(u_sq, grid, pair.h, marks)
        center_w = 1.0 / g_sq.shape[1]  # uniform centers on the grid nodes
    g_norm = np.sqrt(g_sq)
    small = np.where(g_norm < 1, g_sq, 0.0)
    large = np.where(g_norm >= 1, g_norm, 0.0)
    comp = np.sqrt(h_sq)
    if center_w is not None:
        small, large, comp = (x.sum(axis=1) * center_w for x in (small, large, comp))
    return float(wts @ small), float(wts @ large), float(wts @ comp)


def mild_finiteness_report(times: Sequence[float], fields: Sequence[np.ndarray], grid: Grid,
                           alpha: float, spec=None, layer: int = 1, pair=None,
                           nodes: int = 16, stride: int = 1) -> FinitenessReport:
    """The four time integrals appearing in the mild formulation, by the
    trapezoid rule over the recorded snapshots.

    Consecutive snapshots with equal times (left limit then post-jump value)
    contribute no width, so each interval uses the post-jump value at its
    start and the left limit at its end.  ``stride`` thins the regular
    snapshots; jump snapshots are always kept.
    """
    times = np.asarray(times, dtype=float)
    keep = _thin(times, stride)
    t = times[keep]
    fs = [fields[i] for i in keep]
    # |F(u)| = |u|^alpha pointwise
    nl = np.array([np.sqrt(np.sum(np.abs(u) ** (2 * alpha)) * grid.cell_volume) for u in fs])
    if spec is None or pair is None:
        jumps = np.zeros((len(fs), 3))
    else:
        jumps = np.array([_jump_terms(u, grid, spec, layer, pair, nodes) for u in fs])
    vals = np.column_stack([nl, jumps])
    widths = np.diff(t)[:, None]
    integrals = np.sum(0.5 * widths * (vals[:-1] + vals[1:]), axis=0) if len(t) > 1 else np.zeros(4)
    return FinitenessReport(*map(float, integrals))


def _thin(times: np.ndarray, stride: int) -> np.ndarray:
    if stride <= 1:
        return np.arange(len(times))
    same_as_next = np.append(times[1:] == times[:-1], False)
    same_as_prev = np.insert(times[1:] == times[:-1], 0, False)
    idx = np.arange(len(times))
    keep = (idx % stride == 0) | same_as_next | same_as_prev | (idx == len(times) - 1)
    return idx[keep]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def diagnostics_csv(rows: Sequence[Sequence[float]]) -> str:
    """Header plus one row per snapshot; floats in round-trip repr."""
    buf = io.StringIO()
    buf.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
    for t, m, e, h, flag in rows:
        buf.write(f"{float(t)!r},{float(m)!r},{float(e)!r},{float(h)!r},{int(flag)}\n")
    return buf.getvalue()


def read_diagnostics_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != DIAGNOSTIC_COLUMNS:
        raise ValueError("not a diagnostics CSV")
    return np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, 5)
