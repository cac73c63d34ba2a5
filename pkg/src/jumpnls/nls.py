"""Jump-adapted split-step solver for the NLS equation with multiplicative
Poisson noise, plus the exponent calculators of the well-posedness theory.

Between atoms of the point measure the solver integrates

    du/dt = -i Lap u + i sign lam |u|^(alpha-1) u - i m u,
    m = int_{S_n} (h - g)(z(x)) nu(dz),

by Strang splitting; at an atom (s, z) it applies u(s) = u(s-) (1 - i g(z)).
"""
from __future__ import annotations

import math
import struct
from functools import lru_cache
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple, Optional

import numpy as np

from .diagnostics import LEFT_LIMIT, POST_JUMP, REGULAR, energy, mass, sobolev_norm
from .grid import Grid
from .jump_measure import Marks, PointMeasure
from .noise import CoefficientPair, compensator_drift_field, evaluate_mark
from .paths import CadlagPath

__all__ = [
    "Grid",
    "SolverConfig",
    "Solution",
    "NumericalError",
    "free_group_apply",
    "nemytskii",
    "nonlinearity",
    "validate_alpha",
    "min_delta",
    "AdmissiblePair",
    "admissible_pair",
    "apply_jump",
    "step_between_jumps",
    "solve",
    "single_mode",
    "gaussian",
    "write_field",
    "read_field",
    "FIELD_MAGIC",
]


class NumericalError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Exponent calculators
# ---------------------------------------------------------------------------

def validate_alpha(d: int, alpha: float) -> bool:
    """alpha in [1, inf) for d <= 2 and alpha in [1, d/(d-2)) for d > 2."""
    if d < 1:
        raise ValueError("dimension must be positive")
    if alpha < 1:
        return False
    return d <= 2 or alpha < d / (d - 2)


def min_delta(d: int, alpha: float) -> float:
    """Lower bound on the Sobolev index delta for the uniqueness argument.

    d/2 - d/(2(alpha-1)) for d in {1, 2}, d/2 - 1/(alpha-1) for d > 2;
    alpha = 1 returns -inf (no constraint).
    """
    if not validate_alpha(d, alpha):
        raise ValueError(f"alpha={alpha} is not admissible in dimension {d}")
    if alpha == 1:
        return -math.inf
    if d <= 2:
        return d / 2 - d / (2 * (alpha - 1))
    return d / 2 - 1 / (alpha - 1)


class AdmissiblePair(NamedTuple):
    gamma: float
    rho: float
    gamma_conj: float
    rho_conj: float


def _conjugate(p: float) -> float:
    if p == math.inf:
        return 1.0
    if p == 1:
        return math.inf
    return p / (p - 1)


def admissible_pair(d: int, gamma: float) -> AdmissiblePair:
    """rho with 2/rho = d (1/2 - 1/gamma), plus the conjugate exponents.

    gamma ranges over [2, inf] for d = 1, [2, inf) for d = 2 and
    [2, 2d/(d-2)] for d > 2; gamma = 2 gives rho = inf.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    upper = math.inf if d <= 2 else 2 * d / (d - 2)
    ok = gamma >= 2 and (gamma <= upper if d != 2 else gamma < math.inf)
    if not ok:
        raise ValueError(f"gamma={gamma} outside the admissible range for d={d}")
    inv_gamma = 0.0 if gamma == math.inf else 1.0 / gamma
    two_over_rho = d * (0.5 - inv_gamma)
    rho = math.inf if two_over_rho == 0 else 2.0 / two_over_rho
    return AdmissiblePair(gamma, rho, _conjugate(gamma), _conjugate(rho))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def free_group_apply(u: np.ndarray, t: float, grid: Grid) -> np.ndarray:
    """Solution at time t of i u' = Lap u: mode k picks up exp(i |k|^2 t)."""
    if t == 0:
        return np.array(u, dtype=complex, copy=True)
    return np.fft.ifftn(np.exp(1j * grid.k_squared * t) * np.fft.fftn(u))


def nemytskii(f, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """u(x) f(z(x)); ``f`` is a coefficient such as ``pair.g``."""
    z = np.asarray(z)
    if np.shape(u) != z.shape:
        raise ValueError("field and mark shapes differ")
    return u * f(z)


def nonlinearity(u: np.ndarray, alpha: float) -> np.ndarray:
    """|u|^(alpha-1) u."""
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    return np.abs(u) ** (alpha - 1) * u


def apply_jump(u: np.ndarray, z: np.ndarray, pair: CoefficientPair) -> np.ndarray:
    """u(s) = u(s-) (1 - i g(z)) for the mark field z on the grid."""
    return u * (1.0 - 1j * pair.g(np.asarray(z)))


# ---------------------------------------------------------------------------
# Configuration and the solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 3.0
    lam: float = 1.0
    nonlinearity_sign: float = 1.0
    dt: float = 1e-3
    T: float = 1.0
    grid: Grid = field(default_factory=Grid)
    noise: Optional[object] = None  # IntensitySpec / DiscreteIntensity; None means nu = 0
    layer: int = 1
    pair: CoefficientPair = field(default_factory=lambda: CoefficientPair.linear(1.0, 1.0))
    seed: int = 0
    delta: float = 0.5
    snapshot_every: int = 1  # substeps between regular snapshots
    store_fields: bool = True
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if not validate_alpha(self.grid.d, self.alpha):
            raise ValueError(f"alpha={self.alpha} is not admissible in dimension {self.grid.d}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.nonlinearity_sign not in (1.0, -1.0):
            raise ValueError("nonlinearity_sign must be +1 or -1")
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")
        if self.noise is not None and self.noise.dim != self.grid.d:
            raise ValueError("noise marks and grid differ in dimension")


class _Stepper:
    """Strang step with cached free-group phases."""

    def __init__(self, config: SolverConfig, drift: np.ndarray):
        self.config = config
        self.grid = config.grid
        self.drift = drift
        self.has_drift = bool(np.any(drift != 0))
        self.coef = config.nonlinearity_sign * config.lam
        self._phases = {}

    def phase(self, t: float) -> np.ndarray:
        p = self._phases.get(t)
        if p is None:
            p = self._phases[t] = np.exp(1j * self.grid.k_squared * t)
        return p

    @property
    def free_only(self) -> bool:
        return self.coef == 0 and not self.has_drift

    def local(self, v: np.ndarray, h: float) -> np.ndarray:
        """Exact flow of the pointwise part: nonlinear phase and drift."""
        if self.coef != 0:
            v = v * np.exp(1j * self.coef * h * np.abs(v) ** (self.config.alpha - 1))
        if self.has_drift:
            v = v * np.exp(-1j * h * self.drift)
        return v

    def __call__(self, u: np.ndarray, h: float) -> np.ndarray:
        if self.free_only:
            return np.fft.ifftn(self.phase(h) * np.fft.fftn(u))
        half = self.phase(0.5 * h)
        v = self.local(np.fft.ifftn(half * np.fft.fftn(u)), h)
        return np.fft.ifftn(half * np.fft.fftn(v))

    def segment(self, u: np.ndarray, h: float, k: int, wanted):
        """Yield (q, field after substep q or None, probe) for q = 0..k-1.

        Consecutive half free steps are fused into one full step, so the
        field is only synthesized when ``wanted(q)`` holds and after the last
        substep.  ``probe`` is a field whose modulus tracks the solution for
        the blow-up guard.
        """
        if self.free_only:
            for q in range(k):
                u = self(u, h)
                yield q, u, u
            return
        half, full = self.phase(0.5 * h), self.phase(h)
        v = np.fft.ifftn(half * np.fft.fftn(u))
        for q in range(k):
            vh = np.fft.fftn(self.local(v, h))
            if q == k - 1 or wanted(q):
                u = np.fft.ifftn(half * vh)
                if q < k - 1:
                    v = np.fft.ifftn(full * vh)
                yield q, u, u
            else:
                v = np.fft.ifftn(full * vh)
                yield q, None, v


def step_between_jumps(u: np.ndarray, dt: float, config: SolverConfig, m=0.0) -> np.ndarray:
    """One Strang step of length dt <= config.dt for the flow between atoms."""
    if dt > config.dt * (1 + 1e-12):
        raise ValueError("substep longer than the configured dt")
    with np.errstate(invalid="ignore", over="ignore"):
        out = _Stepper(config, np.broadcast_to(np.asarray(m, dtype=complex), config.grid.shape))(u, dt)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite field after substep")
    return out


@dataclass
class Solution:
    """Snapshots of one trajectory; at each atom both the left limit and the
    post-jump value are recorded (jump_flag -1 and 1)."""

    config: SolverConfig
    times: np.ndarray
    flags: np.ndarray
    diagnostics: np.ndarray  # rows (t, mass, energy, hdelta, flag)
    fields: Optional[list]
    final: np.ndarray
    jump_times: np.ndarray
    aborted: bool = False
    abort_time: Optional[float] = None

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def _post_rows(self) -> np.ndarray:
        return np.flatnonzero(self.flags != LEFT_LIMIT)

    def left_limits(self) -> list:
        if self.fields is None:
            raise ValueError("fields were not stored")
        return [self.fields[i] for i in np.flatnonzero(self.flags == LEFT_LIMIT)]

    def path(self) -> CadlagPath:
        """Field-valued step path through the stored right values."""
        if self.fields is None:
            raise ValueError("fields were not stored")
        idx = self._post_rows()
        return CadlagPath(self.times[idx], np.stack([self.fields[i] for i in idx]), self._horizon())

    def scalar_path(self, column: str) -> CadlagPath:
        """Step path of mass, energy or hdelta through the right values."""
        col = {"mass": 1, "energy": 2, "hdelta": 3}[column]
        idx = self._post_rows()
        return CadlagPath(self.times[idx], self.diagnostics[idx, col], self._horizon())

    def _horizon(self) -> float:
        return self.abort_time if self.aborted else self.config.T

    def sup(self, column: str) -> float:
        col = {"mass": 1, "energy": 2, "hdelta": 3}[column]
        return float(np.max(self.diagnostics[:, col]))

    def at_end(self, column: str) -> float:
        col = {"mass": 1, "energy": 2, "hdelta": 3}[column]
        return float(self.diagnostics[-1, col])


@lru_cache(maxsize=32)
def _drift(noise, layer: int, pair: CoefficientPair, grid: Grid) -> np.ndarray:
    m = compensator_drift_field(noise, layer, pair, grid)
    m.setflags(write=False)
    return m


def solve(config: SolverConfig, eta: Optional[PointMeasure], u0: np.ndarray) -> Solution:
    """Integrate one trajectory driven by the atoms of ``eta``.

    Each gap between consecutive atoms is split into equal substeps of length
    at most ``config.dt``.  A deterministic function of its inputs.
    """
    grid = config.grid
    u = np.asarray(u0, dtype=complex)
    if u.shape != grid.shape or not np.all(np.isfinite(u)):
        raise ValueError("initial field must be finite and match the grid")
    if eta is not None and len(eta) and config.noise is None:
        raise ValueError("atoms given but the configuration has no intensity")
    if config.noise is not None:
        drift = _drift(config.noise, config.layer, config.pair, grid)
    else:
        drift = np.zeros(grid.shape, dtype=complex)
    step = _Stepper(config, drift)
    times = np.asarray(eta.times if eta is not None else [], dtype=float)
    times = times[times <= config.T]
    marks = eta.marks[np.arange(len(times))] if len(times) else Marks.empty(grid.d)

    snap_t, snap_f, snap_flag, snap_fields = [], [], [], []

    def record(t, v, flag):
        snap_t.append(t)
        snap_flag.append(flag)
        snap_f.append((mass(v, grid), energy(v, grid, config.alpha, config.lam, config.nonlinearity_sign),
                       sobolev_norm(v, grid, config.delta)))
        if config.store_fields:
            snap_fields.append(v.copy())

    record(0.0, u, REGULAR)
    t = 0.0
    counter = 0
    aborted, abort_time = False, None
    stops = list(times) + ([config.T] if not len(times) or times[-1] < config.T else [])
    for i, stop in enumerate(stops):
        gap = stop - t
        k = max(1, math.ceil(gap / config.dt - 1e-9)) if gap > 0 else 0
        h = gap / k if k else 0.0
        first = counter
        for q, field_q, probe in step.segment(u, h, k, lambda q: (first + q + 1) % config.snapshot_every == 0):
            counter += 1
            t_now = stop if q == k - 1 else t + (q + 1) * h
            if not np.all(np.isfinite(probe)) or np.max(np.abs(probe)) > config.blowup_threshold:
                aborted, abort_time = True, t_now
                u = probe
                break
            if field_q is not None:
                u = field_q
                if q < k - 1:
                    record(t_now, u, REGULAR)
        if aborted:
            record(abort_time, u, REGULAR)
            break
        t = stop
        if i < len(times):
            record(t, u, LEFT_LIMIT)
            u = apply_jump(u, evaluate_mark(marks[[i]], grid), config.pair)
            record(t, u, POST_JUMP)
            if np.max(np.abs(u)) > config.blowup_threshold:
                aborted, abort_time = True, t
                break
        else:
            record(t, u, REGULAR)
    diag = np.column_stack([snap_t, np.array(snap_f).reshape(-1, 3), snap_flag])
    return Solution(config, np.array(snap_t), np.array(snap_flag), diag,
                    snap_fields if config.store_fields else None, u,
                    times[: np.count_nonzero(times <= (abort_time if aborted else config.T))]
                    if len(times) else times, aborted, abort_time)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def single_mode(grid: Grid, mode: int = 1, amplitude: complex = 1.0) -> np.ndarray:
    """amplitude * exp(i k x_1) with k = 2 pi mode / L."""
    k = 2 * np.pi * mode / grid.L
    return amplitude * np.exp(1j * k * grid.coords[0])


def gaussian(grid: Grid, amplitude: float = 1.0, width: float = 0.5) -> np.ndarray:
    """amplitude * exp(-|x - center|^2 / (2 width^2)) centered in the box."""
    r = grid.distance_from(np.full(grid.d, grid.L / 2))
    return (amplitude * np.exp(-r ** 2 / (2 * width ** 2))).astype(complex)


# ---------------------------------------------------------------------------
# Binary field snapshots
# ---------------------------------------------------------------------------

FIELD_MAGIC = b"SNLSFLD\0"
FIELD_VERSION = 1
_HEADER = struct.Struct("<8sqqqd")


def write_field(fh: BinaryIO, u: np.ndarray, grid: Grid) -> None:
    """Header (magic, version, d, N, L) then interleaved little-endian complex128, row-major."""
    u = np.asarray(u, dtype=complex)
    if u.shape != grid.shape:
        raise ValueError("field does not match the grid")
    fh.write(_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, grid.d, grid.N, float(grid.L)))
    fh.write(np.ascontiguousarray(u).astype("<c16").tobytes(order="C"))


def read_field(fh: BinaryIO):
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated field header")
    magic, version, d, N, L = _HEADER.unpack(head)
    if magic != FIELD_MAGIC:
        raise ValueError("not a field snapshot")
    if version != FIELD_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = Grid(int(d), int(N), float(L))
    count = N ** d
    data = fh.read(16 * count)
    if len(data) != 16 * count:
        raise ValueError("truncated field data")
    return np.frombuffer(data, dtype="<c16").reshape(grid.shape).astype(complex), grid
