"""Cadlag paths, step processes and dyadic approximation operators.

Paths are piecewise linear between breakpoints (piecewise constant is the
special case of zero slopes) and right-continuous at every breakpoint, so all
integrals, norms and suprema below are computed exactly piece by piece.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .jump_measure import CapacityError

__all__ = [
    "CadlagPath",
    "SimpleProcess",
    "dyadic_partition",
    "haar_average",
    "shifted_haar_projection",
    "dyadic_projection",
    "lp_path_norm",
    "skorokhod_d0_upper",
    "skorokhod_objective",
    "D0Search",
    "MAX_D0_DEPTH",
    "SLOPE_BOUND",
]

MAX_D0_DEPTH = 12
SLOPE_BOUND = 16.0  # time changes keep slopes in [1/16, 16]
VALUE_REFINEMENT = 4  # value grid is 2^4 times finer than the breakpoint grid


def _norm(v: np.ndarray) -> np.ndarray:
    """|v| over the trailing value axes."""
    v = np.asarray(v)
    if v.ndim <= 1:
        return np.abs(v)
    return np.sqrt(np.sum(np.abs(v.reshape(len(v), -1)) ** 2, axis=1))


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """x(t) = values[i] + slopes[i] * (t - times[i]) on [times[i], times[i+1]).

    ``times[0]`` must be 0 and the last piece extends to ``horizon``.
    """

    times: np.ndarray
    values: np.ndarray
    horizon: float
    slopes: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        s = np.zeros_like(v) if self.slopes is None else np.asarray(self.slopes, dtype=v.dtype)
        if t.ndim != 1 or len(t) == 0 or len(v) != len(t) or s.shape != v.shape:
            raise ValueError("need matching, non-empty times/values/slopes")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] > self.horizon:
            raise ValueError("breakpoints must start at 0, increase strictly and stay within the horizon")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slopes", s)

    @classmethod
    def constant(cls, value, horizon: float = 1.0) -> "CadlagPath":
        return cls(np.array([0.0]), np.array([value]), horizon)

    @classmethod
    def linear(cls, times, values, horizon: Optional[float] = None) -> "CadlagPath":
        """Continuous piecewise-linear interpolant through (times, values)."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        slopes = np.zeros_like(v)
        slopes[:-1] = np.diff(v, axis=0) / np.diff(t).reshape((-1,) + (1,) * (v.ndim - 1))
        horizon = t[-1] if horizon is None else horizon
        return cls(t[:-1], v[:-1], horizon, slopes[:-1]) if t[-1] == horizon else cls(t, v, horizon, slopes)

    @classmethod
    def steps(cls, times, values, horizon: float) -> "CadlagPath":
        return cls(np.asarray(times, dtype=float), np.asarray(values), horizon)

    @property
    def is_piecewise_constant(self) -> bool:
        return not np.any(self.slopes)

    @property
    def value_shape(self) -> tuple:
        return self.values.shape[1:]

    def _piece(self, t, left: bool = False):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.horizon)):
            raise ValueError("time outside [0, horizon]")
        side = "left" if left else "right"
        return np.clip(np.searchsorted(self.times, t, side=side) - 1, 0, None)

    def _eval(self, t, idx):
        t = np.asarray(t, dtype=float)
        dt = (t - self.times[idx]).reshape(t.shape + (1,) * len(self.value_shape))
        return self.values[idx] + self.slopes[idx] * dt

    def __call__(self, t):
        return self._eval(t, self._piece(t))

    def left_limit(self, t):
        return self._eval(t, self._piece(t, left=True))

    def piece_ends(self) -> np.ndarray:
        return np.append(self.times[1:], self.horizon)

    def integral(self, s: float = 0.0, t: Optional[float] = None):
        """int_s^t x(r) dr, exact."""
        t = self.horizon if t is None else t
        if t < s:
            return -self.integral(t, s)
        lo = np.clip(self.times, s, t)
        hi = np.clip(self.piece_ends(), s, t)
        a = (lo - self.times).reshape((-1,) + (1,) * len(self.value_shape))
        b = (hi - self.times).reshape(a.shape)
        return np.sum(self.values * (b - a) + self.slopes * (b ** 2 - a ** 2) / 2, axis=0)

    def refine(self, times: Sequence[float]) -> "CadlagPath":
        """Same function with extra breakpoints."""
        t = np.union1d(self.times, np.asarray(times, dtype=float))
        t = t[(t >= 0) & (t < self.horizon)] if self.horizon > 0 else t[:1]
        idx = self._piece(t)
        return CadlagPath(t, self._eval(t, idx), self.horizon, self.slopes[idx])

    def __sub__(self, other: "CadlagPath") -> "CadlagPath":
        if self.horizon != other.horizon:
            raise ValueError("paths live on different horizons")
        a, b = self.refine(other.times), other.refine(self.times)
        return CadlagPath(a.times, a.values - b.values, self.horizon, a.slopes - b.slopes)

    def __add__(self, other: "CadlagPath") -> "CadlagPath":
        if self.horizon != other.horizon:
            raise ValueError("paths live on different horizons")
        a, b = self.refine(other.times), other.refine(self.times)
        return CadlagPath(a.times, a.values + b.values, self.horizon, a.slopes + b.slopes)

    def scale(self, c) -> "CadlagPath":
        return CadlagPath(self.times, self.values * c, self.horizon, self.slopes * c)

    def rescaled(self, horizon: float = 1.0) -> "CadlagPath":
        """Affine change of time onto [0, horizon]."""
        f = horizon / self.horizon
        return CadlagPath(self.times * f, self.values, horizon, self.slopes / f)

    def sup_norm(self) -> float:
        ends = self.piece_ends()
        return float(max(_norm(self.values).max(), _norm(self._eval(ends, np.arange(len(ends)))).max()))

    def to_csv(self) -> str:
        """Rows ``t,value...`` at every breakpoint (right values), then the horizon."""
        buf = io.StringIO()
        flat = self.values.reshape(len(self.times), -1)
        end = self.left_limit(self.horizon).reshape(-1)
        for t, row in zip(self.times, flat):
            buf.write(",".join([repr(float(t))] + [_fmt(v) for v in row]) + "\n")
        buf.write(",".join([repr(float(self.horizon))] + [_fmt(v) for v in end]) + "\n")
        return buf.getvalue()


def _fmt(v) -> str:
    v = complex(v)
    return repr(v.real) if v.imag == 0 else f"{v.real!r}{v.imag:+.17g}j"


@dataclass(frozen=True, eq=False)
class SimpleProcess:
    """xi(r) = values[j-1] on (partition[j-1], partition[j]].

    Values may be numbers, arrays, or callables of a mark batch returning one
    value per mark (mark-indexed coefficients for the jump integral).
    """

    partition: np.ndarray
    values: tuple

    def __post_init__(self):
        p = np.asarray(self.partition, dtype=float)
        if p.ndim != 1 or len(p) < 2 or p[0] != 0.0 or np.any(np.diff(p) <= 0):
            raise ValueError("partition must be 0 = t0 < t1 < ... < tn")
        if len(self.values) != len(p) - 1:
            raise ValueError("need one value per partition cell")
        object.__setattr__(self, "partition", p)
        object.__setattr__(self, "values", tuple(self.values))

    @property
    def horizon(self) -> float:
        return float(self.partition[-1])

    @property
    def cells(self):
        return list(zip(self.partition[:-1], self.partition[1:], self.values))

    def cell_of(self, t: float) -> int:
        """Index j with t in (t_j, t_{j+1}]; t = 0 maps to the first cell."""
        if not 0 <= t <= self.horizon:
            raise ValueError("time outside the partition")
        return max(int(np.searchsorted(self.partition, t, side="left")) - 1, 0)

    def __call__(self, t: float):
        return self.values[self.cell_of(t)]

    @property
    def is_numeric(self) -> bool:
        return not any(callable(v) for v in self.values)

    def as_path(self) -> CadlagPath:
        """Right-continuous version (equal to xi except on the partition points)."""
        if not self.is_numeric:
            raise TypeError("mark-indexed step processes have no scalar path")
        return CadlagPath(self.partition[:-1], np.asarray(self.values), self.horizon)

    def map(self, f: Callable[[Any], Any]) -> "SimpleProcess":
        return SimpleProcess(self.partition, tuple(f(v) for v in self.values))

    def truncated(self, tau: float) -> "SimpleProcess":
        """xi * 1_[0, tau] on the same horizon."""
        if tau >= self.horizon:
            return self
        pts = [p for p in self.partition if p < tau] + [tau, self.horizon]
        pts = sorted(set(pts))
        zero = _zero_like(self.values[0])
        vals = [self(0.5 * (a + b)) if b <= tau else zero for a, b in zip(pts, pts[1:])]
        return SimpleProcess(np.array(pts), tuple(vals))


def _zero_like(v):
    if callable(v):
        return lambda marks: 0.0 * np.asarray(v(marks))
    return np.zeros_like(np.asarray(v)) if np.ndim(v) else 0.0 * v


# ---------------------------------------------------------------------------
# Haar machinery
# ---------------------------------------------------------------------------

def dyadic_partition(T: float, n: int) -> np.ndarray:
    """s_j = j 2^-n T, j = 0..2^n."""
    if n < 0:
        raise ValueError("level must be non-negative")
    return np.arange(2 ** n + 1) * (T / 2 ** n)


def haar_average(x: CadlagPath, n: int, j: int):
    """Mean of x over the dyadic cell (s_{j-1}, s_j], 1 <= j <= 2^n."""
    if not 1 <= j <= 2 ** n:
        raise ValueError(f"index j={j} outside 1..{2 ** n}")
    s = dyadic_partition(x.horizon, n)
    return x.integral(s[j - 1], s[j]) / (s[j] - s[j - 1])


def shifted_haar_projection(x: CadlagPath, n: int) -> SimpleProcess:
    """Step process with value iota_{j,n}(x) on (s_j, s_{j+1}] and 0 on the first cell."""
    s = dyadic_partition(x.horizon, n)
    vals = [np.zeros(x.value_shape, dtype=x.values.dtype)]
    vals += [haar_average(x, n, j) for j in range(1, 2 ** n)]
    if not x.value_shape:
        vals = [v.item() for v in vals]
    return SimpleProcess(s, tuple(vals))


def dyadic_projection(x: CadlagPath, n: int) -> CadlagPath:
    """Sample x at the dyadic points 2^-n i and hold the value over the next cell.

    Stored right-continuously, i.e. the value x(2^-n i) is taken on
    [2^-n i, 2^-n (i+1)).
    """
    pts = np.arange(0.0, x.horizon, 2.0 ** -n)
    return CadlagPath(pts, x(pts), x.horizon)


def lp_path_norm(x, p: int = 2, weight: float = 1.0) -> float:
    """(int_0^T |x(t)|^p dt)^(1/p), exact per piece; |v|^2 = weight * sum |v_i|^2."""
    if isinstance(x, SimpleProcess):
        x = x.as_path()
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    h = x.piece_ends() - x.times
    v = x.values.reshape(len(h), -1)
    s = x.slopes.reshape(len(h), -1)
    A = weight * np.sum(np.abs(s) ** 2, axis=1)
    B = 2 * weight * np.sum(np.real(np.conj(v) * s), axis=1)
    C = weight * np.sum(np.abs(v) ** 2, axis=1)
    if p == 2:
        return float(np.sqrt(np.sum(C * h + B * h ** 2 / 2 + A * h ** 3 / 3)))
    return float(sum(_int_sqrt_quadratic(a, b, c, hh) for a, b, c, hh in zip(A, B, C, h)))


def _int_sqrt_quadratic(A: float, B: float, C: float, h: float) -> float:
    """int_0^h sqrt(A u^2 + B u + C) du for a non-negative quadratic."""
    if h <= 0:
        return 0.0
    if A <= 1e-300:
        return float(np.sqrt(max(C, 0.0)) * h)
    disc = 4 * A * C - B * B
    if disc <= 1e-13 * max(B * B, 4 * A * C, 1e-300):
        # perfect square: sqrt(A) |u - u0|
        u0 = -B / (2 * A)
        sa = np.sqrt(A)
        if u0 <= 0:
            return float(sa * (h * h / 2 - u0 * h))
        if u0 >= h:
            return float(sa * (u0 * h - h * h / 2))
        return float(sa * (u0 ** 2 / 2 + (h - u0) ** 2 / 2))

    def F(u):
        q = A * u * u + B * u + C
        return ((2 * A * u + B) * np.sqrt(max(q, 0.0)) / (4 * A)
                + disc / (8 * A ** 1.5) * np.arcsinh((2 * A * u + B) / np.sqrt(disc)))

    return float(F(h) - F(0.0))


# ---------------------------------------------------------------------------
# Skorokhod d0 upper bound
# ---------------------------------------------------------------------------

def skorokhod_objective(x: CadlagPath, y: CadlagPath, nodes, lam) -> float:
    """||lambda||_log v sup_t |x(t) - y(lambda(t))| for the piecewise-linear
    time change through (nodes, lam), computed exactly.  Paths on [0, 1]."""
    nodes = np.asarray(nodes, dtype=float)
    lam = np.asarray(lam, dtype=float)
    slopes = np.diff(lam) / np.diff(nodes)
    if np.any(slopes <= 0):
        raise ValueError("time change must be strictly increasing")
    log_norm = float(np.max(np.abs(np.log(slopes))))
    # t where lambda(t) hits a breakpoint of y
    pulled = np.interp(y.times, lam, nodes)
    cuts = np.union1d(np.union1d(x.times, nodes), pulled)
    cuts = cuts[(cuts >= 0) & (cuts < 1)]
    ends = np.append(cuts[1:], 1.0)
    lam_a = np.interp(cuts, nodes, lam)
    lam_b = np.interp(ends, nodes, lam)
    f_a = x(cuts) - y(lam_a)
    f_b = x.left_limit(ends) - y.left_limit(lam_b)
    f_1 = x(np.array([1.0])) - y(np.array([1.0]))
    sup = float(max(_norm(f_a).max(), _norm(f_b).max(), _norm(f_1).max()))
    return max(log_norm, sup)


@dataclass(frozen=True)
class D0Search:
    bound: float
    nodes: np.ndarray
    time_change: np.ndarray


def _search_piecewise_constant_x(x: CadlagPath, y: CadlagPath, depth: int) -> D0Search:
    """Minimax dynamic programme over time changes whose breakpoints lie on the
    dyadic grid (plus the jump times of x) and whose values lie on a grid
    2^VALUE_REFINEMENT times finer (plus the jump times of y)."""
    tn = np.union1d(dyadic_partition(1.0, depth), x.times)
    vn = np.union1d(dyadic_partition(1.0, depth + VALUE_REFINEMENT), y.times)
    V = len(vn)
    # sup over a value cell [v_k, v_{k+1}) of |c - y(v)| is attained at an end
    y_lo = y(vn[:-1])
    y_hi = y.left_limit(vn[1:])
    prev = np.full(V, np.inf)
    prev[0] = 0.0
    back = []
    for t0, t1 in zip(tn[:-1], tn[1:]):
        h = t1 - t0
        xc = x(np.array([t0]))
        cell = np.maximum(_norm(xc - y_lo), _norm(xc - y_hi))
        best = np.full(V, np.inf)
        arg = np.full(V, -1, dtype=np.int64)
        run = np.full(V, -np.inf)  # running max of cell costs over [j - o, j)
        for o in range(1, V):
            span = vn[o:] - vn[:-o]
            if span.min() > SLOPE_BOUND * h:
                break
            run_o = np.maximum(run[o:], cell[: V - o])
            run[o:] = run_o
            slope = span / h
            ok = (slope >= 1.0 / SLOPE_BOUND) & (slope <= SLOPE_BOUND)
            if not ok.any():
                continue
            cand = np.maximum(np.maximum(prev[:-o], np.abs(np.log(slope))), run_o)
            cand[~ok] = np.inf
            better = cand < best[o:]
            best[o:][better] = cand[better]
            arg[o:][better] = np.arange(V - o)[better]
        back.append(arg)
        prev = best
    if not np.isfinite(prev[-1]):
        raise RuntimeError("no admissible time change on this grid")
    idx = [V - 1]
    for arg in reversed(back):
        idx.append(int(arg[idx[-1]]))
    lam = vn[np.array(idx[::-1])]
    best = D0Search(skorokhod_objective(x, y, tn, lam), tn, lam)
    # The grid quantises slopes; keeping lambda only at the jump times of x
    # and interpolating linearly in between removes that quantisation.
    keep = np.isin(tn, np.union1d(x.times, [1.0]))
    anchored = D0Search(skorokhod_objective(x, y, tn[keep], lam[keep]), tn[keep], lam[keep])
    return anchored if anchored.bound < best.bound else best


def skorokhod_d0_upper(x: CadlagPath, y: CadlagPath, depth: int = 6) -> float:
    """Upper bound on the Skorokhod distance d0(x, y).

    Both paths are first rescaled to [0, 1].  The bound is the exact objective
    of the best time change found by the grid search, never worse than the
    identity time change.  At least one path must be piecewise constant for
    the search; otherwise only the identity bound is returned.
    """
    if depth > MAX_D0_DEPTH:
        raise CapacityError(f"depth {depth} exceeds {MAX_D0_DEPTH}")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    x, y = x.rescaled(1.0), y.rescaled(1.0)
    identity = np.array([0.0, 1.0])
    bound = skorokhod_objective(x, y, identity, identity)
    if bound == 0.0:
        return 0.0
    if x.is_piecewise_constant:
        found = _search_piecewise_constant_x(x, y, depth)
    elif y.is_piecewise_constant:
        # d0 is symmetric: swap the roles via the inverse time change
        found = _search_piecewise_constant_x(y, x, depth)
    else:
        return bound
    return min(bound, found.bound)
