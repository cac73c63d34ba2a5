"""Point-measure realizations of a Poisson random measure and metrics on measures.

A :class:`PointMeasure` is a finite set of ``(time, mark)`` atoms on
``S_n x (0, T]``.  Marks are bump-function parameters, stored column-wise in a
:class:`Marks` batch so the noise and solver code can evaluate them vectorized.

The second half of the module implements the Levy-Prokhorov distance between
finite atomic measures on a finite metric scaffold and the layered metric
built from it.
"""
from __future__ import annotations

import hashlib
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Marks",
    "PointMeasure",
    "count",
    "restrict_before",
    "restrict_after",
    "AtomicMeasure",
    "CapacityError",
    "levy_prokhorov",
    "layered_metric_rho",
    "rho_from_layer_distances",
    "LP_TOLERANCE",
    "MAX_LP_ATOMS",
]

LP_TOLERANCE = 1e-6
MAX_LP_ATOMS = 16


class CapacityError(ValueError):
    """Raised when a brute-force routine is asked for more than it can enumerate."""


@dataclass(frozen=True, eq=False)
class Marks:
    """Column store of bump marks ``z(x) = a * phi((x - c) / w)``."""

    amplitude: np.ndarray
    width: np.ndarray
    center: np.ndarray  # shape (k, d)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        w = np.atleast_1d(np.asarray(self.width, dtype=float))
        c = np.asarray(self.center, dtype=float)
        if c.ndim == 1:
            c = c.reshape(len(a), -1) if len(a) else c.reshape(0, max(c.size, 1))
        if not (len(a) == len(w) == len(c)):
            raise ValueError("mark columns must have equal length")
        for arr in (a, w, c):
            arr.setflags(write=False)
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "center", c)

    @classmethod
    def empty(cls, dim: int = 1) -> "Marks":
        return cls(np.empty(0), np.empty(0), np.empty((0, dim)))

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    def __len__(self) -> int:
        return len(self.amplitude)

    def __getitem__(self, idx) -> "Marks":
        if isinstance(idx, (int, np.integer)):
            idx = [idx]
        return Marks(self.amplitude[idx], self.width[idx], self.center[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Marks):
            return NotImplemented
        return (
            np.array_equal(self.amplitude, other.amplitude)
            and np.array_equal(self.width, other.width)
            and np.array_equal(self.center, other.center)
        )

    def mark_id(self, i: int) -> str:
        parts = [self.amplitude[i], self.width[i], *self.center[i]]
        return ":".join(repr(float(p)) for p in parts)

    @classmethod
    def from_ids(cls, ids: Sequence[str], dim: int) -> "Marks":
        if not ids:
            return cls.empty(dim)
        rows = np.array([[float(p) for p in s.split(":")] for s in ids])
        if rows.shape[1] != 2 + dim:
            raise ValueError(f"mark ids carry {rows.shape[1] - 2} center coordinates, expected {dim}")
        return cls(rows[:, 0], rows[:, 1], rows[:, 2:])


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite realization of eta restricted to ``S_n x (0, horizon]``.

    ``spec`` (optional) is anything with ``in_layer(marks, n) -> bool array``
    and ``fingerprint() -> str``; when given, layer membership is enforced.
    """

    times: np.ndarray
    marks: Marks
    layer: int
    horizon: float
    spec: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        if len(t) != len(self.marks):
            raise ValueError("times and marks differ in length")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if len(t):
            if np.any(np.diff(t) <= 0):
                raise ValueError("atom times must be strictly increasing (ties are rejected)")
            if t[0] <= 0 or t[-1] > self.horizon:
                raise ValueError("atom times must lie in (0, horizon]")
        if self.spec is not None and len(t):
            if not np.all(self.spec.in_layer(self.marks, self.layer)):
                raise ValueError(f"mark outside layer S_{self.layer}")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointMeasure):
            return NotImplemented
        return (
            self.layer == other.layer
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and self.marks == other.marks
        )

    def _select(self, mask) -> "PointMeasure":
        return PointMeasure(self.times[mask], self.marks[np.flatnonzero(mask)],
                            self.layer, self.horizon, self.spec)

    # --- serialization -------------------------------------------------
    def to_text(self) -> str:
        spec_hash = self.spec.fingerprint() if self.spec is not None else "none"
        buf = io.StringIO()
        buf.write(f"# layer = {self.layer}\n")
        buf.write(f"# horizon = {self.horizon!r}\n")
        buf.write(f"# dim = {self.marks.dim}\n")
        buf.write(f"# spec_hash = {spec_hash}\n")
        for i, t in enumerate(self.times):
            buf.write(f"{float(t)!r},{self.marks.mark_id(i)}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, spec=None) -> "PointMeasure":
        header = {}
        times, ids = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
                continue
            t, mark = line.split(",", 1)
            times.append(float(t))
            ids.append(mark)
        try:
            layer = int(header["layer"])
            horizon = float(header["horizon"])
            dim = int(header.get("dim", 1))
        except KeyError as exc:
            raise ValueError(f"point-measure header lacks {exc.args[0]!r}") from None
        if spec is not None and header.get("spec_hash") not in (None, "none"):
            if header["spec_hash"] != spec.fingerprint():
                raise ValueError("spec hash in file does not match the supplied spec")
        return cls(np.array(times), Marks.from_ids(ids, dim), layer, horizon, spec)


def _check_time(eta: PointMeasure, t: float) -> None:
    if not (0.0 <= t <= eta.horizon):
        raise ValueError(f"t={t} outside [0, {eta.horizon}]")


def _mark_mask(eta: PointMeasure, predicate) -> np.ndarray:
    if predicate is None:
        return np.ones(len(eta), dtype=bool)
    if len(eta) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(predicate(eta.marks), dtype=bool)


def count(eta: PointMeasure, predicate: Optional[Callable[[Marks], np.ndarray]], t: float) -> int:
    """N(t, U): atoms with time <= t whose mark satisfies ``predicate``."""
    _check_time(eta, t)
    return int(np.count_nonzero((eta.times <= t) & _mark_mask(eta, predicate)))


def restrict_before(eta: PointMeasure, t: float) -> PointMeasure:
    """eta_t: the atoms with times in (0, t]."""
    _check_time(eta, t)
    return eta._select(eta.times <= t)


def restrict_after(eta: PointMeasure, t: float) -> PointMeasure:
    """eta^t: the atoms with times in (t, T]."""
    _check_time(eta, t)
    return eta._select(eta.times > t)


# ---------------------------------------------------------------------------
# Levy-Prokhorov metric on a finite metric scaffold
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Non-negative weights on the points of a finite metric scaffold.

    ``distances`` is the full pairwise table of the scaffold; the measure puts
    ``weights[i]`` on point ``i``.  Points with zero weight are allowed and
    simply take part in the metric.
    """

    weights: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        dist = np.asarray(self.distances, dtype=float)
        if dist.shape != (len(w), len(w)):
            raise ValueError("distance table must be square and match the weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if not np.allclose(dist, dist.T) or np.any(np.diag(dist) != 0):
            raise ValueError("distance table must be symmetric with zero diagonal")
        off = dist[~np.eye(len(w), dtype=bool)]
        if np.any(off <= 0):
            raise ValueError("distinct scaffold points must be at positive distance")
        n = len(w)
        if n <= 64:
            # d(i,k) <= d(i,j) + d(j,k) for all triples
            viol = dist[:, None, :] - dist[:, :, None] - dist[None, :, :]
            if np.any(viol > 1e-12 * max(1.0, dist.max(initial=0.0))):
                raise ValueError("distance table violates the triangle inequality")
        w.setflags(write=False)
        dist.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "distances", dist)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def restricted(self, points: Sequence[int]) -> "AtomicMeasure":
        """mu(. cap A) for A a set of scaffold indices; the scaffold is kept."""
        mask = np.zeros(len(self.weights), dtype=bool)
        mask[list(points)] = True
        return AtomicMeasure(np.where(mask, self.weights, 0.0), self.distances)

    @classmethod
    def from_points(cls, points: np.ndarray, weights, metric: str = "euclidean") -> "AtomicMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        diff = pts[:, None, :] - pts[None, :, :]
        if metric == "euclidean":
            dist = np.sqrt((diff ** 2).sum(-1))
        elif metric == "max":
            dist = np.abs(diff).max(-1)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        return cls(np.asarray(weights, dtype=float), dist)


def _subset_masks(n: int) -> np.ndarray:
    """Boolean matrix (2^n, n); row k is the subset with bit pattern k."""
    codes = np.arange(2 ** n, dtype=np.int64)[:, None]
    return ((codes >> np.arange(n)) & 1).astype(bool)


def _excess(mu: np.ndarray, nu: np.ndarray, dist: np.ndarray, eps: float, subsets: np.ndarray) -> float:
    """max_A mu(A) - nu(A^eps) over the enumerated subsets A."""
    # point x lies in A^eps iff some a in A has d(x, a) < eps
    near = dist < eps
    in_nbhd = (subsets.astype(np.int8) @ near.astype(np.int8)) > 0
    return float(np.max(subsets @ mu - in_nbhd @ nu))


def _support_subsets(mu: AtomicMeasure, nu: AtomicMeasure):
    support = np.flatnonzero((mu.weights > 0) | (nu.weights > 0))
    if len(support) > MAX_LP_ATOMS:
        raise CapacityError(f"{len(support)} atoms exceed the enumeration budget of {MAX_LP_ATOMS}")
    return support


def levy_prokhorov(mu: AtomicMeasure, nu: AtomicMeasure, tol: float = LP_TOLERANCE) -> float:
    """Levy-Prokhorov distance of two atomic measures on the same scaffold.

    The feasibility of a given epsilon is decided by enumerating every subset
    of the joint support; epsilon itself is found by bisection to ``tol``.
    Exactly zero is returned when the measures coincide.
    """
    if mu.distances.shape != nu.distances.shape or not np.array_equal(mu.distances, nu.distances):
        raise ValueError("measures live on different scaffolds")
    support = _support_subsets(mu, nu)
    if len(support) == 0:
        return 0.0
    m = mu.weights[support]
    v = nu.weights[support]
    # neighbourhoods may pick up zero-weight scaffold points, which carry no mass,
    # so distances restricted to the support suffice
    dist = mu.distances[np.ix_(support, support)]
    subsets = _subset_masks(len(support))

    def feasible(eps: float) -> bool:
        return (_excess(m, v, dist, eps, subsets) <= eps
                and _excess(v, m, dist, eps, subsets) <= eps)

    if np.array_equal(m, v):
        return 0.0
    lo, hi = 0.0, max(m.sum(), v.sum())
    # hi is always feasible: mu(A) <= mu(S) <= eps
    while hi - lo > tol / 4:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def rho_from_layer_distances(distances: Sequence[float]) -> float:
    """sum_n 2^-n min(1, pi_n), layers numbered from 1."""
    return float(sum(2.0 ** -(n + 1) * min(1.0, d) for n, d in enumerate(distances)))


def layered_metric_rho(mu: AtomicMeasure, nu: AtomicMeasure,
                       layers: Sequence[Sequence[int]], tol: float = LP_TOLERANCE) -> float:
    """Layered distance between measures finite on each of the nested layers.

    ``layers`` lists scaffold-index sets S_1 subset S_2 subset ...; the series
    is truncated after the last layer provided.
    """
    sets = [frozenset(int(i) for i in layer) for layer in layers]
    for inner, outer in itertools.pairwise(sets):
        if not inner <= outer:
            raise ValueError("layers must be nested")
    n_points = len(mu.weights)
    if len(nu.weights) != n_points:
        raise ValueError("measures carry different layer families")
    if any(i < 0 or i >= n_points for s in sets for i in s):
        raise ValueError("layer refers to a point outside the scaffold")
    return rho_from_layer_distances(
        [levy_prokhorov(mu.restricted(sorted(s)), nu.restricted(sorted(s)), tol) for s in sets]
    )


def fingerprint_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]
