"""Intensity measures on a space of bump marks and Poisson random measure sampling.

Marks are bump functions ``z(x) = a * phi(|x - c| / w)`` on the torus with the
smooth compactly supported template ``phi(r) = exp(1 - 1 / (1 - r^2))``.
The intensity ``nu`` has amplitude density ``kappa * a^(-1-beta)`` on
``(0, a_max]``, uniform widths on ``[w_min, w_max]`` and uniform centers.
Layers are ``S_n = {a >= a_max / n}``, so ``nu(S_n)`` has a closed form and
``nu(S) = infinity`` for every ``beta > 0``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize, special

from .grid import Grid
from .jump_measure import Marks, PointMeasure

__all__ = [
    "InfeasibleIntensityError",
    "QuadratureError",
    "TemplateNorms",
    "template_norms",
    "bump_profile",
    "IntensitySpec",
    "DiscreteIntensity",
    "Linear",
    "CoefficientPair",
    "AmplitudeBand",
    "IntegrabilityConstants",
    "integrability_constants",
    "total_rate",
    "sample_prm",
    "compensator_mass",
    "evaluate_mark",
    "compensator_drift_field",
    "QUAD_NODES",
]

QUAD_NODES = 64


class InfeasibleIntensityError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    pass


def bump_profile(r):
    """phi(r) = exp(1 - 1/(1 - r^2)) for r < 1, else 0; sup phi = phi(0) = 1."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
    return out


def _bump_slope(r):
    r = np.asarray(r, dtype=float)
    return bump_profile(r) * (-2.0 * r / (1.0 - r * r) ** 2)


class TemplateNorms(NamedTuple):
    sup: float          # ||phi||_inf
    grad_sup: float     # ||grad phi||_inf
    l2_sq: float        # int phi^2
    moment2_l2_sq: float  # int |x|^2 phi^2
    integral: float     # int phi


@lru_cache(maxsize=None)
def template_norms(d: int) -> TemplateNorms:
    sphere = 2 * np.pi ** (d / 2) / special.gamma(d / 2)
    res = optimize.minimize_scalar(lambda r: float(_bump_slope(r)), bounds=(0.0, 0.999),
                                   method="bounded", options={"xatol": 1e-12})
    radial = lambda f: sphere * integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    phi = lambda r: float(bump_profile(r))
    return TemplateNorms(
        sup=1.0,
        grad_sup=float(-res.fun),
        l2_sq=radial(lambda r: r ** (d - 1) * phi(r) ** 2),
        moment2_l2_sq=radial(lambda r: r ** (d + 1) * phi(r) ** 2),
        integral=radial(lambda r: r ** (d - 1) * phi(r)),
    )


def _gauss_legendre(lo: float, hi: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


@dataclass(frozen=True)
class IntensitySpec:
    """Parametric sigma-finite intensity with layers S_n = {a >= a_max / n}."""

    beta: float = 0.5
    a_max: float = 1.0
    w_min: float = 0.3
    w_max: float = 0.8
    rate_scale: float = 1.0
    box_length: float = 2 * np.pi
    dim: int = 1
    template: str = "bump"

    def __post_init__(self):
        if self.template != "bump":
            raise ValueError(f"unknown template {self.template!r}")
        if not self.beta > 0:
            raise ValueError("small-jump index beta must be positive")
        if self.beta >= 2:
            # int a^2 a^(-1-beta) da diverges at 0
            raise InfeasibleIntensityError(f"beta={self.beta} >= 2 makes C0 infinite on unbounded layers")
        if not (self.a_max > 0 and 0 < self.w_min <= self.w_max):
            raise ValueError("need a_max > 0 and 0 < w_min <= w_max")
        if self.w_max > self.box_length / 2:
            raise ValueError("bump width must not exceed half the box length")
        if self.rate_scale < 0:
            raise ValueError("rate_scale must be non-negative")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    def fingerprint(self) -> str:
        text = repr(tuple((f, getattr(self, f)) for f in self.__dataclass_fields__))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def a_min(self, n: int) -> float:
        if n < 1:
            raise ValueError("layers are numbered from 1")
        return self.a_max / n

    def total_rate(self, n: int) -> float:
        lo = self.a_min(n)
        return self.rate_scale * (lo ** -self.beta - self.a_max ** -self.beta) / self.beta

    def amplitude_mass(self, lo: float, hi: float) -> float:
        """nu({lo <= a < hi}) with the width/center laws integrated out."""
        lo, hi = max(lo, 0.0), min(hi, self.a_max)
        if hi <= lo:
            return 0.0
        if lo == 0.0:
            return np.inf
        return self.rate_scale * (lo ** -self.beta - hi ** -self.beta) / self.beta

    def amplitude_moment(self, k: float, n: Optional[int] = None) -> float:
        """int a^k nu(da) over S_n, or over all of S when ``n`` is None."""
        lo = 0.0 if n is None else self.a_min(n)
        e = k - self.beta
        if lo == 0.0 and e <= 0:
            return np.inf
        return self.rate_scale * (self.a_max ** e - lo ** e) / e

    def in_layer(self, marks: Marks, n: int) -> np.ndarray:
        L = self.box_length
        a, w, c = marks.amplitude, marks.width, marks.center
        return ((a >= self.a_min(n)) & (a <= self.a_max) & (w >= self.w_min) & (w <= self.w_max)
                & np.all((c >= 0) & (c < L), axis=1) & (c.shape[1] == self.dim))

    # --- quadrature ------------------------------------------------------
    def quadrature(self, n: int, nodes: int = QUAD_NODES, center_nodes: int = 0,
                   amplitude_breaks=()) -> tuple:
        """Tensor Gauss-Legendre rule for nu restricted to S_n.

        Amplitude nodes live in log a (density kappa a^-beta there), so the
        weights already carry the amplitude density.  With ``center_nodes=0``
        every node sits at the box center, which is exact for integrands that
        do not depend on the center.  ``amplitude_breaks`` splits the amplitude
        range into panels so that indicator integrands are integrated exactly.
        """
        lo, hi = self.a_min(n), self.a_max
        if hi <= lo or self.rate_scale == 0:
            return Marks.empty(self.dim), np.zeros(0)
        cuts = sorted({np.log(lo), np.log(hi)}
                      | {np.log(b) for b in amplitude_breaks if lo < b < hi})
        s_nodes, s_weights = [], []
        for s0, s1 in zip(cuts, cuts[1:]):
            s, ws = _gauss_legendre(s0, s1, nodes)
            s_nodes.append(s)
            s_weights.append(ws)
        s = np.concatenate(s_nodes)
        a = np.exp(s)
        wa = np.concatenate(s_weights) * self.rate_scale * a ** -self.beta
        if self.w_min == self.w_max:
            wn, ww = np.array([self.w_min]), np.array([1.0])
        else:
            wn, ww = _gauss_legendre(self.w_min, self.w_max, nodes)
            ww = ww / (self.w_max - self.w_min)
        if center_nodes:
            cn, cw = _gauss_legendre(0.0, self.box_length, center_nodes)
            cw = cw / self.box_length
            cgrid = np.stack(np.meshgrid(*([cn] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
            cwt = np.prod(np.stack(np.meshgrid(*([cw] * self.dim), indexing="ij"), -1).reshape(-1, self.dim), axis=1)
        else:
            cgrid = np.full((1, self.dim), self.box_length / 2)
            cwt = np.array([1.0])
        A, W, C = np.meshgrid(np.arange(len(a)), np.arange(len(wn)), np.arange(len(cgrid)), indexing="ij")
        A, W, C = A.ravel(), W.ravel(), C.ravel()
        marks = Marks(a[A], wn[W], cgrid[C])
        return marks, wa[A] * ww[W] * cwt[C]

    def integrate(self, f: Callable[[Marks], np.ndarray], n: int, nodes: int = QUAD_NODES,
                  center_nodes: int = 0, amplitude_breaks=()):
        marks, weights = self.quadrature(n, nodes, center_nodes, amplitude_breaks)
        if len(weights) == 0:
            return 0.0
        vals = np.asarray(f(marks))
        return np.tensordot(weights, vals, axes=(0, 0))

    # --- sampling --------------------------------------------------------
    def sample_marks(self, k: int, n: int, rng: np.random.Generator) -> Marks:
        lo = self.a_min(n)
        u = rng.random(k)
        b = self.beta
        # inverse CDF of a^(-1-beta) on [lo, a_max]
        a = (lo ** -b - u * (lo ** -b - self.a_max ** -b)) ** (-1.0 / b)
        a = np.clip(a, lo, self.a_max)
        w = self.w_min + (self.w_max - self.w_min) * rng.random(k)
        c = self.box_length * rng.random((k, self.dim))
        return Marks(a, w, c)


@dataclass(frozen=True)
class DiscreteIntensity:
    """Finite intensity sum_i weight_i * delta_{z_i}; every atom lies in every layer."""

    marks: Marks
    weights: tuple
    box_length: float = 2 * np.pi

    def __post_init__(self):
        w = tuple(float(x) for x in np.atleast_1d(self.weights))
        if len(w) != len(self.marks) or any(x < 0 for x in w):
            raise ValueError("need one non-negative weight per mark")
        object.__setattr__(self, "weights", w)

    def __hash__(self):
        return hash(self.fingerprint())

    @property
    def dim(self) -> int:
        return self.marks.dim

    def fingerprint(self) -> str:
        text = repr(([self.marks.mark_id(i) for i in range(len(self.marks))], self.weights, self.box_length))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def total_rate(self, n: int) -> float:
        return float(sum(self.weights))

    def in_layer(self, marks: Marks, n: int) -> np.ndarray:
        known = {self.marks.mark_id(i) for i in range(len(self.marks))}
        return np.array([marks.mark_id(i) in known for i in range(len(marks))], dtype=bool)

    def quadrature(self, n: int, *args, **kwargs):
        return self.marks, np.asarray(self.weights)

    def integrate(self, f, n: int, *args, **kwargs):
        return np.tensordot(np.asarray(self.weights), np.asarray(f(self.marks)), axes=(0, 0))

    def sample_marks(self, k: int, n: int, rng: np.random.Generator) -> Marks:
        p = np.asarray(self.weights) / sum(self.weights)
        return self.marks[rng.choice(len(p), size=k, p=p)]


# ---------------------------------------------------------------------------
# coefficients g, h
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    """xi -> c * xi; hashable by value so solver caches can key on it."""

    c: complex

    def __call__(self, xi):
        return self.c * np.asarray(xi)


@dataclass(frozen=True)
class CoefficientPair:
    g: Callable
    h: Callable
    lip_g: float
    lip_h: float

    @classmethod
    def linear(cls, c_g: complex, c_h: complex) -> "CoefficientPair":
        return cls(Linear(c_g), Linear(c_h), abs(c_g), abs(c_h))

    def check(self, xi_max: float = 2.0, samples: int = 2001, imag_const: float = 1e3) -> None:
        """Sample-based check of g(0)=h(0)=0, linear growth, Lipschitz bound and
        |Im f(xi)| <= K xi^2.  Raises ValueError on the first violation."""
        xi = np.linspace(-xi_max, xi_max, samples)
        for name, f, lip in (("g", self.g, self.lip_g), ("h", self.h, self.lip_h)):
            v = np.asarray(f(xi), dtype=complex)
            if abs(complex(f(0.0))) != 0:
                raise ValueError(f"{name}(0) must vanish")
            slack = 1e-12 * (1 + lip * np.abs(xi))
            if np.any(np.abs(v) > lip * np.abs(xi) + slack):
                raise ValueError(f"{name} exceeds linear growth with constant {lip}")
            dv = np.abs(np.diff(v)) / np.diff(xi)
            if np.any(dv > lip * (1 + 1e-9) + 1e-12):
                raise ValueError(f"{name} is not {lip}-Lipschitz on the sample")
            if np.any(np.abs(v.imag) > imag_const * xi ** 2 + 1e-15):
                raise ValueError(f"Im {name} is not O(xi^2) near zero")


@dataclass(frozen=True)
class AmplitudeBand:
    """Mark predicate lo <= a < hi; its nu-mass has a closed form."""

    lo: float
    hi: float = np.inf

    def __call__(self, marks: Marks) -> np.ndarray:
        return (marks.amplitude >= self.lo) & (marks.amplitude < self.hi)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

class IntegrabilityConstants(NamedTuple):
    C0: float
    C1: float
    C2: float
    C3: float


def _torus_moment2(marks: Marks, box_length: float, points: int = 4096) -> np.ndarray:
    """int |x|^2 z(x)^2 dx per mark, x in torus coordinates centered on the box."""
    d = marks.dim
    grid = Grid(d, points if d == 1 else 512, box_length)
    x2 = sum(grid.wrap(x - box_length / 2) ** 2 for x in grid.coords)
    out = np.empty(len(marks))
    for i in range(len(marks)):
        z = evaluate_mark(marks[i], grid)
        out[i] = np.sum(x2 * z ** 2) * grid.cell_volume
    return out


def integrability_constants(intensity, layer: Optional[int] = None,
                            nodes: int = QUAD_NODES) -> IntegrabilityConstants:
    """C0..C3 of the intensity, over S (``layer=None``) or over S_layer.

    Norm conventions: ||z||_{W^1_inf} = ||z||_inf + ||grad z||_inf, and C2
    measures |x| from the box center in torus coordinates.
    """
    if isinstance(intensity, DiscreteIntensity):
        tn = template_norms(intensity.dim)
        m, wts = intensity.marks, np.asarray(intensity.weights)
        sup = m.amplitude * tn.sup
        w1 = m.amplitude * (tn.sup + tn.grad_sup / m.width)
        return IntegrabilityConstants(
            float(wts @ sup ** 2), float(wts @ w1 ** 2),
            float(wts @ _torus_moment2(m, intensity.box_length)), float(wts @ sup ** 4))

    spec = intensity
    tn = template_norms(spec.dim)
    m2 = spec.amplitude_moment(2, layer)
    m4 = spec.amplitude_moment(4, layer)
    if not (np.isfinite(m2) and np.isfinite(m4)):
        raise InfeasibleIntensityError("amplitude moments diverge")
    if spec.w_min == spec.w_max:
        wn, ww = np.array([spec.w_min]), np.array([1.0])
    else:
        wn, ww = _gauss_legendre(spec.w_min, spec.w_max, nodes)
        ww = ww / (spec.w_max - spec.w_min)
    d, L = spec.dim, spec.box_length
    # amplitude factors are exact power integrals; widths by Gauss-Legendre
    c0 = m2 * tn.sup ** 2
    c1 = m2 * float(ww @ (tn.sup + tn.grad_sup / wn) ** 2)
    # E_c int_torus |x|^2 z^2 = a^2 w^d int phi^2 * (1/L^d) int_torus |x|^2 dx
    c2 = m2 * float(ww @ wn ** d) * tn.l2_sq * d * L ** 2 / 12.0
    c3 = m4 * tn.sup ** 4
    consts = IntegrabilityConstants(c0, c1, c2, c3)
    if not all(np.isfinite(consts)):
        raise InfeasibleIntensityError(f"non-finite integrability constants {consts}")
    return consts


def total_rate(spec, n: int) -> float:
    """nu(S_n)."""
    return spec.total_rate(n)


def sample_prm(spec, n: int, T: float, rng: np.random.Generator) -> PointMeasure:
    """One realization of eta on S_n x (0, T], fully determined by ``rng``."""
    rate = spec.total_rate(n) * T
    k = int(rng.poisson(rate)) if rate > 0 else 0
    while True:
        times = np.sort(T * (1.0 - rng.random(k)))
        if k < 2 or np.all(np.diff(times) > 0):
            break
    marks = spec.sample_marks(k, n, rng) if k else Marks.empty(spec.dim)
    return PointMeasure(times, marks, n, T, spec)


def compensator_mass(spec, predicate, interval, layer: int, center_nodes: int = 0) -> float:
    """gamma(A x I) = nu(A cap S_layer) * |I|."""
    s, t = interval
    length = max(0.0, t - s)
    if length == 0.0:
        return 0.0
    if predicate is None:
        mass = spec.total_rate(layer)
    elif isinstance(predicate, AmplitudeBand) and isinstance(spec, IntensitySpec):
        mass = spec.amplitude_mass(max(predicate.lo, spec.a_min(layer)), predicate.hi)
    else:
        breaks = (predicate.lo, predicate.hi) if isinstance(predicate, AmplitudeBand) else ()
        mass = float(spec.integrate(lambda m: np.asarray(predicate(m), dtype=float), layer,
                                    center_nodes=center_nodes, amplitude_breaks=breaks))
    return mass * length


def evaluate_mark(marks: Marks, grid: Grid) -> np.ndarray:
    """z(x) = a phi(|x - c| / w) at the grid nodes, periodically wrapped.

    Returns an array of shape ``grid.shape`` for a single mark, otherwise
    ``(len(marks),) + grid.shape``.
    """
    if marks.dim != grid.d:
        raise ValueError("mark and grid dimensions differ")
    out = np.stack([
        marks.amplitude[i] * bump_profile(grid.distance_from(marks.center[i]) / marks.width[i])
        for i in range(len(marks))
    ]) if len(marks) else np.zeros((0,) + grid.shape)
    return out[0] if len(marks) == 1 else out


def _center_averaged(f: Callable, marks: Marks, grid: Grid, chunk: int = 256) -> np.ndarray:
    """(1/L^d) int_torus f(z(y)) dy for each mark, by the grid rule."""
    r = grid.distance_from(np.zeros(grid.d))
    out = np.empty(len(marks), dtype=complex)
    for s in range(0, len(marks), chunk):
        a = marks.amplitude[s:s + chunk, None]
        w = marks.width[s:s + chunk, None]
        z = a * bump_profile(r.ravel()[None, :] / w)
        out[s:s + chunk] = np.asarray(f(z), dtype=complex).sum(axis=1) / grid.N ** grid.d
    return out


def compensator_drift_field(spec, n: int, pair: CoefficientPair, grid: Grid,
                            nodes: int = QUAD_NODES, rtol: float = 1e-6) -> np.ndarray:
    """m(x) = int_{S_n} (h - g)(z(x)) nu(dz) on the grid.

    With uniformly distributed centers the result is spatially constant and is
    evaluated once; a halved rule is used as the convergence check.
    """
    diff = lambda z: np.asarray(pair.h(z), dtype=complex) - np.asarray(pair.g(z), dtype=complex)
    if isinstance(spec, DiscreteIntensity):
        z = evaluate_mark(spec.marks, grid).reshape((len(spec.marks),) + grid.shape)
        return np.tensordot(np.asarray(spec.weights), diff(z), axes=(0, 0))

    def value(q):
        marks, weights = spec.quadrature(n, q)
        if len(weights) == 0:
            return 0j
        return complex(weights @ _center_averaged(diff, marks, grid))

    m = value(nodes)
    m_half = value(max(2, nodes // 2))
    if abs(m - m_half) > rtol * max(abs(m), 1.0):
        raise QuadratureError(f"drift quadrature not converged: {m} vs {m_half} with {nodes}/{nodes // 2} nodes")
    return np.full(grid.shape, m, dtype=complex)
