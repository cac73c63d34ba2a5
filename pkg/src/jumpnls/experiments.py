"""Ensemble experiments: point-measure law tests, moment bounds, pathwise and
joint-law uniqueness, and the Haar convergence table.

Trajectory i of a seed family draws everything from
``np.random.default_rng([seed, i])``, so results do not depend on how many
worker threads run the ensemble.
"""
from __future__ import annotations

import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .config import ConfigError, RunConfig
from .diagnostics import mass, tau_m
from .jump_measure import Marks, PointMeasure, count
from .noise import AmplitudeBand, sample_prm
from .nls import Solution, min_delta, solve
from .paths import CadlagPath, dyadic_projection, lp_path_norm, shifted_haar_projection

__all__ = [
    "TestResult",
    "ExperimentReport",
    "trajectory",
    "run_ensemble",
    "TrajectorySummary",
    "summarize",
    "prm_law_tests",
    "corrupted_sample_prm",
    "run_prm_law_tests",
    "run_moment_bounds",
    "run_pathwise_uniqueness",
    "run_law_uniqueness",
    "haar_table",
    "run_haar_bench",
    "samples_csv",
]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    name: str
    passed: bool
    statistic: float = float("nan")
    p_value: float = float("nan")
    threshold: float = float("nan")
    detail: str = ""


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    tests: list = field(default_factory=list)
    statistics: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)  # column name -> per-sample values
    runtime: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tests)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def test(self, name: str) -> TestResult:
        for t in self.tests:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"experiment: {self.experiment}\n")
        buf.write(f"code_version: {self.version}\n")
        buf.write(f"config_hash: {self.config_hash}\n")
        buf.write(f"runtime_s: {self.runtime:.3f}\n")
        buf.write("[statistics]\n")
        for k, v in self.statistics.items():
            buf.write(f"{k} = {_fmt(v)}\n")
        buf.write("[tests]\n")
        for t in self.tests:
            buf.write(f"{t.name}: {'pass' if t.passed else 'fail'} statistic={_fmt(t.statistic)} "
                      f"p={_fmt(t.p_value)} threshold={_fmt(t.threshold)}"
                      + (f" ({t.detail})" if t.detail else "") + "\n")
        buf.write(f"VERDICT: {self.verdict}\n")
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def samples_csv(samples: dict) -> str:
    """Per-sample table with one column per recorded statistic."""
    if not samples:
        return ""
    cols = list(samples)
    n = len(samples[cols[0]])
    buf = io.StringIO()
    buf.write("sample," + ",".join(cols) + "\n")
    for i in range(n):
        buf.write(str(i) + "," + ",".join(repr(float(samples[c][i])) for c in cols) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def trajectory(cfg: RunConfig, seed: int, index: int, store_fields: bool = False,
               u0: Optional[np.ndarray] = None, solver=None):
    """(eta, solution) for member ``index`` of the seed family ``seed``."""
    solver = replace(solver or cfg.solver, store_fields=store_fields)
    rng = np.random.default_rng([seed, index])
    eta = sample_prm(solver.noise, solver.layer, solver.T, rng) if solver.noise is not None else None
    return eta, solve(solver, eta, cfg.initial_field() if u0 is None else u0)


@dataclass(frozen=True)
class TrajectorySummary:
    sup_mass: float
    sup_energy: float
    mass_T: float
    energy_T: float
    hdelta_T: float
    jumps: int
    aborted: bool
    taus: tuple


def summarize(sol: Solution, m_values: Sequence[float] = ()) -> TrajectorySummary:
    norms = sol.scalar_path("hdelta")
    return TrajectorySummary(sol.sup("mass"), sol.sup("energy"), sol.at_end("mass"),
                             sol.at_end("energy"), sol.at_end("hdelta"), sol.n_jumps, sol.aborted,
                             tuple(tau_m(norms, m) for m in m_values))


def run_ensemble(cfg: RunConfig, seed: int, size: int, solver=None,
                 m_values: Sequence[float] = ()) -> list:
    """Summaries of trajectories 0..size-1, in index order."""
    def one(i):
        return summarize(trajectory(cfg, seed, i, solver=solver)[1], m_values)

    workers = cfg.experiment.workers
    if workers == 1:
        return [one(i) for i in range(size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(size)))


def _column(runs, name) -> np.ndarray:
    return np.array([getattr(r, name) for r in runs], dtype=float)


# ---------------------------------------------------------------------------
# Point-measure law tests
# ---------------------------------------------------------------------------

def corrupted_sample_prm(spec, n: int, T: float, rng: np.random.Generator) -> PointMeasure:
    """Negative control: correct counts and marks, but times T U^2 crowd near 0."""
    rate = spec.total_rate(n) * T
    k = int(rng.poisson(rate)) if rate > 0 else 0
    times = np.sort(T * (1.0 - rng.random(k)) ** 2)
    marks = spec.sample_marks(k, n, rng) if k else Marks.empty(spec.dim)
    return PointMeasure(times, marks, n, T, spec)


def _poisson_chisquare(counts: np.ndarray, rate: float):
    if rate == 0:
        return (0.0, 1.0) if not counts.any() else (math.inf, 0.0)
    n = len(counts)
    kmax = int(stats.poisson.ppf(1 - 5.0 / n, rate)) if n > 5 else 0
    kmin = int(stats.poisson.ppf(5.0 / n, rate))
    edges = list(range(kmin + 1, kmax + 1))
    obs = np.array([np.sum(counts <= kmin)] + [np.sum(counts == k) for k in edges[:-1]]
                   + [np.sum(counts >= edges[-1])]) if edges else np.array([n])
    if len(obs) < 2:
        return 0.0, 1.0
    cdf = stats.poisson.cdf
    probs = np.array([cdf(kmin, rate)] + [stats.poisson.pmf(k, rate) for k in edges[:-1]]
                     + [1 - cdf(edges[-1] - 1, rate)])
    res = stats.chisquare(obs, probs / probs.sum() * n)
    return float(res.statistic), float(res.pvalue)


def _independence(a: np.ndarray, b: np.ndarray):
    cap_a = max(1, int(np.quantile(a, 0.95)))
    cap_b = max(1, int(np.quantile(b, 0.95)))
    table = np.zeros((cap_a + 1, cap_b + 1))
    np.add.at(table, (np.minimum(a, cap_a), np.minimum(b, cap_b)), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return 0.0, 1.0
    res = stats.chi2_contingency(table)
    return float(res.statistic), float(res.pvalue)


def prm_law_tests(spec, layer: int, T: float, samples: int, rng: np.random.Generator,
                  significance: float = 0.01, sampler: Callable = sample_prm):
    """Poisson counts, independence on disjoint mark sets, stationary and
    independent increments over (0, T/2] and (T/2, T].  Returns (tests, columns)."""
    rate = spec.total_rate(layer) * T
    lo = spec.a_min(layer) if hasattr(spec, "a_min") else 0.0
    hi = getattr(spec, "a_max", 1.0)
    split = math.sqrt(lo * hi) if lo > 0 else hi / 2
    band_a, band_b = AmplitudeBand(lo, split), AmplitudeBand(split, math.inf)
    total, n_a, n_b, first, second = (np.zeros(samples, dtype=np.int64) for _ in range(5))
    for i in range(samples):
        eta = sampler(spec, layer, T, rng)
        total[i] = len(eta)
        if len(eta):
            n_a[i] = count(eta, band_a, T)
            n_b[i] = count(eta, band_b, T)
            first[i] = count(eta, None, T / 2)
        second[i] = total[i] - first[i]
    a = significance
    stat, p = _poisson_chisquare(total, rate)
    tests = [TestResult("poisson_fit", p >= a, stat, p, a, f"mean count {total.mean():.4f} vs {rate:.4f}")]
    stat, p = _independence(n_a, n_b)
    tests.append(TestResult("disjoint_independence", p >= a, stat, p, a))
    if first.any() or second.any():
        res = stats.ks_2samp(first, second)
        stat, p = float(res.statistic), float(res.pvalue)
    else:
        stat, p = 0.0, 1.0
    tests.append(TestResult("increment_stationarity", p >= a, stat, p, a))
    if first.std() > 0 and second.std() > 0:
        res = stats.pearsonr(first, second)
        stat, p = float(res.statistic), float(res.pvalue)
    else:
        stat, p = 0.0, 1.0  # constant counts: trivially uncorrelated
    tests.append(TestResult("past_independence", p >= a, stat, p, a))
    return tests, {"count": total, "count_a": n_a, "count_b": n_b, "first_half": first, "second_half": second}


def run_prm_law_tests(cfg: RunConfig, negative_control: bool = True) -> ExperimentReport:
    """Law tests at the configured rate plus the corrupted-time negative control."""
    start = time.perf_counter()
    e, s = cfg.experiment, cfg.solver
    rep = ExperimentReport("prm-test", cfg.config_hash)
    if s.noise is None:
        rep.tests.append(TestResult("degenerate_layer", True, detail="no intensity: all counts are 0"))
        rep.runtime = time.perf_counter() - start
        return rep
    spec = s.noise
    base = spec.total_rate(s.layer) * s.T
    if base > 0:
        spec = replace(spec, rate_scale=spec.rate_scale * e.prm_rate / base)
    rng = np.random.default_rng([e.seed, 0])
    tests, cols = prm_law_tests(spec, s.layer, s.T, e.prm_samples, rng, e.significance)
    rep.tests += tests
    rep.samples = cols
    rep.statistics.update(rate=spec.total_rate(s.layer) * s.T, samples=e.prm_samples,
                          mean_count=float(cols["count"].mean()), var_count=float(cols["count"].var()))
    if negative_control and base > 0:
        ctl, _ = prm_law_tests(spec, s.layer, s.T, e.prm_samples, np.random.default_rng([e.seed, 1]),
                               e.significance, sampler=corrupted_sample_prm)
        st = next(t for t in ctl if t.name == "increment_stationarity")
        rep.tests.append(TestResult("negative_control_detected", not st.passed, st.statistic, st.p_value,
                                    e.significance, "corrupted sampler must fail stationarity"))
    rep.runtime = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# Moment bounds
# ---------------------------------------------------------------------------

def _bootstrap_ci(x: np.ndarray, seed: int, level: float = 0.99):
    if np.ptp(x) == 0:
        return float(x[0]), float(x[0])
    res = stats.bootstrap((x,), np.mean, confidence_level=level, n_resamples=2000,
                          method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def run_moment_bounds(cfg: RunConfig, doubling: bool = True, monotone_check: bool = True) -> ExperimentReport:
    """E sup mass and E sup energy over the ensemble, with bootstrap CIs,
    the T-doubling envelope check and the nu-empty control."""
    start = time.perf_counter()
    e, s = cfg.experiment, cfg.solver
    if e.ensemble < 100:
        raise ConfigError("moment bounds need an ensemble of at least 100")
    rep = ExperimentReport("moment-test", cfg.config_hash)
    m0 = mass(cfg.initial_field(), cfg.grid)
    runs = run_ensemble(cfg, e.seed, e.ensemble)
    sup_m, sup_e = _column(runs, "sup_mass"), _column(runs, "sup_energy")
    aborted = int(_column(runs, "aborted").sum())
    ci_m = _bootstrap_ci(sup_m, e.seed)
    ci_e = _bootstrap_ci(sup_e, e.seed + 1)
    c_emp = float(sup_m.mean() / (1 + m0))
    rep.samples = {"sup_mass": sup_m, "sup_energy": sup_e, "jumps": _column(runs, "jumps")}
    rep.statistics.update(ensemble=e.ensemble, initial_mass=m0, E_sup_mass=float(sup_m.mean()),
                          E_sup_mass_ci=ci_m, E_sup_energy=float(sup_e.mean()), E_sup_energy_ci=ci_e,
                          C_emp=c_emp, C_emp_ci=(ci_m[0] / (1 + m0), ci_m[1] / (1 + m0)), aborted=aborted)
    rep.tests.append(TestResult("no_aborted_trajectories", aborted == 0, aborted))
    rep.tests.append(TestResult("sup_mass_ci_finite", bool(np.all(np.isfinite(ci_m))), ci_m[1]))
    rep.tests.append(TestResult("sup_energy_ci_finite", bool(np.all(np.isfinite(ci_e))), ci_e[1]))
    if doubling:
        runs2 = run_ensemble(cfg, e.seed, e.ensemble, solver=replace(s, T=2 * s.T))
        sup2 = _column(runs2, "sup_mass")
        ci2 = _bootstrap_ci(sup2, e.seed + 2)
        # envelope E sup mass(t) <= m0 exp(K t) with K fitted to the upper CI at T
        k_hat = math.log(max(ci_m[1], m0) / m0) / s.T
        bound = m0 * math.exp(2 * k_hat * s.T)
        rep.statistics.update(E_sup_mass_2T=float(sup2.mean()), E_sup_mass_2T_ci=ci2, envelope_2T=bound)
        rep.tests.append(TestResult("T_doubling_envelope", ci2[0] <= bound and np.isfinite(ci2[1]),
                                    ci2[0], threshold=bound))
    # nu-empty control: mass is conserved, so the ratio is m0 / (1 + m0) < 1
    ctl = summarize(trajectory(cfg, e.seed, 0, solver=replace(s, noise=None))[1])
    ratio = ctl.sup_mass / (1 + m0)
    rep.statistics.update(nu_empty_ratio=ratio)
    rep.tests.append(TestResult("nu_empty_ratio_below_one", ratio < 1 and abs(ratio - m0 / (1 + m0)) < 1e-10,
                                ratio, threshold=1.0))
    if monotone_check and s.noise is not None:
        size = min(e.ensemble, 100)
        doubled = cfg.with_coefficients(2 * cfg.c_g)
        runs_g = run_ensemble(doubled, e.seed, size)
        c_g2 = float(_column(runs_g, "sup_mass").mean() / (1 + m0))
        c_ref = float(sup_m[:size].mean() / (1 + m0))
        rep.statistics.update(C_emp_doubled_c_g=c_g2)
        rep.tests.append(TestResult("doubling_c_g_increases_C", c_g2 > c_ref, c_g2, threshold=c_ref))
    rep.runtime = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# Pathwise uniqueness
# ---------------------------------------------------------------------------

def _perturbation(cfg: RunConfig) -> np.ndarray:
    """Fixed smooth direction of unit L^2 norm."""
    g = cfg.grid
    r = g.distance_from(np.full(g.d, g.L / 3))
    phi = np.exp(-r ** 2 / 0.5) * np.exp(1j * g.coords[0])
    return phi / math.sqrt(mass(phi, g))


def gronwall_ratio(base: Solution, other: Solution, eps: float, m: float) -> float:
    """sup over snapshots t <= tau_m of ||u1 - u2||_{L^2} / eps."""
    tau = tau_m(base.scalar_path("hdelta"), m)
    grid = base.config.grid
    diffs = [math.sqrt(mass(a - b, grid)) for t, a, b in zip(base.times, base.fields, other.fields) if t <= tau]
    return max(diffs) / eps


def run_pathwise_uniqueness(cfg: RunConfig) -> ExperimentReport:
    start = time.perf_counter()
    e, s = cfg.experiment, cfg.solver
    if s.alpha > 1:
        bound = min_delta(cfg.grid.d, s.alpha)
        if s.delta < bound:
            raise ConfigError(f"delta={s.delta} is below the required bound {bound}")
    rep = ExperimentReport("uniqueness", cfg.config_hash)
    # (a) replay
    eta1, sol1 = trajectory(cfg, e.seed, 0, store_fields=True)
    eta2, sol2 = trajectory(cfg, e.seed, 0, store_fields=True)
    same_noise = (eta1 is None and eta2 is None) or eta1 == eta2
    replay = max(float(np.max(np.abs(a - b))) for a, b in zip(sol1.fields, sol2.fields))
    rep.tests.append(TestResult("replay_bit_exact", same_noise and replay == 0.0
                                and np.array_equal(sol1.diagnostics, sol2.diagnostics), replay, threshold=0.0))
    # (b) Gronwall ratios on a few noise realizations
    phi = _perturbation(cfg)
    u0 = cfg.initial_field()
    spreads, table = [], []
    for i in range(e.gronwall_trajectories):
        eta, base = trajectory(cfg, e.seed, i, store_fields=True)
        ratios, first = [], None
        for eps in e.epsilons:
            pert = solve(replace(s, store_fields=True), eta, u0 + eps * phi)
            first = first or pert
            ratios.append(gronwall_ratio(base, pert, eps, e.gronwall_m))
        if i == 0:
            rep.statistics["C_by_m_first_eps"] = [gronwall_ratio(base, first, e.epsilons[0], m)
                                                  for m in e.m_values]
        ref = ratios[0]
        spreads.append(max(abs(r / ref - 1) for r in ratios))
        table.append(ratios)
    table = np.array(table)
    rep.statistics.update(epsilons=list(e.epsilons), C_by_eps_mean=list(table.mean(axis=0)),
                          C_max_relative_spread=float(max(spreads)))
    rep.tests.append(TestResult("gronwall_ratio_stable", max(spreads) <= 0.2, max(spreads), threshold=0.2,
                                detail=f"m={e.gronwall_m}, {e.gronwall_trajectories} trajectories"))
    # (c) exit-time exhaustion
    runs = run_ensemble(cfg, e.seed, e.uniqueness_trajectories, m_values=e.m_values)
    taus = np.array([r.taus for r in runs])
    probs = [float(np.mean(taus[:, j] < s.T)) for j in range(len(e.m_values))]
    order = np.argsort(e.m_values)
    p_sorted = np.array(probs)[order]
    rep.statistics.update(m_values=list(e.m_values), P_tau_below_T=probs)
    rep.samples = {f"tau_{m:g}": taus[:, j] for j, m in enumerate(e.m_values)}
    rep.tests.append(TestResult("exit_probability_nonincreasing", bool(np.all(np.diff(p_sorted) <= 0)),
                                float(p_sorted[-1]) if len(p_sorted) else 0.0))
    rep.runtime = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# Joint law uniqueness
# ---------------------------------------------------------------------------

LAW_FUNCTIONALS = ("mass_T", "energy_T", "hdelta_T", "jumps")


def _ks_family(a_runs, b_runs, alpha: float, prefix: str = ""):
    out = []
    level = alpha / len(LAW_FUNCTIONALS)
    for name in LAW_FUNCTIONALS:
        x, y = _column(a_runs, name), _column(b_runs, name)
        if np.array_equal(np.unique(x), np.unique(y)) and np.ptp(x) == 0:
            stat, p = 0.0, 1.0  # deterministic and equal
        else:
            res = stats.ks_2samp(x, y)
            stat, p = float(res.statistic), float(res.pvalue)
        out.append(TestResult(prefix + name, p >= level, stat, p, level))
    return out


def run_law_uniqueness(cfg: RunConfig, negative_control: bool = True) -> ExperimentReport:
    """Two ensembles on independent seed families, KS on four functionals at
    the Bonferroni-corrected level; negative control with a perturbed c_g."""
    start = time.perf_counter()
    e = cfg.experiment
    rep = ExperimentReport("law-test", cfg.config_hash)
    a_runs = run_ensemble(cfg, e.seed, e.ensemble)
    b_runs = run_ensemble(cfg, e.second_seed, e.ensemble)
    rep.tests += _ks_family(a_runs, b_runs, e.significance)
    rep.samples = {f"a_{n}": _column(a_runs, n) for n in LAW_FUNCTIONALS}
    rep.samples.update({f"b_{n}": _column(b_runs, n) for n in LAW_FUNCTIONALS})
    rep.statistics.update(ensemble=e.ensemble, seeds=[e.seed, e.second_seed],
                          bonferroni_level=e.significance / len(LAW_FUNCTIONALS))
    if negative_control and cfg.solver.noise is not None:
        ctl_runs = run_ensemble(cfg.with_coefficients(e.perturbed_c_g), e.second_seed, e.ensemble)
        ctl = _ks_family(a_runs, ctl_runs, e.significance, prefix="control_")
        mass_test = ctl[0]
        rep.statistics.update(control_c_g=e.perturbed_c_g, control_mass_p=mass_test.p_value)
        rep.tests.append(TestResult("negative_control_mass_detected", not mass_test.passed,
                                    mass_test.statistic, mass_test.p_value, mass_test.threshold,
                                    f"c_g {cfg.c_g} vs {e.perturbed_c_g}"))
    rep.runtime = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# Haar convergence
# ---------------------------------------------------------------------------

def lipschitz_test_path(resolution: int = 12) -> CadlagPath:
    """Continuous piecewise-linear interpolant of sin(2 pi s) + s on [0, 1]."""
    s = np.linspace(0.0, 1.0, 2 ** resolution + 1)
    return CadlagPath.linear(s, np.sin(2 * np.pi * s) + s)


def haar_table(x: CadlagPath, levels: Sequence[int]) -> dict:
    """L^2 errors of the shifted Haar and dyadic projections and successive ratios."""
    shifted = np.array([lp_path_norm(shifted_haar_projection(x, n).as_path() - x, 2) for n in levels])
    dyadic = np.array([lp_path_norm(dyadic_projection(x, n) - x, 2) for n in levels])
    return {"level": np.array(levels, dtype=float), "shifted_l2": shifted,
            "shifted_ratio": np.append(np.nan, shifted[1:] / shifted[:-1]),
            "dyadic_l2": dyadic, "dyadic_ratio": np.append(np.nan, dyadic[1:] / dyadic[:-1])}


def run_haar_bench(cfg: RunConfig) -> ExperimentReport:
    start = time.perf_counter()
    levels = list(cfg.experiment.haar_levels)
    table = haar_table(lipschitz_test_path(), levels)
    rep = ExperimentReport("haar-bench", cfg.config_hash, samples=table)
    err = table["shifted_l2"]
    rep.tests.append(TestResult("shifted_error_monotone", bool(np.all(np.diff(err) < 0))))
    window = [i for i, n in enumerate(levels) if 4 <= n <= 8 and i > 0 and levels[i - 1] == n - 1]
    ratios = table["shifted_ratio"][window]
    worst = float(np.max(np.abs(ratios - 0.5))) if len(ratios) else 0.0
    rep.tests.append(TestResult("shifted_ratio_half", worst <= 0.1, worst, threshold=0.1,
                                detail="|ratio - 0.5| over levels 4..8"))
    rep.statistics.update(levels=levels, shifted_l2=list(err), shifted_ratio=list(table["shifted_ratio"]))
    rep.runtime = time.perf_counter() - start
    return rep
