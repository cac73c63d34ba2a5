import numpy as np
import pytest

from jumpnls.config import ConfigError, parse_config
from jumpnls.experiments import (
    corrupted_sample_prm,
    gronwall_ratio,
    haar_table,
    lipschitz_test_path,
    prm_law_tests,
    run_ensemble,
    run_haar_bench,
    run_law_uniqueness,
    run_moment_bounds,
    run_pathwise_uniqueness,
    run_prm_law_tests,
    samples_csv,
    trajectory,
)
from jumpnls.nls import solve
from jumpnls.noise import IntensitySpec
from jumpnls.paths import shifted_haar_projection

from oracles import riemann_average


@pytest.fixture
def fast(fast_ini):
    return parse_config(fast_ini)


def test_ensemble_independent_of_thread_count(fast):
    a = run_ensemble(fast, 11, 12)
    b = run_ensemble(fast.with_experiment(workers=4), 11, 12)
    assert a == b


def test_trajectory_seed_families_differ(fast):
    e1, _ = trajectory(fast, 1, 0)
    e2, _ = trajectory(fast, 2, 0)
    e3, _ = trajectory(fast, 1, 0)
    assert e1 == e3 and not e1 == e2


def test_prm_suite_passes_and_control_fails(fast):
    rep = run_prm_law_tests(fast)
    assert rep.passed, rep.to_text()
    assert rep.statistics["rate"] == pytest.approx(5.0 * fast.solver.T / fast.solver.T)
    names = [t.name for t in rep.tests]
    assert names == ["poisson_fit", "disjoint_independence", "increment_stationarity", "past_independence",
                     "negative_control_detected"]


def test_corrupted_sampler_fails_stationarity():
    spec = IntensitySpec(rate_scale=5.0 / IntensitySpec().total_rate(10))
    tests, _ = prm_law_tests(spec, 10, 1.0, 2000, np.random.default_rng(0), sampler=corrupted_sample_prm)
    by_name = {t.name: t for t in tests}
    assert not by_name["increment_stationarity"].passed
    assert by_name["poisson_fit"].passed


def test_prm_suite_on_empty_layer(fast):
    tests, cols = prm_law_tests(IntensitySpec(), 1, 1.0, 500, np.random.default_rng(0))
    assert all(t.passed for t in tests) and not cols["count"].any()
    rep = run_prm_law_tests(fast.with_solver(layer=1))
    assert rep.passed


def test_moment_bounds_small_ensemble(fast):
    rep = run_moment_bounds(fast)
    assert rep.passed, rep.to_text()
    m0 = rep.statistics["initial_mass"]
    assert rep.statistics["nu_empty_ratio"] == pytest.approx(m0 / (1 + m0), abs=1e-12)
    lo, hi = rep.statistics["E_sup_mass_ci"]
    assert lo <= rep.statistics["E_sup_mass"] <= hi


def test_moment_bounds_require_100_members(fast):
    with pytest.raises(ConfigError):
        run_moment_bounds(fast.with_experiment(ensemble=50))


def test_gronwall_ratio_stable(fast):
    eta, base = trajectory(fast, 3, 0, store_fields=True)
    u0 = fast.initial_field()
    phi = np.exp(1j * fast.grid.coords[0]) / np.sqrt(2 * np.pi)
    ratios = []
    for eps in (1e-3, 1e-4, 1e-5):
        pert = solve(fast.solver, eta, u0 + eps * phi)
        ratios.append(gronwall_ratio(base, pert, eps, 5.0))
    assert max(abs(r / ratios[0] - 1) for r in ratios) <= 0.2
    assert ratios[0] >= 1.0 - 1e-6  # the initial difference alone gives ratio 1


def test_pathwise_uniqueness_small(fast):
    rep = run_pathwise_uniqueness(fast)
    assert rep.passed, rep.to_text()
    assert rep.test("replay_bit_exact").statistic == 0.0


def test_pathwise_uniqueness_rejects_small_delta(fast):
    with pytest.raises(ConfigError):
        run_pathwise_uniqueness(fast.with_solver(delta=0.1))


def test_law_uniqueness_without_noise_is_exact(fast):
    rep = run_law_uniqueness(fast.with_solver(noise=None).with_experiment(ensemble=5))
    assert rep.passed
    assert all(t.statistic == 0.0 for t in rep.tests)


def test_law_uniqueness_small(fast):
    rep = run_law_uniqueness(fast)
    assert rep.passed, rep.to_text()
    assert rep.statistics["bonferroni_level"] == 0.0025


def test_haar_table_against_riemann_oracle():
    x = lipschitz_test_path()
    table = haar_table(x, [4, 6])
    for n, err in zip((4, 6), table["shifted_l2"]):
        proj = shifted_haar_projection(x, n).as_path()
        ref = np.sqrt(riemann_average(lambda t: (proj(t) - x(t)) ** 2, 0.0, 1.0, points=2 ** 18))
        assert err == pytest.approx(ref, rel=1e-6)


def test_haar_bench_report(fast):
    rep = run_haar_bench(fast)
    assert rep.passed
    ratios = rep.samples["shifted_ratio"][1:]
    assert np.all(np.abs(ratios[1:] - 0.5) <= 0.1)


def test_samples_csv_layout():
    text = samples_csv({"a": [1.0, 2.0], "b": [3, 4]})
    assert text == "sample,a,b\n0,1.0,3.0\n1,2.0,4.0\n"
    assert samples_csv({}) == ""
