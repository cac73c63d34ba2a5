import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpnls.jump_measure import (
    AtomicMeasure,
    CapacityError,
    Marks,
    PointMeasure,
    count,
    layered_metric_rho,
    levy_prokhorov,
    restrict_after,
    restrict_before,
    rho_from_layer_distances,
)
from jumpnls.noise import AmplitudeBand, IntensitySpec, sample_prm

from oracles import lp_critical_values


def _eta(times, amps, horizon=1.0):
    k = len(times)
    return PointMeasure(np.array(times, float), Marks(np.array(amps, float), np.full(k, 0.5), np.full((k, 1), 1.0)),
                        layer=3, horizon=horizon)


def test_count_selects_marks_and_time():
    eta = _eta([0.1, 0.5, 0.7], [0.9, 0.2, 0.8])
    U = AmplitudeBand(0.5)
    assert count(eta, U, 0.6) == 1
    assert count(eta, U, 1.0) == 2
    assert count(eta, None, 0.6) == 2
    assert count(eta, U, 0.0) == 0


def test_count_rejects_time_beyond_horizon():
    with pytest.raises(ValueError):
        count(_eta([0.1], [0.9]), None, 1.5)


def test_ties_and_out_of_range_rejected():
    with pytest.raises(ValueError):
        _eta([0.2, 0.2], [0.5, 0.5])
    with pytest.raises(ValueError):
        _eta([0.0], [0.5])
    with pytest.raises(ValueError):
        _eta([1.2], [0.5])


def test_layer_membership_enforced():
    spec = IntensitySpec()
    marks = Marks(np.array([0.05]), np.array([0.5]), np.array([[1.0]]))
    with pytest.raises(ValueError):
        PointMeasure(np.array([0.3]), marks, layer=2, horizon=1.0, spec=spec)


def test_restrictions():
    eta = _eta([0.2, 0.8], [0.5, 0.5])
    before, after = restrict_before(eta, 0.5), restrict_after(eta, 0.5)
    assert list(before.times) == [0.2] and list(after.times) == [0.8]
    assert restrict_before(eta, 1.0) == eta and len(restrict_after(eta, 1.0)) == 0
    assert len(restrict_before(eta, 0.0)) == 0


def test_text_roundtrip_is_exact():
    spec = IntensitySpec()
    eta = sample_prm(spec, 10, 1.0, np.random.default_rng(3))
    again = PointMeasure.from_text(eta.to_text(), spec)
    assert again == eta


def test_count_mean_matches_poisson():
    spec = IntensitySpec(beta=1.0, rate_scale=2.0 / IntensitySpec(beta=1.0).total_rate(4))
    rng = np.random.default_rng(11)
    n = 10_000
    counts = np.array([len(sample_prm(spec, 4, 1.0, rng)) for _ in range(n)])
    assert abs(counts.mean() - 2.0) < 3 * np.sqrt(2.0 / n)


def test_before_after_counts_uncorrelated():
    spec = IntensitySpec()
    rng = np.random.default_rng(5)
    pairs = []
    for _ in range(1000):
        eta = sample_prm(spec, 5, 1.0, rng)
        pairs.append((len(restrict_before(eta, 0.5)), len(restrict_after(eta, 0.5))))
    a, b = np.array(pairs).T
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3 / np.sqrt(1000)


# --- Levy-Prokhorov --------------------------------------------------------

def test_lp_two_diracs_at_distance():
    scaffold = AtomicMeasure.from_points(np.array([0.0, 0.3]), [1.0, 0.0])
    other = AtomicMeasure(np.array([0.0, 1.0]), scaffold.distances)
    assert levy_prokhorov(scaffold, other) == pytest.approx(0.3, abs=1e-6)


def test_lp_dirac_vs_empty():
    d = AtomicMeasure.from_points(np.array([0.0]), [1.0])
    z = AtomicMeasure(np.array([0.0]), d.distances)
    assert levy_prokhorov(d, z) == pytest.approx(1.0, abs=1e-6)
    assert levy_prokhorov(d, d) == 0.0


def test_lp_capacity():
    pts = np.arange(17.0)
    mu = AtomicMeasure.from_points(pts, np.ones(17))
    nu = AtomicMeasure(np.full(17, 0.5), mu.distances)
    with pytest.raises(CapacityError):
        levy_prokhorov(mu, nu)


def test_lp_rejects_different_scaffolds():
    a = AtomicMeasure.from_points(np.array([0.0, 1.0]), [1.0, 0.0])
    b = AtomicMeasure.from_points(np.array([0.0, 2.0]), [1.0, 0.0])
    with pytest.raises(ValueError):
        levy_prokhorov(a, b)


def test_triangle_violation_rejected():
    with pytest.raises(ValueError):
        AtomicMeasure(np.ones(3), np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0.0]]))


def _random_pair(rng, k):
    pts = rng.uniform(0, 2, size=(k, 2))
    mu = rng.uniform(0, 1, size=k) * (rng.random(k) < 0.8)
    nu = rng.uniform(0, 1, size=k) * (rng.random(k) < 0.8)
    a = AtomicMeasure.from_points(pts, mu)
    return a, AtomicMeasure(nu, a.distances)


def test_lp_matches_enumeration_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(15):
        a, b = _random_pair(rng, int(rng.integers(1, 7)))
        assert abs(levy_prokhorov(a, b) - lp_critical_values(a.weights, b.weights, a.distances)) <= 1e-6


measures = st.integers(min_value=1, max_value=5).flatmap(
    lambda k: st.tuples(
        st.lists(st.tuples(st.floats(0, 3), st.floats(0, 3)), min_size=k, max_size=k, unique=True),
        *[st.lists(st.floats(0, 2), min_size=k, max_size=k) for _ in range(3)],
    )
)


def _build(data):
    pts, w1, w2, w3 = data
    pts = np.array(pts)
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    if len(pts) > 1 and np.min(d[~np.eye(len(pts), dtype=bool)]) < 1e-6:
        return None
    return [AtomicMeasure(np.array(w), d) for w in (w1, w2, w3)]


@settings(max_examples=40, deadline=None)
@given(measures)
def test_lp_metric_axioms(data):
    ms = _build(data)
    if ms is None:
        return
    a, b, c = ms
    ab, ba = levy_prokhorov(a, b), levy_prokhorov(b, a)
    assert abs(ab - ba) <= 1e-6
    assert levy_prokhorov(a, a) == 0.0
    assert levy_prokhorov(a, c) <= ab + levy_prokhorov(b, c) + 2e-6
    assert 0.0 <= ab <= max(a.total_mass, b.total_mass) + 1e-6


# --- layered metric ----------------------------------------------------------

def test_rho_examples():
    assert rho_from_layer_distances([1.0, 0.0, 0.0]) == 0.5
    mu = AtomicMeasure.from_points(np.array([0.0, 1.0, 2.0]), [1.0, 0.5, 0.2])
    assert layered_metric_rho(mu, mu, [[0], [0, 1], [0, 1, 2]]) == 0.0


def test_rho_layer_one_difference():
    # differ only on a point of layer 1, by a unit mass far away from everything
    mu = AtomicMeasure.from_points(np.array([0.0, 10.0]), [1.0, 0.0])
    nu = AtomicMeasure(np.array([0.0, 0.0]), mu.distances)
    rho = layered_metric_rho(mu, nu, [[0]])
    assert rho == pytest.approx(0.5, abs=1e-6)


def test_rho_requires_nested_layers():
    mu = AtomicMeasure.from_points(np.array([0.0, 1.0]), [1.0, 1.0])
    with pytest.raises(ValueError):
        layered_metric_rho(mu, mu, [[0], [1]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=30))
def test_rho_bounded_by_one(dists):
    assert 0.0 <= rho_from_layer_distances(dists) <= 1.0


def test_rho_vanishes_along_converging_sequence():
    base = AtomicMeasure.from_points(np.array([0.0, 1.0, 3.0]), [1.0, 2.0, 0.5])
    layers = [[0], [0, 1], [0, 1, 2]]
    vals = []
    for k in range(1, 6):
        nu = AtomicMeasure(base.weights + 10.0 ** -k, base.distances)
        vals.append(layered_metric_rho(nu, base, layers))
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4
