import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpnls.diagnostics import LEFT_LIMIT, POST_JUMP, energy, mass
from jumpnls.grid import Grid
from jumpnls.noise import CoefficientPair, IntensitySpec, evaluate_mark, sample_prm
from jumpnls.nls import (
    NumericalError,
    SolverConfig,
    admissible_pair,
    apply_jump,
    free_group_apply,
    gaussian,
    min_delta,
    nemytskii,
    nonlinearity,
    read_field,
    single_mode,
    solve,
    step_between_jumps,
    validate_alpha,
    write_field,
)

from oracles import single_mode_ode

GRID = Grid(1, 256, 2 * np.pi)


def _smooth_field(seed=0, grid=GRID, modes=6):
    rng = np.random.default_rng(seed)
    u = np.zeros(grid.shape, dtype=complex)
    for k in range(-modes, modes + 1):
        u += (rng.normal() + 1j * rng.normal()) / (1 + k * k) * np.exp(1j * k * grid.coords[0])
    return u


# --- free group -------------------------------------------------------------------

def test_free_group_single_mode_sign_against_ode():
    u = single_mode(GRID, 1)
    out = free_group_apply(u, np.pi, GRID)
    ref = single_mode_ode(1.0, np.pi)
    np.testing.assert_allclose(out, ref * u, atol=1e-10)
    np.testing.assert_allclose(out, -u, atol=1e-12)
    for k, t in ((3, 0.37), (-5, 1.1)):
        v = single_mode(GRID, k)
        np.testing.assert_allclose(free_group_apply(v, t, GRID), single_mode_ode(k, t) * v, atol=1e-9)


def test_free_group_identity_and_group_law():
    u = _smooth_field(1)
    np.testing.assert_array_equal(free_group_apply(u, 0.0, GRID), u)
    a = free_group_apply(free_group_apply(u, 0.3, GRID), 0.45, GRID)
    np.testing.assert_allclose(a, free_group_apply(u, 0.75, GRID), atol=1e-12)
    np.testing.assert_allclose(free_group_apply(free_group_apply(u, -0.2, GRID), 0.2, GRID), u, atol=1e-12)


def test_free_group_unitary_per_step_and_accumulated():
    u = _smooth_field(2)
    m0 = mass(u, GRID)
    v = u
    worst = 0.0
    for _ in range(10_000):
        w = free_group_apply(v, 1e-3, GRID)
        worst = max(worst, abs(mass(w, GRID) - mass(v, GRID)) / m0)
        v = w
    assert worst < 1e-12
    assert abs(mass(v, GRID) - m0) / m0 < 1e-9


def test_free_group_two_dimensional_mode():
    g = Grid(2, 32, 2 * np.pi)
    x, y = g.coords
    u = np.exp(1j * (2 * x + 3 * y))
    np.testing.assert_allclose(free_group_apply(u, 0.1, g), np.exp(1j * 13 * 0.1) * u, atol=1e-12)


# --- pointwise operators --------------------------------------------------------------

def test_nemytskii_examples():
    pair = CoefficientPair.linear(1.0, 0.5)
    u = _smooth_field(3)
    np.testing.assert_array_equal(nemytskii(pair.g, np.ones(GRID.shape), u), u)
    np.testing.assert_array_equal(nemytskii(pair.g, np.zeros(GRID.shape), u), 0 * u)
    with pytest.raises(ValueError):
        nemytskii(pair.g, np.zeros(10), u)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3, 3))
def test_nemytskii_lipschitz(seed, c):
    pair = CoefficientPair(lambda z: c * np.tanh(z), lambda z: 0 * z, abs(c), 0.0)
    rng = np.random.default_rng(seed)
    u = _smooth_field(seed % 100)
    z1, z2 = rng.normal(size=GRID.shape), rng.normal(size=GRID.shape)
    lhs = math.sqrt(mass(nemytskii(pair.g, z1, u) - nemytskii(pair.g, z2, u), GRID))
    rhs = pair.lip_g * np.max(np.abs(u)) * math.sqrt(mass(z1 - z2, GRID))
    assert lhs <= rhs * (1 + 1e-12) + 1e-14


def test_nonlinearity_examples():
    assert nonlinearity(np.ones(4, dtype=complex), 3.0)[0] == 1.0
    assert np.all(nonlinearity(np.zeros(4, dtype=complex), 3.0) == 0)
    with pytest.raises(ValueError):
        nonlinearity(np.ones(2), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1, 7))
def test_nonlinearity_modulus(re, im, alpha):
    u = np.array([complex(re, im)])
    assert abs(nonlinearity(u, alpha)[0]) == pytest.approx(abs(u[0]) ** alpha, rel=1e-12, abs=1e-300)


# --- exponent calculators ----------------------------------------------------------------

def test_validate_alpha():
    assert not validate_alpha(3, 3.0)
    assert validate_alpha(3, 2.999)
    assert validate_alpha(2, 7.0)
    assert all(validate_alpha(1, a) for a in (1.0, 2.5, 40.0))
    assert not validate_alpha(1, 0.9)


def test_min_delta_arithmetic():
    assert min_delta(1, 3.0) == 0.25
    assert min_delta(3, 2.0) == 0.5
    assert min_delta(2, 2.0) == 0.0
    assert min_delta(1, 1.0) == -math.inf
    with pytest.raises(ValueError):
        min_delta(3, 3.0)


def test_admissible_pair_arithmetic():
    assert admissible_pair(2, 4.0).rho == 4.0
    p = admissible_pair(1, math.inf)
    assert p.rho == 4.0 and p.gamma_conj == 1.0 and p.rho_conj == 4.0 / 3.0
    assert admissible_pair(3, 2.0).rho == math.inf
    assert admissible_pair(3, 6.0).rho == 2.0
    for d, g in ((2, math.inf), (3, 7.0), (1, 1.5)):
        with pytest.raises(ValueError):
            admissible_pair(d, g)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.floats(0, 1))
def test_admissible_relation_holds(d, frac):
    upper = 2 * d / (d - 2) if d > 2 else 50.0
    gamma = 2 + frac * (upper - 2)
    p = admissible_pair(d, gamma)
    lhs = 0.0 if p.rho == math.inf else 2 / p.rho
    assert lhs == pytest.approx(d * (0.5 - 1 / gamma), abs=1e-12)
    assert 1 / p.gamma + 1 / p.gamma_conj == pytest.approx(1.0)


# --- jumps -----------------------------------------------------------------------------

def test_jump_doubles_local_intensity():
    pair = CoefficientPair.linear(1.0, 1.0)
    u = _smooth_field(4)
    out = apply_jump(u, np.ones(GRID.shape), pair)
    np.testing.assert_allclose(np.abs(out) ** 2, 2 * np.abs(u) ** 2, rtol=1e-14)
    np.testing.assert_array_equal(apply_jump(u, np.zeros(GRID.shape), pair), u)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 3.0))
def test_jump_mass_two_routes(seed, c_g):
    spec = IntensitySpec()
    marks = spec.sample_marks(1, 10, np.random.default_rng(seed))
    z = evaluate_mark(marks, GRID)
    u = _smooth_field(seed % 50)
    pair = CoefficientPair.linear(c_g, 0.0)
    direct = mass(apply_jump(u, z, pair), GRID)
    expanded = float(np.sum(np.abs(u) ** 2 * (1 + (c_g * z) ** 2)) * GRID.cell_volume)
    assert abs(direct - expanded) <= 1e-10 * expanded


# --- stepping --------------------------------------------------------------------------

def test_linear_free_step_matches_group():
    cfg = SolverConfig(lam=0.0, grid=GRID, dt=1e-3)
    u = _smooth_field(5)
    np.testing.assert_allclose(step_between_jumps(u, 1e-3, cfg), free_group_apply(u, 1e-3, GRID), atol=1e-14)


def test_local_substep_preserves_modulus():
    cfg = SolverConfig(lam=1.0, alpha=3.0, grid=GRID, dt=1e-2)
    u = 2 * _smooth_field(6)
    h = 1e-2
    out = step_between_jumps(u, h, cfg, m=0.7)
    # undo the outer half free steps: the middle factor is a pure phase
    inner_out = free_group_apply(out, -h / 2, GRID)
    inner_in = free_group_apply(u, h / 2, GRID)
    np.testing.assert_allclose(np.abs(inner_out), np.abs(inner_in), atol=1e-12)


def test_step_rejects_long_substep_and_overflow():
    cfg = SolverConfig(grid=GRID, dt=1e-3)
    u = _smooth_field(7)
    with pytest.raises(ValueError):
        step_between_jumps(u, 2e-3, cfg)
    bad = u.copy()
    bad[3] = np.inf
    with pytest.raises(NumericalError):
        step_between_jumps(bad, 1e-3, cfg)


def test_global_second_order_convergence():
    u0 = gaussian(GRID, 1.0, 0.7)
    base = SolverConfig(lam=1.0, alpha=3.0, grid=GRID, T=0.5, store_fields=False, snapshot_every=10 ** 6)
    ref = solve(SolverConfig(**{**base.__dict__, "dt": 1e-2 / 16}), None, u0).final
    errs = []
    for dt in (1e-2, 5e-3):
        out = solve(SolverConfig(**{**base.__dict__, "dt": dt}), None, u0).final
        errs.append(math.sqrt(mass(out - ref, GRID)))
    assert errs[0] / errs[1] > 3.5


# --- full solver -------------------------------------------------------------------------

def test_free_evolution_exact():
    u0 = single_mode(GRID, 2)
    sol = solve(SolverConfig(lam=0.0, grid=GRID, T=1.0, dt=1e-3), None, u0)
    np.testing.assert_allclose(sol.final, np.exp(4j) * u0, atol=1e-10)


def test_deterministic_mass_conservation():
    u0 = gaussian(GRID, 1.4, 0.7)
    sol = solve(SolverConfig(lam=1.0, grid=GRID, T=1.0, dt=1e-3, store_fields=False, snapshot_every=50), None, u0)
    m = sol.diagnostics[:, 1]
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-8
    e = sol.diagnostics[:, 2]
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-5


def _noisy_config(**kw):
    base = dict(grid=GRID, noise=IntensitySpec(), layer=10, T=1.0, dt=1e-3, snapshot_every=100)
    base.update(kw)
    return SolverConfig(**base)


def test_replay_is_bit_identical_and_jumps_are_booked():
    cfg = _noisy_config()
    u0 = gaussian(GRID, 1.0, 0.7)
    eta = sample_prm(cfg.noise, cfg.layer, cfg.T, np.random.default_rng(3))
    a, b = solve(cfg, eta, u0), solve(cfg, eta, u0)
    assert np.array_equal(a.final, b.final) and np.array_equal(a.diagnostics, b.diagnostics)
    assert a.n_jumps == len(eta) > 0
    assert np.count_nonzero(a.flags == LEFT_LIMIT) == len(eta) == np.count_nonzero(a.flags == POST_JUMP)
    np.testing.assert_array_equal(a.times[a.flags == LEFT_LIMIT], eta.times)
    for i, left in zip(np.flatnonzero(a.flags == LEFT_LIMIT), a.left_limits()):
        z = evaluate_mark(eta.marks[[list(eta.times).index(a.times[i])]], GRID)
        np.testing.assert_array_equal(a.fields[i + 1], apply_jump(left, z, cfg.pair))
    assert a.times[-1] == cfg.T and a.path().horizon == cfg.T


def test_blowup_guard_aborts_with_partial_path():
    cfg = SolverConfig(grid=GRID, lam=1.0, T=1.0, dt=1e-3, blowup_threshold=0.5)
    sol = solve(cfg, None, gaussian(GRID, 1.0, 0.7))
    assert sol.aborted and sol.abort_time <= 1e-3 + 1e-15
    assert sol.path().horizon == sol.abort_time


def test_solver_input_validation():
    with pytest.raises(ValueError):
        SolverConfig(grid=Grid(1, 64, 2 * np.pi), dt=2.0, T=1.0)
    with pytest.raises(ValueError):
        SolverConfig(grid=Grid(2, 16, 2 * np.pi), alpha=0.5)
    with pytest.raises(ValueError):
        SolverConfig(lam=-1.0)
    eta = sample_prm(IntensitySpec(), 10, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        solve(SolverConfig(grid=GRID), eta, gaussian(GRID))
    with pytest.raises(ValueError):
        solve(SolverConfig(grid=GRID), None, np.full(GRID.shape, np.nan, dtype=complex))


def test_energy_of_defocusing_sign():
    u0 = gaussian(GRID, 1.0, 0.7)
    sol = solve(SolverConfig(grid=GRID, lam=1.0, nonlinearity_sign=-1.0, T=0.2, dt=1e-3), None, u0)
    e = sol.diagnostics[:, 2]
    assert e[0] == pytest.approx(energy(u0, GRID, 3.0, 1.0, -1.0))
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-6


# --- snapshots --------------------------------------------------------------------------------

@pytest.mark.parametrize("grid", [GRID, Grid(2, 16, 3.0)])
def test_field_roundtrip(grid):
    rng = np.random.default_rng(0)
    u = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    buf = io.BytesIO()
    write_field(buf, u, grid)
    assert len(buf.getvalue()) == 40 + 16 * u.size
    buf.seek(0)
    v, g = read_field(buf)
    assert g == grid and np.array_equal(u, v)


def test_field_header_checked():
    buf = io.BytesIO(b"NOTAFILE" + bytes(40))
    with pytest.raises(ValueError):
        read_field(buf)
    with pytest.raises(ValueError):
        read_field(io.BytesIO(b"short"))
