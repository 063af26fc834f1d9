"""Canonical states, the deviation functional, gradients, and the fit."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxent_tomo import (
    DensityOperator,
    FockSpace,
    HermitianOperator,
    LagrangeVector,
    MissingMeans,
    ObservableSet,
    build_observation_level,
    canonical_state,
    default_bin_grid,
    deviation,
    deviation_gradient,
    entropy,
    fit,
    hermitian_expm,
    ladder_operators,
    mean_jacobian,
    simulate_ideal,
    superposition,
    thermal_state,
)

from conftest import make_trap, rotations

LN3 = 1.0986122886681098


def _random_obs(rng, dim, n_ops, with_means=True):
    """Small random observable set with means from a full-rank state, so the
    target is strictly interior and a finite multiplier vector exists."""
    ops = []
    for _ in range(n_ops):
        raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        ops.append(HermitianOperator((raw + raw.conj().T) / 2.0))
    labels = [("op", i) for i in range(n_ops)]
    obs = ObservableSet(operators=ops, labels=labels)
    if with_means:
        raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        rho = raw @ raw.conj().T
        rho /= np.trace(rho).real
        means = np.real([np.trace(rho @ op.matrix) for op in ops])
        obs = obs.with_means(means)
    return obs


# ---------------------------------------------------------------------------
# multiplier bookkeeping


def test_lagrange_vector_round_trip(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=3)
    obs = build_observation_level(trap, grid, (0.0, 1.0), 0.5, space16)
    lam = LagrangeVector.zeros(2, 7)
    assert lam.lambda_bins.shape == (2, 7)
    flat = np.arange(15.0)
    lam2 = LagrangeVector.from_flat(flat, (2, 7))
    assert lam2.lambda_n == 14.0
    assert lam2.lambda_bins[1, 6] == 13.0
    assert np.array_equal(lam2.flat(), flat)
    state = canonical_state(lam2, obs)
    assert np.array_equal(state.lambdas.flat(), flat)
    with pytest.raises(ValueError):
        LagrangeVector.from_flat(np.array([1.0, np.nan]), (1, 1))


@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=9),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_multiplier_flattening_round_trips(n_rot, n_bin, seed):
    flat = np.random.default_rng(seed).standard_normal(n_rot * n_bin + 1)
    lam = LagrangeVector.from_flat(flat, (n_rot, n_bin))
    assert lam.lambda_bins.shape == (n_rot, n_bin)
    assert np.array_equal(lam.flat(), flat)


# ---------------------------------------------------------------------------
# canonical states


def test_zero_multipliers_give_maximally_mixed(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=3)
    obs = build_observation_level(trap, grid, (0.0,), 0.5, space16)
    state = canonical_state(LagrangeVector.zeros(1, 7), obs)
    assert np.max(np.abs(state.rho.matrix - np.eye(16) / 16.0)) < 1e-14
    assert state.log_partition == pytest.approx(math.log(16.0), abs=1e-12)


def test_number_operator_multiplier_reproduces_thermal():
    """exp(-lambda n)/Z with lambda = ln((nbar+1)/nbar) is the geometric
    state; nbar = 0.5 needs lambda = ln 3."""
    space = FockSpace(32)
    obs = ObservableSet(
        operators=[HermitianOperator(ladder_operators(space).n)],
        labels=[("nbar",)],
    )
    lam = LagrangeVector(lambda_n=LN3, lambda_bins=np.zeros((0, 0)))
    state = canonical_state(lam, obs)
    target = thermal_state(space, 0.5)
    assert np.max(np.abs(state.rho.matrix - target.matrix)) < 1e-10

    # large multiplier freezes the state into the vacuum
    lam_big = LagrangeVector(lambda_n=50.0, lambda_bins=np.zeros((0, 0)))
    frozen = canonical_state(lam_big, obs)
    assert frozen.rho.populations()[0] == pytest.approx(1.0, abs=1e-12)


def test_canonical_state_matches_direct_exponential():
    rng = np.random.default_rng(5)
    obs = _random_obs(rng, 6, 3, with_means=False)
    flat = rng.uniform(-2.0, 2.0, 3)
    state = canonical_state(flat, obs)
    a = np.tensordot(flat, obs.matrix_stack, axes=(0, 0))
    raw = hermitian_expm(a, sign=-1)
    direct = raw / np.trace(raw).real
    assert np.max(np.abs(state.rho.matrix - direct)) < 1e-12
    assert state.log_partition == pytest.approx(
        math.log(np.trace(raw).real), abs=1e-10
    )


def test_canonical_states_are_always_physical():
    """Any multiplier vector must map to a valid density operator; the
    DensityOperator constructor enforces hermiticity, trace and positivity."""
    rng = np.random.default_rng(123)
    for _ in range(200):
        dim = int(rng.integers(2, 9))
        n_ops = int(rng.integers(1, 5))
        obs = _random_obs(rng, dim, n_ops, with_means=False)
        lam = rng.uniform(-5.0, 5.0, n_ops)
        state = canonical_state(lam, obs)
        assert isinstance(state.rho, DensityOperator)
        pops = state.rho.populations()
        assert pops.sum() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# deviation functional and derivatives


def test_deviation_requires_means(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=3)
    obs = build_observation_level(trap, grid, (0.0,), None, space16)
    state = canonical_state(LagrangeVector.zeros(1, 7), obs)
    with pytest.raises(MissingMeans):
        deviation(state, obs)
    with pytest.raises(MissingMeans):
        fit(obs)


def test_deviation_vanishes_on_self_consistent_means():
    rng = np.random.default_rng(9)
    obs = _random_obs(rng, 5, 3, with_means=False)
    lam = rng.uniform(-1.0, 1.0, 3)
    state = canonical_state(lam, obs)
    model = np.real([np.trace(state.rho.matrix @ op.matrix) for op in obs.operators])
    matched = obs.with_means(model)
    assert deviation(state, matched) < 1e-25
    grad = deviation_gradient(state, matched)
    assert np.max(np.abs(grad)) < 1e-12


def test_deviation_weights_scale_terms():
    rng = np.random.default_rng(21)
    obs = _random_obs(rng, 4, 2)
    state = canonical_state(np.zeros(2), obs)
    base = deviation(state, obs)
    doubled = ObservableSet(
        operators=obs.operators, labels=obs.labels, means=obs.means,
        weights=np.full(2, 2.0),
    )
    assert deviation(state, doubled) == pytest.approx(2.0 * base, rel=1e-12)


def test_gradient_matches_finite_differences():
    """Central differences with h = 1e-5 on random small problems."""
    rng = np.random.default_rng(31)
    for _ in range(10):
        dim = int(rng.integers(2, 8))
        n_ops = int(rng.integers(1, 5))
        obs = _random_obs(rng, dim, n_ops)
        lam = rng.uniform(-1.5, 1.5, n_ops)
        state = canonical_state(lam, obs)
        grad = np.asarray(deviation_gradient(state, obs), dtype=float)
        h = 1e-5
        for i in range(n_ops):
            lp, lm = lam.copy(), lam.copy()
            lp[i] += h
            lm[i] -= h
            fd = (deviation(canonical_state(lp, obs), obs)
                  - deviation(canonical_state(lm, obs), obs)) / (2.0 * h)
            scale = max(abs(fd), abs(grad[i]), 1e-10)
            assert abs(grad[i] - fd) / scale < 1e-5


def test_gradient_returns_lagrange_vector_for_structured_input(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=3)
    obs = build_observation_level(trap, grid, (0.0,), 0.4, space16)
    obs = obs.with_means(np.full(obs.n_ops, 0.1))
    lam = LagrangeVector.zeros(1, 7)
    state = canonical_state(lam, obs)
    grad = deviation_gradient(state, obs)
    assert isinstance(grad, LagrangeVector)
    assert grad.lambda_bins.shape == (1, 7)


def test_mean_jacobian_is_minus_covariance_for_commuting_ops():
    """When all observables are diagonal the susceptibility reduces to the
    classical result d<G_v>/d lambda_w = -Cov(G_v, G_w)."""
    rng = np.random.default_rng(17)
    dim = 6
    diags = [np.diag(rng.uniform(-1.0, 1.0, dim)) for _ in range(3)]
    obs = ObservableSet(
        operators=[HermitianOperator(d.astype(complex)) for d in diags],
        labels=[("op", i) for i in range(3)],
    )
    lam = rng.uniform(-1.0, 1.0, 3)
    state = canonical_state(lam, obs)
    jac = mean_jacobian(state, obs)
    p = state.rho.populations()
    g = np.array([np.real(np.diag(d)) for d in diags])
    mean = g @ p
    cov = (g * p) @ g.T - np.outer(mean, mean)
    assert np.max(np.abs(jac + cov)) < 1e-12


# ---------------------------------------------------------------------------
# fitting


def test_fit_thermal_from_number_operator_alone():
    space = FockSpace(32)
    obs = ObservableSet(
        operators=[HermitianOperator(ladder_operators(space).n)],
        labels=[("nbar",)],
        means=np.array([0.5]),
    )
    state, report = fit(obs)
    assert report.converged
    assert report.delta_f < 1e-13
    # sets without a (rotation, bin) layout carry plain multiplier arrays
    assert np.ravel(state.lambdas)[0] == pytest.approx(LN3, abs=1e-6)
    target = thermal_state(space, 0.5)
    assert np.max(np.abs(state.rho.matrix - target.matrix)) < 1e-8
    assert report.nbar_fit == pytest.approx(0.5, abs=1e-7)


def test_fit_handles_structured_initial_guess(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=6)
    obs = build_observation_level(trap, grid, (0.0, 1.3), 0.5, space16)
    rec = simulate_ideal(superposition(space16, [1.0, 1.0]), obs)
    obs = obs.with_record(rec)
    warm = LagrangeVector.zeros(2, 13)
    state, report = fit(obs, initial=warm, grad_tol=1e-10)
    assert report.delta_f < 1e-8
    assert report.iterations > 0
    assert len(report.history) >= report.iterations


def test_fit_is_deterministic(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=5)
    obs = build_observation_level(trap, grid, (0.0, 0.9), 0.5, space16)
    rec = simulate_ideal(superposition(space16, [1.0, 1.0]), obs)
    obs = obs.with_record(rec)
    s1, r1 = fit(obs)
    s2, r2 = fit(obs)
    assert np.array_equal(s1.lambdas.flat(), s2.lambdas.flat())
    assert r1.delta_f == r2.delta_f
    assert r1.iterations == r2.iterations


def test_fit_history_converges_monotonically(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=5)
    obs = build_observation_level(trap, grid, (0.0, 0.9), 0.5, space16)
    rec = simulate_ideal(superposition(space16, [1.0, 1.0]), obs)
    state, report = fit(obs.with_record(rec))
    hist = np.asarray(report.history)
    assert hist.size > 2
    # accepted L-BFGS iterates never increase the deviation (small slack
    # for the final noise floor)
    assert np.all(np.diff(hist) < 1e-12)
    assert hist[-1] < 1e-6


def test_fit_report_serializes():
    space = FockSpace(8)
    obs = ObservableSet(
        operators=[HermitianOperator(ladder_operators(space).n)],
        labels=[("nbar",)],
        means=np.array([1.0]),
    )
    _, report = fit(obs)
    payload = report.to_dict()
    text = json.dumps(payload)
    back = json.loads(text)
    assert back["converged"] is True
    assert back["delta_f"] == report.delta_f
    assert "history" not in back


def test_fit_flags_non_convergence(trap, space16):
    grid = default_bin_grid(trap, nbar=0.5, half_count=5)
    obs = build_observation_level(trap, grid, (0.0, 0.9), 0.5, space16)
    rec = simulate_ideal(superposition(space16, [1.0, 1.0]), obs)
    obs = obs.with_record(rec)
    state, report = fit(obs, max_iter=2, grad_tol=1e-30, max_restarts=0)
    assert not report.converged
    assert report.message


def test_maxent_state_dominates_feasible_entropies():
    """The converged canonical state must out-entropy every other state
    with the same means.  Generate alternatives by Frobenius-projecting
    random density matrices onto the constraint set with a convex solver."""
    cvxpy = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(57)
    dim, n_ops = 5, 3
    obs = _random_obs(rng, dim, n_ops)
    state, report = fit(obs, grad_tol=1e-12)
    assert report.delta_f < 1e-14
    s_fit = entropy(state.rho)

    mats = obs.matrix_stack
    for trial in range(6):
        raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        target = raw @ raw.conj().T
        target /= np.trace(target).real
        x = cvxpy.Variable((dim, dim), hermitian=True)
        constraints = [x >> 0, cvxpy.trace(x) == 1]
        for v in range(n_ops):
            constraints.append(
                cvxpy.real(cvxpy.trace(x @ mats[v])) == obs.means[v]
            )
        prob = cvxpy.Problem(
            cvxpy.Minimize(cvxpy.norm(x - target, "fro")), constraints
        )
        prob.solve()
        assert prob.status in ("optimal", "optimal_inaccurate")
        ev = np.linalg.eigvalsh(x.value)
        ev = np.clip(ev, 1e-14, None)
        ev = ev / ev.sum()
        s_other = float(-(ev * np.log(ev)).sum())
        assert s_other <= s_fit + 1e-5
