import numpy as np
import pytest

from decbary.reference import (ConvergenceError, DenseState, barycenter_objective,
                               centralized_barycenter, dense_decentralized_step, exact_grads,
                               regularized_distance, stationarity)

from .conftest import random_discrete_locals


def sinkhorn_value(costs, w, p, gamma, iters=20_000):
    """``min <C, pi> + gamma sum pi log(pi / w_a)`` over couplings of ``w`` and ``p``."""
    K = np.exp(-costs / gamma)
    v = np.ones(len(p))
    for _ in range(iters):
        u = w / (K @ v)
        v = p / (K.T @ u)
    pi = u[:, None] * K * v[None, :]
    mask = pi > 0
    return float(np.sum(costs * pi) + gamma * np.sum(pi[mask] * np.log(pi[mask]))
                 - gamma * np.sum(w * np.log(w)))


@pytest.mark.parametrize("seed", range(4))
def test_regularized_distance_matches_sinkhorn(seed):
    rng = np.random.default_rng(seed)
    loc = random_discrete_locals(rng, 1, 5, atoms=3, gamma=0.5)[0]
    p = rng.dirichlet(np.ones(5))
    value, lam = regularized_distance(loc, p)
    ref = sinkhorn_value(loc.atom_costs, loc.measure.weights, p, 0.5)
    assert value == pytest.approx(ref, abs=1e-8)
    # the maximizer reproduces p through the conjugate gradient
    assert np.allclose(loc.exact_grad(lam), p, atol=1e-8)


def test_regularized_distance_with_empty_support_point(rng):
    loc = random_discrete_locals(rng, 1, 4, atoms=3, gamma=0.5)[0]
    p = np.array([0.5, 0.0, 0.25, 0.25])
    value, lam = regularized_distance(loc, p)
    assert lam[1] == -np.inf
    cols = [0, 2, 3]
    ref = sinkhorn_value(loc.atom_costs[:, cols], loc.measure.weights, p[cols], 0.5)
    assert value == pytest.approx(ref, abs=1e-8)


def test_regularized_distance_rejects_non_simplex(rng):
    loc = random_discrete_locals(rng, 1, 4)[0]
    with pytest.raises(ValueError):
        regularized_distance(loc, np.array([0.5, 0.5, 0.5, -0.5]))


def test_centralized_barycenter_is_a_minimum(rng):
    locals_ = random_discrete_locals(rng, 3, 5, atoms=3, gamma=0.2)
    p = centralized_barycenter(locals_)
    best = barycenter_objective(locals_, p)
    grad = sum(regularized_distance(loc, p)[1] for loc in locals_)
    assert stationarity(p, grad) < 1e-7
    for _ in range(10):
        q = 0.9 * p + 0.1 * rng.dirichlet(np.ones(5))
        assert barycenter_objective(locals_, q) >= best - 1e-12


def test_single_measure_barycenter_is_its_projection(rng):
    # with one measure the barycenter of W(., mu) is argmin_p W(p) = grad W*(0)
    loc = random_discrete_locals(rng, 1, 5, atoms=3, gamma=0.3)[0]
    p = centralized_barycenter([loc])
    assert np.allclose(p, loc.exact_grad(np.zeros(5)), atol=1e-6)


def test_centralized_size_guard(rng):
    locals_ = random_discrete_locals(rng, 2, 400, atoms=200)
    with pytest.raises(ValueError, match="too large"):
        centralized_barycenter(locals_)


def test_centralized_reports_non_convergence(rng):
    locals_ = random_discrete_locals(rng, 2, 4, atoms=2, gamma=0.2)
    with pytest.raises(ConvergenceError):
        centralized_barycenter(locals_, tol=1e-30, max_restarts=1)


def test_dense_step_argument_checks(rng):
    locals_ = random_discrete_locals(rng, 2, 3)
    Wbar = np.array([[1.0, -1.0], [-1.0, 1.0]])
    state = DenseState.zeros(2, 3)
    with pytest.raises(ValueError):
        dense_decentralized_step(state, Wbar, "nonaccel", exact_grads(locals_))
    with pytest.raises(ValueError):
        dense_decentralized_step(state, Wbar, "accel", exact_grads(locals_))
    with pytest.raises(ValueError):
        dense_decentralized_step(state, Wbar, "newton", exact_grads(locals_))
    with pytest.raises(ValueError, match="limited"):
        dense_decentralized_step(DenseState.zeros(51, 3), np.eye(51), "accel", None)
