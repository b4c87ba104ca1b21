"""Centralized ground truth at desk scale.

``dense_decentralized_step`` replays the agent updates with an explicit
Laplacian. ``centralized_barycenter`` minimizes the barycenter objective
directly over the simplex, evaluating each regularized distance through its
conjugate: ``W(p) = max_lam <p, lam> - W*(lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .apdsgd import StepSchedule
from .entropic_dual import LocalDual, log_partition, transport_weights

DENSE_MAX_AGENTS = 50


class ConvergenceError(RuntimeError):
    pass


@dataclass
class DenseState:
    """All agents' blocks stacked as ``(m, n)`` arrays."""

    lam: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    p_hat: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, m: int, n: int) -> DenseState:
        return cls(*(np.zeros((m, n)) for _ in range(4)))


def _laplacian_times(Wbar: np.ndarray, G: np.ndarray) -> np.ndarray:
    # explicit column-order accumulation, zero entries included
    m = Wbar.shape[0]
    out = np.empty_like(G)
    for i in range(m):
        acc = np.zeros(G.shape[1])
        for j in range(m):
            acc = acc + Wbar[i, j] * G[j]
        out[i] = acc
    return out


def dense_decentralized_step(state: DenseState, Wbar: np.ndarray, algorithm: str, grads,
                             schedule: StepSchedule | None = None, L: float | None = None,
                             horizon: int | None = None) -> DenseState:
    """One round of either method on the stacked state.

    ``grads`` maps an ``(m, n)`` array of dual blocks to the ``(m, n)``
    array of local gradients (exact gradients for deterministic replay).
    """
    m = Wbar.shape[0]
    if m > DENSE_MAX_AGENTS:
        raise ValueError(f"dense replay limited to {DENSE_MAX_AGENTS} agents, got {m}")
    if algorithm == "nonaccel":
        if L is None or horizon is None:
            raise ValueError("nonaccel step needs L and horizon")
        G = grads(state.lam)
        lam = state.lam - _laplacian_times(Wbar, G) / L
        p_hat = state.p_hat + grads(lam) / horizon
        return replace(state, lam=lam, p_hat=p_hat, k=state.k + 1)
    if algorithm == "accel":
        if schedule is None:
            raise ValueError("accel step needs a schedule")
        a, C_k, C_next = schedule.step(state.k)
        lam = (a * state.zeta + C_k * state.eta) / C_next
        G = grads(lam)
        zeta = state.zeta - a * _laplacian_times(Wbar, G)
        eta = (a * zeta + C_k * state.eta) / C_next
        p_hat = (a * G + C_k * state.p_hat) / C_next
        return DenseState(lam, zeta, eta, p_hat, state.k + 1)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def exact_grads(locals_: list[LocalDual]):
    def grads(lam: np.ndarray) -> np.ndarray:
        return np.stack([loc.exact_grad(lam[i]) for i, loc in enumerate(locals_)])

    return grads


# -- centralized barycenter -------------------------------------------------


def _conjugate_parts(local: LocalDual, cols: np.ndarray):
    costs = local.atom_costs[:, cols]
    w = local.measure.weights
    gamma = local.gamma
    return costs, w, gamma


def regularized_distance(local: LocalDual, p, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """``W(p)`` for a discrete measure and the maximizing dual block.

    Support points with ``p_l = 0`` are excluded from the inner problem
    (their dual coordinate diverges to ``-inf``); the returned block has
    ``-inf`` there.
    """
    p = np.asarray(p, dtype=float)
    if not local.is_discrete:
        raise TypeError("regularized_distance needs a discrete measure")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must lie in the simplex")
    cols = np.flatnonzero(p > 0)
    costs, w, gamma = _conjugate_parts(local, cols)
    q = p[cols]
    k = len(cols)

    # the objective is flat along the all-ones direction; pin its mean
    def f(lam):
        return float(w @ log_partition(lam, costs, gamma)) - q @ lam + 0.5 * lam.mean() ** 2

    def jac(lam):
        return w @ transport_weights(lam, costs, gamma) - q + lam.mean() / k

    def hess(lam):
        S = transport_weights(lam, costs, gamma)
        H = (np.diag(w @ S) - (S * w[:, None]).T @ S) / gamma
        return H + 1.0 / k**2

    start = gamma * np.log(q) + costs.T @ w
    start = start - start.mean()
    res = minimize(f, start, jac=jac, hess=hess, method="trust-exact",
                   options={"gtol": tol, "maxiter": 500})
    if np.max(np.abs(jac(res.x))) > max(tol, 1e-10) * 100:
        raise ConvergenceError(f"inner conjugate problem did not converge: {res.message}")
    lam = np.full(len(p), -np.inf)
    lam[cols] = res.x
    value = q @ res.x - float(w @ log_partition(res.x, costs, gamma))
    return float(value), lam


def barycenter_objective(locals_: list[LocalDual], p) -> float:
    """``sum_i W_{gamma, mu_i}(p)``."""
    return float(sum(regularized_distance(loc, p)[0] for loc in locals_))


def _softmax(theta):
    e = np.exp(theta - theta.max())
    return e / e.sum()


def stationarity(p: np.ndarray, grad: np.ndarray) -> float:
    """Simplex-projected gradient residual ``max |p * (g - <p, g>)|``."""
    return float(np.max(np.abs(p * (grad - p @ grad))))


def centralized_barycenter(locals_: list[LocalDual], tol: float = 1e-8,
                           max_restarts: int = 5) -> np.ndarray:
    """Minimize ``sum_i W(p)`` over the simplex for discrete measures.

    Uses L-BFGS on softmax logits; the gradient in ``p`` is the sum of the
    inner maximizers (envelope theorem). Raises ``ConvergenceError`` when the
    projected-gradient residual stays above ``tol``.
    """
    if not locals_:
        raise ValueError("need at least one measure")
    n = locals_[0].n
    if any(not loc.is_discrete for loc in locals_):
        raise TypeError("centralized barycenter needs discrete measures")
    size = n * sum(len(loc.measure.weights) for loc in locals_)
    if size > 100_000:
        raise ValueError(f"problem too large for the dense reference solver ({size} entries)")

    def obj(theta):
        p = _softmax(theta)
        total, g = 0.0, np.zeros(n)
        for loc in locals_:
            v, lam = regularized_distance(loc, p)
            total += v
            g += lam
        return total, p * (g - p @ g)

    theta = np.zeros(n)
    for _ in range(max_restarts):
        res = minimize(obj, theta, jac=True, method="L-BFGS-B",
                       options={"gtol": tol * 1e-2, "ftol": 1e-16, "maxiter": 5000})
        theta = res.x - res.x.max()
        if np.max(np.abs(res.jac)) <= tol:
            return _softmax(theta)
    raise ConvergenceError(f"barycenter residual {np.max(np.abs(res.jac)):.3e} above tol {tol}")
