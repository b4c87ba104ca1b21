"""Accelerated stochastic gradient (ASGD) and its primal-dual variant (APDSGD).

Both use the Euclidean prox setup, so the mirror step reduces to
``zeta <- zeta - alpha * grad``. Step weights follow

    C_{k+1} = C_k + alpha_{k+1} = 2 L alpha_{k+1}^2,   C_0 = alpha_0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .entropic_dual import transport_weights


def next_alpha(C: float, L: float) -> float:
    """Larger root of ``2 L a^2 - a - C = 0``."""
    if not L > 0:
        raise ValueError(f"Lipschitz constant must be positive, got {L}")
    if C < 0:
        raise ValueError(f"C must be nonnegative, got {C}")
    return (1.0 + math.sqrt(1.0 + 8.0 * L * C)) / (4.0 * L)


class StepSchedule:
    """Lazily extended sequences ``alpha_k`` and ``C_k`` for a fixed ``L``."""

    def __init__(self, L: float):
        if not L > 0:
            raise ValueError(f"Lipschitz constant must be positive, got {L}")
        self.L = float(L)
        self._alphas = [0.0]
        self._Cs = [0.0]

    def _extend(self, k: int) -> None:
        while len(self._Cs) <= k:
            a = next_alpha(self._Cs[-1], self.L)
            self._alphas.append(a)
            self._Cs.append(self._Cs[-1] + a)

    def alpha(self, k: int) -> float:
        self._extend(k)
        return self._alphas[k]

    def C(self, k: int) -> float:
        self._extend(k)
        return self._Cs[k]

    def step(self, k: int) -> tuple[float, float, float]:
        """``(alpha_{k+1}, C_k, C_{k+1})`` for the transition out of iterate k."""
        self._extend(k + 1)
        return self._alphas[k + 1], self._Cs[k], self._Cs[k + 1]


@dataclass
class SolverState:
    lam: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    x_hat: np.ndarray | None = None
    k: int = 0

    @classmethod
    def start(cls, lam0, primal_dim: int | None = None) -> SolverState:
        lam0 = np.array(lam0, dtype=float)
        x_hat = None if primal_dim is None else np.zeros(primal_dim)
        return cls(lam0.copy(), lam0.copy(), lam0.copy(), x_hat, 0)


@dataclass
class StochasticDualOracle:
    """Stochastic first-order access to ``phi(lam) = <lam, b> + f*(-A^T lam)``.

    ``primal_response(u, rng)`` returns ``x(u, xi) = argmax_x <u, x> - F(x, xi)``
    evaluated at ``u = -A^T lam``; the gradient is ``b - A x``.
    """

    A: np.ndarray
    b: np.ndarray
    primal_response: Callable[[np.ndarray, np.random.Generator | None], np.ndarray]
    value: Callable[[np.ndarray, np.random.Generator | None], float] | None = None

    def respond(self, lam, rng=None) -> tuple[np.ndarray, np.ndarray]:
        x = self.primal_response(-(self.A.T @ lam), rng)
        return self.b - self.A @ x, x

    def gradient(self, lam, rng=None) -> np.ndarray:
        return self.respond(lam, rng)[0]

    def check_consistency(self, lam, grad, x, rtol: float = 1e-12) -> bool:
        expected = self.b - self.A @ x
        return bool(np.allclose(grad, expected, rtol=rtol, atol=rtol))


def _check_dims(state: SolverState) -> None:
    if not (state.lam.shape == state.zeta.shape == state.eta.shape):
        raise ValueError(
            f"dual dimensions disagree: {state.lam.shape}, {state.zeta.shape}, {state.eta.shape}"
        )


def _dual_update(state, grad_at, schedule):
    a, C_k, C_next = schedule.step(state.k)
    lam = (a * state.zeta + C_k * state.eta) / C_next
    grad, extra = grad_at(lam)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != lam.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match dual shape {lam.shape}")
    zeta = state.zeta - a * grad
    eta = (a * zeta + C_k * state.eta) / C_next
    return lam, zeta, eta, extra, (a, C_k, C_next)


def asgd_step(state: SolverState, grad_fn, schedule: StepSchedule, rng=None) -> SolverState:
    """One ASGD iteration; ``grad_fn(lam, rng)`` returns a stochastic gradient."""
    _check_dims(state)
    lam, zeta, eta, _, _ = _dual_update(state, lambda l: (grad_fn(l, rng), None), schedule)
    return replace(state, lam=lam, zeta=zeta, eta=eta, k=state.k + 1)


def apdsgd_step(state: SolverState, oracle: StochasticDualOracle, schedule: StepSchedule,
                rng=None) -> tuple[SolverState, np.ndarray]:
    """One APDSGD iteration. Returns the new state and the primal response
    used for the running average ``x_hat``."""
    _check_dims(state)
    lam, zeta, eta, x, (a, C_k, C_next) = _dual_update(
        state, lambda l: oracle.respond(l, rng), schedule
    )
    x = np.asarray(x, dtype=float)
    x_prev = np.zeros_like(x) if state.x_hat is None else state.x_hat
    if x_prev.shape != x.shape:
        raise ValueError(f"primal shape {x.shape} does not match x_hat {x_prev.shape}")
    x_hat = (a * x + C_k * x_prev) / C_next
    return replace(state, lam=lam, zeta=zeta, eta=eta, x_hat=x_hat, k=state.k + 1), x


def apdsgd(oracle: StochasticDualOracle, L: float, N: int, rng=None,
           lam0=None, record: bool = False):
    """Run ``N`` APDSGD iterations from ``lam0`` (zero by default).

    With ``record=True`` also returns the list of primal responses.
    """
    dim = oracle.b.shape[0]
    state = SolverState.start(np.zeros(dim) if lam0 is None else lam0, oracle.A.shape[1])
    schedule = StepSchedule(L)
    responses = []
    for _ in range(N):
        state, x = apdsgd_step(state, oracle, schedule, rng)
        if record:
            responses.append(x)
    return (state, schedule, responses) if record else state


def entropic_simplex_oracle(A, b, costs, gamma: float) -> StochasticDualOracle:
    """Deterministic oracle for ``f(x) = sum_b <c_b, x_b> + gamma sum x log x``
    over a product of simplices, one block per row of ``costs``.

    The primal response is a block-wise softmax, so ``phi`` has a
    ``lambda_max(A A^T)/gamma``-Lipschitz gradient.
    """
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    nb, n = costs.shape
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def response(u, rng=None):
        return transport_weights(u.reshape(nb, n), costs, gamma).reshape(-1)

    return StochasticDualOracle(A, b, response)
