"""Semi-discrete entropic OT conjugate: values and gradients.

For a measure ``mu`` and dual block ``lam`` (length n), the conjugate is

    W*(lam) = E_Y  gamma * log sum_l exp((lam_l - c_l(Y)) / gamma)

up to the lam-independent constant ``-gamma E log q(Y)``, which is dropped
everywhere. Its gradient is the expected softmax ("transport weights").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measures import CostFunction, Discrete, SupportGrid


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def scaled_logits(lam, costs, gamma: float) -> np.ndarray:
    return (np.asarray(lam, float) - np.asarray(costs, float)) / gamma


def log_partition(lam, costs, gamma: float) -> np.ndarray:
    """Row-wise ``gamma * log sum_l exp((lam_l - costs_l)/gamma)``, max-shifted."""
    z = np.atleast_2d(scaled_logits(lam, costs, gamma))
    top = z.max(axis=1)
    return gamma * (top + np.log(np.exp(z - top[:, None]).sum(axis=1)))


def transport_weights(lam, costs, gamma: float) -> np.ndarray:
    """Row-wise softmax of ``(lam - costs)/gamma``; costs shaped ``(M, n)``."""
    z = np.atleast_2d(scaled_logits(lam, costs, gamma))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_transport(lam, y, g: SupportGrid, c: CostFunction, gamma: float) -> np.ndarray:
    """Transport weights of a single base point ``y``."""
    _check_gamma(gamma)
    return transport_weights(lam, c.matrix(g, y), gamma)[0]


def exact_dual_grad(o: Discrete, lam, g: SupportGrid, c: CostFunction, gamma: float,
                    atom_costs: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the conjugate for a discrete measure, as a finite sum."""
    if not isinstance(o, Discrete):
        raise TypeError(f"exact gradient needs a Discrete measure, got {type(o).__name__}")
    _check_gamma(gamma)
    if atom_costs is None:
        atom_costs = c.matrix(g, o.atoms)
    return o.weights @ transport_weights(lam, atom_costs, gamma)


def stochastic_dual_grad(o, lam, M: int, rng: np.random.Generator, g: SupportGrid,
                         c: CostFunction, gamma: float) -> np.ndarray:
    """Mini-batch gradient estimate: mean transport weights of ``M`` samples."""
    if M < 1:
        raise ValueError(f"batch size must be at least 1, got {M}")
    _check_gamma(gamma)
    ys = o.sample(rng, M)
    return transport_weights(lam, c.matrix(g, ys), gamma).mean(axis=0)


def dual_value(o, lam, M: int, rng: np.random.Generator | None, g: SupportGrid,
               c: CostFunction, gamma: float, atom_costs: np.ndarray | None = None) -> float:
    """Conjugate value; exact for discrete measures (``M`` and ``rng`` unused),
    Monte Carlo over ``M`` samples otherwise."""
    _check_gamma(gamma)
    if isinstance(o, Discrete):
        if atom_costs is None:
            atom_costs = c.matrix(g, o.atoms)
        return float(o.weights @ log_partition(lam, atom_costs, gamma))
    if M < 1:
        raise ValueError(f"batch size must be at least 1, got {M}")
    ys = o.sample(rng, M)
    return float(log_partition(lam, c.matrix(g, ys), gamma).mean())


@dataclass(eq=False)
class LocalDual:
    """One agent's conjugate: measure, support, cost and gamma bundled with
    a cached atom-cost matrix for discrete measures."""

    measure: object
    grid: SupportGrid
    cost: CostFunction
    gamma: float
    _atom_costs: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        _check_gamma(self.gamma)
        if getattr(self.measure, "space", None) != self.grid.space:
            raise ValueError(
                f"measure lives on {getattr(self.measure, 'space', '?')}, grid on {self.grid.space}"
            )

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.measure, Discrete)

    @property
    def atom_costs(self) -> np.ndarray:
        if self._atom_costs is None:
            self._atom_costs = self.cost.matrix(self.grid, self.measure.atoms)
        return self._atom_costs

    def exact_grad(self, lam) -> np.ndarray:
        return exact_dual_grad(self.measure, lam, self.grid, self.cost, self.gamma, self.atom_costs)

    def sample_costs(self, rng: np.random.Generator, M: int) -> np.ndarray:
        return self.cost.matrix(self.grid, self.measure.sample(rng, M))

    def stochastic_grad(self, lam, M: int, rng: np.random.Generator) -> np.ndarray:
        return stochastic_dual_grad(self.measure, lam, M, rng, self.grid, self.cost, self.gamma)

    def value(self, lam, M: int = 1000, rng: np.random.Generator | None = None) -> float:
        if self.is_discrete:
            return dual_value(self.measure, lam, M, None, self.grid, self.cost, self.gamma,
                              self.atom_costs)
        return dual_value(self.measure, lam, M, rng, self.grid, self.cost, self.gamma)
