"""Per-agent state machines for decentralized barycenter computation.

Agents work in the transformed duals ``lam_bar = sqrt(W) lam`` (likewise
``zeta_bar``, ``eta_bar``), so every update needs only row ``i`` of the
Laplacian: the agent's own gradient times its degree minus its neighbors'
gradients. A round has two phases:

1. ``emit``   -- compute the local gradient estimate and broadcast it;
2. ``absorb`` -- combine the inbox (exactly one message per neighbor) into
   the dual and primal updates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .apdsgd import StepSchedule
from .entropic_dual import LocalDual, transport_weights
from .graph import Topology

logger = logging.getLogger(__name__)

DEFAULT_BATCH_CAP = 10_000


class ProtocolError(RuntimeError):
    """Inbox does not hold exactly one current-round message per neighbor."""


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    round: int
    grad: np.ndarray


@dataclass(frozen=True)
class RunParams:
    gamma: float
    epsilon: float
    L: float
    batch_cap: int = DEFAULT_BATCH_CAP
    fixed_batch: int | None = None
    exact: bool = False
    R: float | None = None

    def __post_init__(self):
        for name in ("gamma", "epsilon", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_cap < 1:
            raise ValueError("batch_cap must be at least 1")
        if self.fixed_batch is not None and self.fixed_batch < 1:
            raise ValueError("fixed_batch must be at least 1")
        if self.R is not None and not self.R > 0:
            raise ValueError("R must be positive")


def _uncapped_batch(k: int, schedule: StepSchedule, m: int, gamma: float, epsilon: float) -> int:
    if k < 0:
        return 1
    a, _, C_next = schedule.step(k)
    x = m * gamma * (C_next / a) / epsilon
    # guard against ceil(100.00000000000001) == 101
    return max(1, math.ceil(x * (1.0 - 1e-12)))


def batch_size(k: int, schedule: StepSchedule, m: int, gamma: float, epsilon: float,
               cap: int = DEFAULT_BATCH_CAP, fixed: int | None = None) -> int:
    """Sample count ``M_{k+1} = max(1, ceil(m gamma C_{k+1} / (alpha_{k+1} eps)))``
    for round ``k``, clamped at ``cap``. ``fixed`` overrides the formula."""
    if fixed is not None:
        return int(fixed)
    M = _uncapped_batch(k, schedule, m, gamma, epsilon)
    if M > cap:
        # M is nondecreasing in k, so this fires once per schedule
        if _uncapped_batch(k - 1, schedule, m, gamma, epsilon) <= cap:
            logger.warning("batch size %d clamped to cap %d from round %d on", M, cap, k + 1)
        return int(cap)
    return M


@dataclass
class AgentState:
    id: int
    local: LocalDual
    neighbors: tuple[int, ...]
    lam_bar: np.ndarray
    zeta_bar: np.ndarray
    eta_bar: np.ndarray
    p_hat: np.ndarray
    k: int = 0
    last_grad: np.ndarray | None = None
    # nonaccel keeps its sample costs until the primal update
    _sample_costs: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def initial(cls, agent_id: int, local: LocalDual, neighbors) -> AgentState:
        n = local.n
        return cls(agent_id, local, tuple(sorted(neighbors)),
                   np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))

    @property
    def degree(self) -> int:
        return len(self.neighbors)

    def _weighted_sum(self, inbox: dict[int, RoundMessage]) -> np.ndarray:
        """Row ``i`` of the Laplacian applied to the stacked gradients,
        accumulated in ascending agent index."""
        if set(inbox) != set(self.neighbors):
            missing = sorted(set(self.neighbors) - set(inbox))
            extra = sorted(set(inbox) - set(self.neighbors))
            raise ProtocolError(
                f"agent {self.id} round {self.k}: missing {missing}, unexpected {extra}"
            )
        for j, msg in inbox.items():
            if msg.sender != j or msg.round != self.k:
                raise ProtocolError(
                    f"agent {self.id} round {self.k}: bad message from {msg.sender} "
                    f"(round {msg.round}) in slot {j}"
                )
        acc = np.zeros_like(self.last_grad)
        for j in sorted((self.id,) + self.neighbors):
            if j == self.id:
                acc = acc + float(self.degree) * self.last_grad
            else:
                acc = acc + -1.0 * inbox[j].grad
        return acc

    # -- non-accelerated --------------------------------------------------

    def emit_nonaccel(self, rng: np.random.Generator | None, exact: bool = False) -> RoundMessage:
        if exact:
            grad = self.local.exact_grad(self.lam_bar)
        else:
            self._sample_costs = self.local.sample_costs(rng, 1)
            grad = transport_weights(self.lam_bar, self._sample_costs, self.local.gamma)[0]
        self.last_grad = grad
        return RoundMessage(self.id, self.k, grad)

    def absorb_nonaccel(self, inbox: dict[int, RoundMessage], L: float, horizon: int,
                        exact: bool = False) -> None:
        acc = self._weighted_sum(inbox)
        self.lam_bar = self.lam_bar - acc / L
        if exact:
            p_new = self.local.exact_grad(self.lam_bar)
        else:
            p_new = transport_weights(self.lam_bar, self._sample_costs, self.local.gamma)[0]
            self._sample_costs = None
        self.p_hat = self.p_hat + p_new / horizon
        self.k += 1

    # -- accelerated ------------------------------------------------------

    def emit_accel(self, rng: np.random.Generator | None, schedule: StepSchedule,
                   batch: int, exact: bool = False) -> RoundMessage:
        a, C_k, C_next = schedule.step(self.k)
        self.lam_bar = (a * self.zeta_bar + C_k * self.eta_bar) / C_next
        if exact:
            grad = self.local.exact_grad(self.lam_bar)
        else:
            grad = self.local.stochastic_grad(self.lam_bar, batch, rng)
        self.last_grad = grad
        return RoundMessage(self.id, self.k, grad)

    def absorb_accel(self, inbox: dict[int, RoundMessage], schedule: StepSchedule) -> None:
        a, C_k, C_next = schedule.step(self.k)
        acc = self._weighted_sum(inbox)
        self.zeta_bar = self.zeta_bar - a * acc
        self.eta_bar = (a * self.zeta_bar + C_k * self.eta_bar) / C_next
        # batch-mean primal estimator: the broadcast gradient itself
        self.p_hat = (a * self.last_grad + C_k * self.p_hat) / C_next
        self.k += 1


def make_agents(topology: Topology, locals_: list[LocalDual]) -> list[AgentState]:
    if len(locals_) != topology.m:
        raise ValueError(f"{len(locals_)} measures for {topology.m} agents")
    return [AgentState.initial(i, loc, topology.neighbors(i)) for i, loc in enumerate(locals_)]


def deliver(messages: list[RoundMessage], agents: list[AgentState]) -> list[dict[int, RoundMessage]]:
    """Route each message to the sender's neighbors only."""
    by_sender = {msg.sender: msg for msg in messages}
    return [{j: by_sender[j] for j in agent.neighbors} for agent in agents]


def _map(pool, fn, items):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def nonaccel_round(agents: list[AgentState], rngs, L: float, horizon: int,
                   exact: bool = False, pool=None) -> list[RoundMessage]:
    """One synchronous round of the non-accelerated method (batch size 1)."""
    outgoing = _map(pool, lambda ar: ar[0].emit_nonaccel(ar[1], exact), list(zip(agents, rngs)))
    inboxes = deliver(outgoing, agents)
    _map(pool, lambda ai: ai[0].absorb_nonaccel(ai[1], L, horizon, exact),
         list(zip(agents, inboxes)))
    return outgoing


def accel_round(agents: list[AgentState], rngs, schedule: StepSchedule, params: RunParams,
                pool=None) -> tuple[list[RoundMessage], int]:
    """One synchronous round of the accelerated method.

    Returns the broadcast messages and the batch size used.
    """
    k = agents[0].k
    batch = batch_size(k, schedule, len(agents), params.gamma, params.epsilon,
                       params.batch_cap, params.fixed_batch)
    outgoing = _map(pool, lambda ar: ar[0].emit_accel(ar[1], schedule, batch, params.exact),
                    list(zip(agents, rngs)))
    inboxes = deliver(outgoing, agents)
    _map(pool, lambda ai: ai[0].absorb_accel(ai[1], schedule), list(zip(agents, inboxes)))
    return outgoing, batch
