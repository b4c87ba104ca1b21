import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decbary import graph
from decbary.agents import (ProtocolError, RoundMessage, RunParams, accel_round, batch_size,
                            deliver, make_agents, nonaccel_round)
from decbary.apdsgd import StepSchedule
from decbary.reference import DenseState, dense_decentralized_step, exact_grads

from .conftest import random_discrete_locals


def _setup(kind, m, n=4, seed=0, gamma=0.1):
    rng = np.random.default_rng(seed)
    topo = graph.build(kind, m, seed=seed)
    locals_ = random_discrete_locals(rng, m, n, gamma=gamma)
    lap = graph.laplacian(topo)
    L = graph.lambda_max(lap) / gamma
    return topo, locals_, lap, L


def _params(L, gamma=0.1, **kw):
    return RunParams(gamma=gamma, epsilon=1.0, L=L, **kw)


@pytest.mark.parametrize("kind", ["complete", "cycle", "star"])
@pytest.mark.parametrize("m", [2, 3, 5])
@pytest.mark.parametrize("algorithm", ["nonaccel", "accel"])
def test_bit_match_dense_replay(kind, m, algorithm):
    topo, locals_, lap, L = _setup(kind, m)
    agents = make_agents(topo, locals_)
    schedule = StepSchedule(L)
    dense = DenseState.zeros(m, locals_[0].n)
    grads = exact_grads(locals_)
    for _ in range(20):
        if algorithm == "accel":
            accel_round(agents, [None] * m, schedule, _params(L, exact=True))
            dense = dense_decentralized_step(dense, lap, "accel", grads, schedule=schedule)
        else:
            nonaccel_round(agents, [None] * m, L, 20, exact=True)
            dense = dense_decentralized_step(dense, lap, "nonaccel", grads, L=L, horizon=20)
        assert np.array_equal(np.stack([a.lam_bar for a in agents]), dense.lam)
        assert np.array_equal(np.stack([a.p_hat for a in agents]), dense.p_hat)


def test_two_agents_one_round_by_hand():
    topo, locals_, _, L = _setup("complete", 2)
    agents = make_agents(topo, locals_)
    nonaccel_round(agents, [None, None], L, 10, exact=True)
    g0, g1 = (loc.exact_grad(np.zeros(4)) for loc in locals_)
    assert np.allclose(agents[0].lam_bar, -(g0 - g1) / L)
    assert np.allclose(agents[1].lam_bar, -(g1 - g0) / L)
    assert np.allclose(agents[0].p_hat, locals_[0].exact_grad(agents[0].lam_bar) / 10)


@given(st.sampled_from(["cycle", "star", "erdos_renyi"]), st.integers(2, 7),
       st.integers(0, 100), st.sampled_from(["nonaccel", "accel"]))
@settings(max_examples=25, deadline=None)
def test_invariants_under_sampling(kind, m, seed, algorithm):
    topo, locals_, _, L = _setup(kind, m, seed=seed)
    agents = make_agents(topo, locals_)
    schedule = StepSchedule(L)
    horizon = 15
    for k in range(horizon):
        rngs = [np.random.default_rng([seed, i, k]) for i in range(m)]
        if algorithm == "accel":
            accel_round(agents, rngs, schedule, _params(L, fixed_batch=3))
        else:
            nonaccel_round(agents, rngs, L, horizon)
    # the Laplacian's columns sum to zero: the dual sum is conserved at zero
    dual = np.stack([a.zeta_bar if algorithm == "accel" else a.lam_bar for a in agents])
    assert np.allclose(dual.sum(axis=0), 0.0, atol=1e-9)
    for a in agents:
        assert np.all(a.p_hat >= 0)
        assert a.p_hat.sum() == pytest.approx(1.0, abs=1e-12)


def test_inbox_must_match_neighbors():
    topo, locals_, _, L = _setup("cycle", 4)
    agents = make_agents(topo, locals_)
    msgs = [a.emit_nonaccel(None, exact=True) for a in agents]
    inbox = deliver(msgs, agents)[0]
    inbox[2] = msgs[2]  # agent 2 is not a neighbor of 0 on a 4-cycle
    with pytest.raises(ProtocolError, match="unexpected"):
        agents[0].absorb_nonaccel(inbox, L, 10, exact=True)
    del inbox[2], inbox[1]
    with pytest.raises(ProtocolError, match="missing"):
        agents[0].absorb_nonaccel(inbox, L, 10, exact=True)


def test_stale_message_rejected():
    topo, locals_, _, L = _setup("complete", 2)
    agents = make_agents(topo, locals_)
    agents[0].emit_nonaccel(None, exact=True)
    stale = RoundMessage(1, 5, np.zeros(4))
    with pytest.raises(ProtocolError, match="round"):
        agents[0].absorb_nonaccel({1: stale}, L, 10, exact=True)


def test_non_neighbor_tampering_has_no_effect():
    """Corrupting a non-neighbor's broadcast cannot change an agent's round."""
    topo, locals_, _, L = _setup("cycle", 5)
    clean = make_agents(topo, locals_)
    dirty = make_agents(topo, locals_)
    ma = [x.emit_nonaccel(None, exact=True) for x in clean]
    mb = [x.emit_nonaccel(None, exact=True) for x in dirty]
    mb[2] = RoundMessage(2, 0, np.full(4, 1e9))
    for agents, msgs in ((clean, ma), (dirty, mb)):
        for a, box in zip(agents, deliver(msgs, agents)):
            a.absorb_nonaccel(box, L, 10, exact=True)
    # agent 0 on a 5-cycle hears only from 1 and 4
    assert np.array_equal(clean[0].lam_bar, dirty[0].lam_bar)
    assert not np.array_equal(clean[1].lam_bar, dirty[1].lam_bar)


def test_batch_size_formula():
    s = StepSchedule(40.0)
    for k in range(50):
        a, _, C_next = s.step(k)
        expected = max(1, int(np.ceil(10 * 0.1 * C_next / (a * 0.5) - 1e-9)))
        assert batch_size(k, s, 10, 0.1, 0.5, cap=10**9) == expected
    assert batch_size(3, s, 10, 0.1, 0.5, fixed=7) == 7


def test_batch_cap_warns_once(caplog):
    s = StepSchedule(1.0)
    with caplog.at_level(logging.WARNING):
        sizes = [batch_size(k, s, 10, 1.0, 0.01, cap=5000) for k in range(200)]
    assert max(sizes) == 5000
    assert sizes == sorted(sizes)
    assert sum("clamped" in r.message for r in caplog.records) == 1


def test_run_params_validation():
    with pytest.raises(ValueError):
        RunParams(gamma=0.0, epsilon=1.0, L=1.0)
    with pytest.raises(ValueError):
        RunParams(gamma=0.1, epsilon=1.0, L=1.0, fixed_batch=0)


def test_make_agents_count_mismatch():
    topo, locals_, _, _ = _setup("cycle", 3)
    with pytest.raises(ValueError):
        make_agents(topo, locals_[:2])
