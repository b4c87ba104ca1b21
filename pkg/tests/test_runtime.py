import numpy as np
import pytest

from decbary import graph
from decbary.config import (ConfigError, CostSpec, GraphSpec, GridSpec, MeasureSpec, OutputSpec,
                            RunConfig, SolverSpec, loads)
from decbary.entropic_dual import log_partition
from decbary.runtime import build_scenario, read_trace, rng_stream, run, write_outputs


def discrete_config(m=3, kind="complete", rounds=20, algorithm="accel", exact=True, seed=0):
    rng = np.random.default_rng(seed)
    measures = [MeasureSpec("discrete", atoms=tuple(rng.uniform(-1, 1, 3)),
                            weights=tuple(rng.uniform(0.2, 1, 3))) for _ in range(m)]
    return RunConfig(graph=GraphSpec(kind=kind, m=m), grid=GridSpec("line", 5, -1.0, 1.0),
                     measures=measures,
                     solver=SolverSpec(algorithm=algorithm, rounds=rounds, exact=exact,
                                       fixed_batch=None if exact else 4),
                     output=OutputSpec(wall_clock=False), seed=seed)


def gaussian_config(m=4, rounds=30, algorithm="accel", seed=1):
    measures = [MeasureSpec("gaussian", mean=float(i) - 1.5, std=0.3) for i in range(m)]
    return RunConfig(graph=GraphSpec(kind="cycle", m=m), grid=GridSpec("line", 20, -3.0, 3.0),
                     measures=measures,
                     solver=SolverSpec(algorithm=algorithm, rounds=rounds, fixed_batch=5,
                                       eval_batch=200),
                     output=OutputSpec(wall_clock=False), seed=seed)


def test_rng_streams_are_distinct_and_reproducible():
    a = rng_stream(7, 0, 0).random(20_000)
    assert np.array_equal(a, rng_stream(7, 0, 0).random(20_000))
    for other in (rng_stream(7, 1, 0), rng_stream(7, 0, 1), rng_stream(8, 0, 0),
                  rng_stream(7, 0, 0, purpose=1)):
        b = other.random(20_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_zero_rounds_gives_initial_row():
    cfg = discrete_config(rounds=0)
    trace = run(cfg)
    assert [r.round for r in trace.rows] == [0]
    assert trace.rows[0].consensus == 0.0
    assert np.all(trace.p_hat == 0)


def test_single_agent_is_stationary():
    cfg = discrete_config(m=1, rounds=10)
    trace = run(cfg)
    assert np.all(trace.lam_bar == 0)
    assert trace.column("consensus").max() == 0.0
    assert trace.p_hat[0].sum() == pytest.approx(1.0)


@pytest.mark.parametrize("algorithm", ["accel", "nonaccel"])
def test_trace_metrics_recompute_from_state(algorithm):
    cfg = discrete_config(rounds=15, algorithm=algorithm)
    sc = build_scenario(cfg)
    trace = run(cfg, scenario=sc)
    last = trace.rows[-1]
    expected = sum(float(loc.measure.weights @ log_partition(lam, loc.atom_costs, loc.gamma))
                   for loc, lam in zip(sc.locals, trace.lam_bar))
    assert last.dual_value == pytest.approx(expected, rel=1e-12)
    assert last.consensus == pytest.approx(graph.consensus_norm(sc.topology, trace.p_hat))
    assert set(trace.column("batch")[1:]) == {0}


def test_record_stride_keeps_final_round():
    cfg = discrete_config(rounds=10)
    cfg.output.record_every = 4
    assert [r.round for r in run(cfg).rows] == [0, 4, 8, 10]


@pytest.mark.parametrize("algorithm, batch", [("accel", 5), ("nonaccel", 1)])
def test_sampling_runs_are_deterministic(algorithm, batch):
    cfg = gaussian_config(algorithm=algorithm)
    a, b, c = run(cfg), run(cfg), run(cfg, workers=4)
    assert a.rows == b.rows == c.rows
    assert np.array_equal(a.p_hat, c.p_hat)
    assert set(a.column("batch")[1:]) == {batch}
    cfg.seed = 2
    assert run(cfg).rows != a.rows


def test_adaptive_batch_grows():
    cfg = gaussian_config(rounds=20)
    cfg.solver.fixed_batch = None
    cfg.solver.epsilon = 0.5
    batches = run(cfg).column("batch")[1:]
    assert np.all(np.diff(batches) >= 0) and batches[-1] > batches[0]


def test_rounds_from_radius():
    cfg = discrete_config(kind="cycle", m=4)
    cfg.solver.rounds, cfg.solver.R, cfg.solver.epsilon, cfg.solver.gamma = None, 1.0, 0.01, 0.1
    sc = build_scenario(cfg)
    assert sc.lambda_max == pytest.approx(4.0)
    assert sc.rounds == 358


def test_exact_mode_rejects_continuous():
    cfg = gaussian_config()
    cfg.solver.exact = True
    with pytest.raises(ConfigError, match="solver.exact"):
        build_scenario(cfg)


def test_write_outputs(tmp_path):
    cfg = discrete_config(rounds=5)
    sc = build_scenario(cfg)
    trace = run(cfg, scenario=sc)
    paths = write_outputs(trace, cfg, sc, tmp_path)
    assert read_trace(paths["trace"]) == trace.rows
    bary = np.loadtxt(paths["barycenter"], delimiter=",")
    assert bary.shape == (4, 5)
    assert np.allclose(bary[-1], trace.p_hat.mean(axis=0))
    assert graph.read_edgelist(paths["topology"]) == sc.topology
    assert loads(paths["config"].read_text()) == cfg


def test_image_scenario_renders(tmp_path):
    imgs = []
    for i in range(3):
        img = np.zeros((4, 5))
        img[i, i + 1] = 1.0
        img[3, 0] = 0.5
        np.savetxt(tmp_path / f"im{i}.txt", img)
        imgs.append(MeasureSpec("image", path=str(tmp_path / f"im{i}.txt")))
    cfg = RunConfig(graph=GraphSpec(kind="cycle", m=3), grid=GridSpec("grid2d", height=4, width=5),
                    cost=CostSpec(scale=25.0), measures=imgs,
                    solver=SolverSpec(rounds=10, exact=True),
                    output=OutputSpec(render_pgm=True, wall_clock=False))
    sc = build_scenario(cfg)
    paths = write_outputs(run(cfg, scenario=sc), cfg, sc, tmp_path / "out")
    assert paths["render_mean"].exists() and "render_2" in paths


def test_image_shape_mismatch(tmp_path):
    np.savetxt(tmp_path / "a.txt", np.ones((3, 3)))
    cfg = RunConfig(graph=GraphSpec(kind="complete", m=1),
                    grid=GridSpec("grid2d", height=4, width=4),
                    measures=[MeasureSpec("image", path=str(tmp_path / "a.txt"))])
    with pytest.raises(ConfigError, match="does not match"):
        build_scenario(cfg)
