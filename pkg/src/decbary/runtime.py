"""Bulk-synchronous simulation of the decentralized barycenter methods.

Every round all agents emit from the previous state, messages are routed
along edges, then all agents absorb. Randomness comes from one stream per
``(agent, round)`` derived from the master seed, so results do not depend on
how agent updates are scheduled across worker threads.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graph
from .agents import RunParams, accel_round, make_agents, nonaccel_round
from .apdsgd import StepSchedule
from .config import ConfigError, RunConfig, dumps, validate
from .entropic_dual import LocalDual, log_partition
from .measures import (CostFunction, Discrete, Gaussian, SupportGrid, VonMises,
                       image_to_measure, read_image, write_pgm)

logger = logging.getLogger(__name__)

TRACE_HEADER = ("round", "dual_value", "consensus", "batch", "wall_ms")
SAMPLING, METRICS = 0, 1
# above this many atom-support cost entries, discrete measures are sampled
EXACT_SIZE_GUARD = 20_000_000


def rng_stream(master_seed: int, agent_id: int, round: int, purpose: int = SAMPLING
               ) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by ``(purpose, seed, agent, round)``."""
    seq = np.random.SeedSequence([purpose, master_seed, agent_id, round])
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class Scenario:
    topology: graph.Topology
    grid: SupportGrid
    cost: CostFunction
    locals: list[LocalDual]
    shape: tuple[int, int] | None
    laplacian: np.ndarray
    lambda_max: float
    L: float
    rounds: int


def _build_topology(cfg: RunConfig) -> graph.Topology:
    g = cfg.graph
    if g.kind == "edgelist":
        return graph.read_edgelist(g.path)
    if g.m == 1:
        return graph.Topology(1, frozenset())
    return graph.build(g.kind, g.m, p=g.p, seed=g.seed)


def _build_grid(cfg: RunConfig) -> SupportGrid:
    gr = cfg.grid
    if gr.space == "line":
        return SupportGrid.line(gr.lo, gr.hi, gr.n)
    if gr.space == "circle":
        return SupportGrid.circle(gr.n)
    return SupportGrid.grid2d(gr.height, gr.width)


def _build_measure(spec, grid: SupportGrid, shape, where: str):
    if spec.kind == "gaussian":
        return Gaussian(spec.mean, spec.std)
    if spec.kind == "vonmises":
        return VonMises(spec.loc, spec.kappa)
    if spec.kind == "discrete":
        return Discrete(np.array(spec.atoms), np.array(spec.weights), grid.space)
    try:
        img = read_image(spec.path)
    except OSError as exc:
        raise ConfigError(f"{where}.path", f"cannot read image: {exc}") from None
    if img.shape != shape:
        raise ConfigError(f"{where}.path", f"image {img.shape} does not match grid {shape}")
    return image_to_measure(img, grid)


def build_scenario(cfg: RunConfig) -> Scenario:
    validate(cfg)
    topo = _build_topology(cfg)
    if topo.m != len(cfg.measures):
        raise ConfigError("measures", f"{len(cfg.measures)} measures for {topo.m} agents")
    grid = _build_grid(cfg)
    shape = (cfg.grid.height, cfg.grid.width) if grid.space == "grid2d" else None
    cost = CostFunction(cfg.cost.kind, cfg.cost.scale)
    gamma = cfg.solver.gamma
    locals_ = [LocalDual(_build_measure(ms, grid, shape, f"measure.{i}"), grid, cost, gamma)
               for i, ms in enumerate(cfg.measures)]
    if cfg.solver.exact:
        for i, loc in enumerate(locals_):
            if len(loc.measure.weights) * grid.n > EXACT_SIZE_GUARD:
                raise ConfigError("solver.exact", f"agent {i} exceeds the exact-mode size guard")
    lap = graph.laplacian(topo)
    lmax = graph.lambda_max(lap) if topo.m > 1 else 0.0
    # a single agent never moves its duals; any positive L is valid
    L = (lmax if lmax > 0 else 1.0) / gamma
    rounds = cfg.solver.rounds
    if rounds is None:
        if lmax <= 0:
            raise ConfigError("solver.rounds", "cannot derive rounds for a single agent")
        rounds = graph.rounds_for_accuracy(lmax, cfg.solver.R, cfg.solver.epsilon, gamma)
    return Scenario(topo, grid, cost, locals_, shape, lap, lmax, L, rounds)


class Metrics:
    """Dual value and distance to consensus as pure functions of the state.

    Continuous (or oversized discrete) measures are evaluated on a fixed
    sample drawn once from a dedicated metrics stream.
    """

    def __init__(self, scenario: Scenario, seed: int, eval_batch: int):
        self.topology = scenario.topology
        self.gamma = scenario.locals[0].gamma if scenario.locals else 1.0
        self._costs, self._weights = [], []
        for i, loc in enumerate(scenario.locals):
            if loc.is_discrete and len(loc.measure.weights) * loc.n <= EXACT_SIZE_GUARD:
                self._costs.append(loc.atom_costs)
                self._weights.append(loc.measure.weights)
            else:
                rng = rng_stream(seed, i, 0, METRICS)
                self._costs.append(loc.sample_costs(rng, eval_batch))
                self._weights.append(np.full(eval_batch, 1.0 / eval_batch))

    def dual_value(self, lam_bars) -> float:
        return float(sum(w @ log_partition(lam, c, self.gamma)
                         for lam, c, w in zip(lam_bars, self._costs, self._weights)))

    def consensus(self, p_hat) -> float:
        return graph.consensus_norm(self.topology, p_hat)


@dataclass
class TraceRow:
    round: int
    dual_value: float
    consensus: float
    batch: int
    wall_ms: int


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)
    p_hat: np.ndarray | None = None
    lam_bar: np.ndarray | None = None
    lambda_max: float = 0.0
    L: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in self.rows:
                w.writerow([r.round, repr(r.dual_value), repr(r.consensus), r.batch, r.wall_ms])

    def write_barycenter(self, path) -> None:
        """One row of weights per agent, then the across-agent mean."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in self.p_hat:
                w.writerow([repr(float(x)) for x in row])
            w.writerow([repr(float(x)) for x in self.p_hat.mean(axis=0)])


def read_trace(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [TraceRow(int(r[0]), float(r[1]), float(r[2]), int(r[3]), int(r[4]))
                for r in reader]


def run(cfg: RunConfig, workers: int | None = None, scenario: Scenario | None = None,
        progress=None) -> Trace:
    """Execute the configured number of rounds and return the metric trace.

    Rows are recorded at round 0, every ``record_every`` rounds, and at the
    final round. ``workers`` overrides ``cfg.workers``.
    """
    sc = scenario or build_scenario(cfg)
    s = cfg.solver
    workers = cfg.workers if workers is None else workers
    agents = make_agents(sc.topology, sc.locals)
    metrics = Metrics(sc, cfg.seed, s.eval_batch)
    schedule = StepSchedule(sc.L)
    params = RunParams(gamma=s.gamma, epsilon=s.epsilon, L=sc.L, batch_cap=s.batch_cap,
                       fixed_batch=s.fixed_batch, exact=s.exact, R=s.R)
    stride = cfg.output.record_every
    t0 = time.perf_counter()

    def record(k: int, batch: int) -> TraceRow:
        wall = int((time.perf_counter() - t0) * 1000) if cfg.output.wall_clock else 0
        return TraceRow(k, metrics.dual_value([a.lam_bar for a in agents]),
                        metrics.consensus(np.stack([a.p_hat for a in agents])), batch, wall)

    trace = Trace(lambda_max=sc.lambda_max, L=sc.L)
    trace.rows.append(record(0, 0))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k in range(sc.rounds):
            rngs = [None if s.exact else rng_stream(cfg.seed, a.id, k) for a in agents]
            if s.algorithm == "accel":
                _, batch = accel_round(agents, rngs, schedule, params, pool=pool)
                batch = 0 if s.exact else batch
            else:
                nonaccel_round(agents, rngs, sc.L, sc.rounds, exact=s.exact, pool=pool)
                batch = 0 if s.exact else 1
            if (k + 1) % stride == 0 or k + 1 == sc.rounds:
                trace.rows.append(record(k + 1, batch))
                if progress is not None:
                    progress(trace.rows[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    trace.p_hat = np.stack([a.p_hat for a in agents])
    trace.lam_bar = np.stack([a.lam_bar for a in agents])
    return trace


def write_outputs(trace: Trace, cfg: RunConfig, scenario: Scenario, out_dir) -> dict[str, Path]:
    """Write the trace, barycenters, topology and config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.csv",
        "barycenter": out / "barycenter.csv",
        "topology": out / "topology.txt",
        "config": out / "config.ini",
    }
    trace.to_csv(paths["trace"])
    trace.write_barycenter(paths["barycenter"])
    graph.write_edgelist(scenario.topology, paths["topology"])
    paths["config"].write_text(dumps(cfg))
    if cfg.output.render_pgm and scenario.grid.space == "grid2d":
        shape = scenario.shape
        for i, row in enumerate(trace.p_hat):
            p = out / f"barycenter_{i}.pgm"
            write_pgm(row.reshape(shape), p)
            paths[f"render_{i}"] = p
        p = out / "barycenter_mean.pgm"
        write_pgm(trace.p_hat.mean(axis=0).reshape(shape), p)
        paths["render_mean"] = p
    return paths
