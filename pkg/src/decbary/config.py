"""Run configuration: dataclasses, validation and the INI text format.

A config file has one section per component plus one per agent measure::

    [run]          seed, workers
    [graph]        kind, m, p, seed, path
    [grid]         space, n, lo, hi, height, width
    [cost]         kind, scale
    [solver]       algorithm, gamma, epsilon, rounds, fixed_batch, batch_cap,
                   exact, R, eval_batch
    [output]       out_dir, record_every, render_pgm, wall_clock
    [measure.0]    kind, and mean/std | loc/kappa | atoms/weights | path
    [measure.1]    ...

Unset optional keys are omitted. Sequences are whitespace-separated; floats
are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import configparser
import io
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .graph import KINDS as GRAPH_KINDS
from .measures import COST_KINDS, SPACES

MEASURE_KINDS = ("gaussian", "vonmises", "discrete", "image")
ALGORITHMS = ("nonaccel", "accel")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class GraphSpec:
    kind: str = "complete"
    m: int = 2
    p: float | None = None
    seed: int = 0
    path: str | None = None


@dataclass
class GridSpec:
    space: str = "line"
    n: int = 100
    lo: float = -5.0
    hi: float = 5.0
    height: int | None = None
    width: int | None = None


@dataclass
class CostSpec:
    kind: str = "squared_euclidean"
    scale: float = 1.0


@dataclass
class MeasureSpec:
    kind: str = "gaussian"
    mean: float | None = None
    std: float | None = None
    loc: float | None = None
    kappa: float | None = None
    atoms: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = None
    path: str | None = None


@dataclass
class SolverSpec:
    algorithm: str = "accel"
    gamma: float = 0.1
    epsilon: float = 1.0
    rounds: int | None = 1000
    fixed_batch: int | None = None
    batch_cap: int = 10_000
    exact: bool = False
    R: float | None = None
    eval_batch: int = 1000


@dataclass
class OutputSpec:
    out_dir: str | None = None
    record_every: int = 1
    render_pgm: bool = False
    wall_clock: bool = True


@dataclass
class RunConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    cost: CostSpec = field(default_factory=CostSpec)
    measures: list[MeasureSpec] = field(default_factory=list)
    solver: SolverSpec = field(default_factory=SolverSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    workers: int = 1

    def validate(self) -> RunConfig:
        validate(self)
        return self


def _positive(name, value, allow_none=False):
    if value is None:
        if allow_none:
            return
        raise ConfigError(name, "is required")
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")


def validate(cfg: RunConfig) -> None:
    """Raise ``ConfigError`` naming the first invalid field."""
    g = cfg.graph
    if g.kind not in GRAPH_KINDS + ("edgelist",):
        raise ConfigError("graph.kind", f"unknown kind {g.kind!r}")
    if g.kind == "edgelist":
        if not g.path:
            raise ConfigError("graph.path", "edge-list topology needs a path")
    elif g.m < 1:
        raise ConfigError("graph.m", f"invalid agent count {g.m}")
    if g.p is not None and not 0 < g.p <= 1:
        raise ConfigError("graph.p", f"must be in (0, 1], got {g.p}")

    gr = cfg.grid
    if gr.space not in SPACES:
        raise ConfigError("grid.space", f"unknown space {gr.space!r}")
    if gr.space == "grid2d":
        _positive("grid.height", gr.height)
        _positive("grid.width", gr.width)
    else:
        _positive("grid.n", gr.n)
        if gr.space == "line" and not gr.hi > gr.lo:
            raise ConfigError("grid.hi", "must exceed grid.lo")

    if cfg.cost.kind not in COST_KINDS:
        raise ConfigError("cost.kind", f"unknown cost {cfg.cost.kind!r}")
    if cfg.cost.kind == "squared_angular" and gr.space != "circle":
        raise ConfigError("cost.kind", "squared_angular needs a circle grid")
    _positive("cost.scale", cfg.cost.scale)

    if not cfg.measures:
        raise ConfigError("measures", "at least one measure is required")
    if g.kind != "edgelist" and len(cfg.measures) != g.m:
        raise ConfigError("measures", f"{len(cfg.measures)} measures for graph.m={g.m}")
    for i, ms in enumerate(cfg.measures):
        _validate_measure(f"measure.{i}", ms, gr.space)

    s = cfg.solver
    if s.algorithm not in ALGORITHMS:
        raise ConfigError("solver.algorithm", f"unknown algorithm {s.algorithm!r}")
    _positive("solver.gamma", s.gamma)
    _positive("solver.epsilon", s.epsilon)
    _positive("solver.R", s.R, allow_none=True)
    if s.rounds is None:
        if s.R is None:
            raise ConfigError("solver.rounds", "required when solver.R is not given")
    elif s.rounds < 0:
        raise ConfigError("solver.rounds", f"must be nonnegative, got {s.rounds}")
    _positive("solver.fixed_batch", s.fixed_batch, allow_none=True)
    _positive("solver.batch_cap", s.batch_cap)
    _positive("solver.eval_batch", s.eval_batch)
    if s.exact and any(ms.kind in ("gaussian", "vonmises") for ms in cfg.measures):
        raise ConfigError("solver.exact", "exact gradients need discrete or image measures")

    _positive("output.record_every", cfg.output.record_every)
    _positive("workers", cfg.workers)
    if cfg.seed < 0:
        raise ConfigError("seed", "must be nonnegative")


def _validate_measure(name: str, ms: MeasureSpec, space: str) -> None:
    if ms.kind not in MEASURE_KINDS:
        raise ConfigError(f"{name}.kind", f"unknown measure {ms.kind!r}")
    if ms.kind == "gaussian":
        if space != "line":
            raise ConfigError(f"{name}.kind", "gaussian measures live on the line")
        if ms.mean is None:
            raise ConfigError(f"{name}.mean", "is required")
        _positive(f"{name}.std", ms.std)
    elif ms.kind == "vonmises":
        if space != "circle":
            raise ConfigError(f"{name}.kind", "von Mises measures live on the circle")
        if ms.loc is None:
            raise ConfigError(f"{name}.loc", "is required")
        _positive(f"{name}.kappa", ms.kappa)
    elif ms.kind == "discrete":
        if not ms.atoms or not ms.weights:
            raise ConfigError(f"{name}.atoms", "discrete measure needs atoms and weights")
        dim = 2 if space == "grid2d" else 1
        if len(ms.atoms) != dim * len(ms.weights):
            raise ConfigError(f"{name}.atoms", f"expected {dim} coordinate(s) per weight")
        if any(w < 0 for w in ms.weights) or not sum(ms.weights) > 0:
            raise ConfigError(f"{name}.weights", "must be nonnegative with positive total")
    elif ms.kind == "image":
        if space != "grid2d":
            raise ConfigError(f"{name}.kind", "image measures need a grid2d support")
        if not ms.path:
            raise ConfigError(f"{name}.path", "is required")


# -- INI round-trip -----------------------------------------------------------


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(_format(float(v)) for v in value)
    return str(value)


def _parse(text: str, hint, name: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        return _parse(text, inner[0], name)
    try:
        if hint is bool:
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if origin is tuple:
            return tuple(float(v) for v in text.split())
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r}") from None
    return text.strip()


def _section_to_dict(obj) -> dict[str, str]:
    return {f.name: _format(getattr(obj, f.name)) for f in fields(obj)
            if getattr(obj, f.name) is not None}


def _dict_to_section(cls, data, prefix: str):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, text in data.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        kwargs[key] = _parse(text, hints[key], f"{prefix}.{key}")
    return cls(**kwargs)


_SECTIONS = (("graph", GraphSpec), ("grid", GridSpec), ("cost", CostSpec),
             ("solver", SolverSpec), ("output", OutputSpec))


def dumps(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {"seed": str(cfg.seed), "workers": str(cfg.workers)}
    for name, _ in _SECTIONS:
        parser[name] = _section_to_dict(getattr(cfg, name))
    for i, ms in enumerate(cfg.measures):
        parser[f"measure.{i}"] = _section_to_dict(ms)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    kwargs = {}
    for name, cls in _SECTIONS:
        kwargs[name] = _dict_to_section(cls, dict(parser[name]) if parser.has_section(name) else {},
                                        name)
    measures = []
    measure_sections = [s for s in parser.sections() if s.startswith("measure.")]
    for i in range(len(measure_sections)):
        sec = f"measure.{i}"
        if not parser.has_section(sec):
            raise ConfigError(sec, "measure sections must be numbered 0..m-1")
        measures.append(_dict_to_section(MeasureSpec, dict(parser[sec]), sec))
    for sec in parser.sections():
        if sec != "run" and sec not in dict(_SECTIONS) and not sec.startswith("measure."):
            raise ConfigError(sec, "unknown section")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    for key in run:
        if key not in ("seed", "workers"):
            raise ConfigError(f"run.{key}", "unknown key")
    return RunConfig(measures=measures,
                     seed=_parse(run.get("seed", "0"), int, "run.seed"),
                     workers=_parse(run.get("workers", "1"), int, "run.workers"),
                     **kwargs)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def dump(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
