"""Command-line experiment runner.

    decbary run --preset gauss1d --m 10 --topology erdos_renyi --rounds 1000 --seed 7 --out out/
    decbary run --config my.ini --out out/
    decbary validate my.ini
    decbary preset vonmises --m 10 --n 40 --write vm.ini
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import (ConfigError, CostSpec, GraphSpec, GridSpec, MeasureSpec, OutputSpec,
                     RunConfig, SolverSpec, dump, load, validate)
from .graph import KINDS, GraphError
from .measures import read_image
from .runtime import EXACT_SIZE_GUARD, build_scenario, run, write_outputs

log = logging.getLogger("decbary")

PRESETS = ("gauss1d", "vonmises", "image_dir")
IMAGE_SUFFIXES = (".pgm", ".txt", ".dat")

# ranges of the per-agent Gaussian parameters
GAUSS_MEAN_RANGE = (-4.0, 4.0)
GAUSS_STD_RANGE = (0.1, 0.6)
# von Mises ranges are not fixed by the experiments; chosen for visibly distinct modes
VM_KAPPA_RANGE = (2.0, 10.0)


def preset(name: str, m: int = 10, seed: int = 0, topology: str | None = None,
           n: int | None = None, image_dir: str | None = None) -> RunConfig:
    """Fully populated config for one of the experiment scenarios."""
    rng = np.random.default_rng(seed)
    solver = SolverSpec(algorithm="accel", gamma=0.1, epsilon=1.0, rounds=1000, fixed_batch=100)
    if name == "gauss1d":
        grid = GridSpec(space="line", n=n or 100, lo=-5.0, hi=5.0)
        cost = CostSpec("squared_euclidean")
        measures = [MeasureSpec("gaussian", mean=float(rng.uniform(*GAUSS_MEAN_RANGE)),
                                std=float(rng.uniform(*GAUSS_STD_RANGE))) for _ in range(m)]
        kind = topology or "erdos_renyi"
    elif name == "vonmises":
        grid = GridSpec(space="circle", n=n or 100)
        cost = CostSpec("squared_angular")
        measures = [MeasureSpec("vonmises", loc=float(rng.uniform(0.0, 2 * math.pi)),
                                kappa=float(rng.uniform(*VM_KAPPA_RANGE))) for _ in range(m)]
        kind = topology or "erdos_renyi"
    elif name == "image_dir":
        if image_dir is None:
            raise ConfigError("image_dir", "the image_dir preset needs --image-dir")
        files = sorted(p for p in Path(image_dir).iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES) if Path(image_dir).is_dir() else []
        if not files:
            raise ConfigError("image_dir", f"no images found in {image_dir}")
        shapes = {p.name: read_image(p).shape for p in files}
        if len(set(shapes.values())) != 1:
            raise ConfigError("image_dir", f"image sizes differ: {shapes}")
        h, w = next(iter(shapes.values()))
        m = len(files)
        grid = GridSpec(space="grid2d", height=h, width=w)
        # squared pixel distances normalized to a maximum of 1
        cost = CostSpec("squared_euclidean", scale=float(max(1, (h - 1) ** 2 + (w - 1) ** 2)))
        measures = [MeasureSpec("image", path=str(p)) for p in files]
        kind = topology or "cycle"
        size = h * w
        if size * size > EXACT_SIZE_GUARD:
            log.warning(
                "n=%d support points: exact gradients need %d cost entries per agent, above the "
                "size guard %d; exact mode is disabled and agents sample pixels in batches of %d",
                size, size * size, EXACT_SIZE_GUARD, solver.fixed_batch,
            )
    else:
        raise ConfigError("preset", f"unknown preset {name!r}; expected one of {PRESETS}")
    if m < 2 and kind != "complete" and name != "image_dir":
        raise ConfigError("graph.m", f"preset needs at least 2 agents, got {m}")
    return RunConfig(graph=GraphSpec(kind=kind, m=m, seed=seed), grid=grid, cost=cost,
                     measures=measures, solver=solver, output=OutputSpec(), seed=seed)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="number of agents (presets)")
    p.add_argument("--n", type=int, help="support size (gauss1d, vonmises presets)")
    p.add_argument("--image-dir", help="directory of equal-sized grayscale images")
    p.add_argument("--topology", choices=KINDS)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--batch", type=int, help="fixed batch size for every round")
    p.add_argument("--adaptive-batch", action="store_true",
                   help="use the growing batch schedule instead of a fixed batch")
    p.add_argument("--algorithm", choices=("nonaccel", "accel"))
    p.add_argument("--exact", action="store_true", help="exact gradients (discrete measures)")
    p.add_argument("--workers", type=int)
    p.add_argument("--record-every", type=int)


def _config_from_args(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("args", "give either --config or --preset, not both")
    if args.config:
        cfg = load(args.config)
        if args.m is not None and args.m != len(cfg.measures):
            raise ConfigError("graph.m", f"--m {args.m} disagrees with {len(cfg.measures)} measures")
        if args.topology:
            cfg.graph.kind = args.topology
        if args.seed is not None:
            cfg.seed = args.seed
    elif args.preset:
        cfg = preset(args.preset, m=args.m or 10, seed=args.seed or 0, topology=args.topology,
                     n=args.n, image_dir=args.image_dir)
    else:
        raise ConfigError("args", "one of --config or --preset is required")
    s = cfg.solver
    for attr, value in (("rounds", args.rounds), ("gamma", args.gamma),
                        ("epsilon", args.epsilon), ("algorithm", args.algorithm)):
        if value is not None:
            setattr(s, attr, value)
    if args.batch is not None:
        s.fixed_batch = args.batch
    if args.adaptive_batch:
        s.fixed_batch = None
    if args.exact:
        s.exact = True
    if args.workers is not None:
        cfg.workers = args.workers
    if args.record_every is not None:
        cfg.output.record_every = args.record_every
    if getattr(args, "out", None):
        cfg.output.out_dir = args.out
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decbary", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write its outputs")
    p_run.add_argument("--preset", choices=PRESETS)
    p_run.add_argument("--config", help="INI config file")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--render", action="store_true", help="PGM renders for image scenarios")
    p_run.add_argument("--no-wall-clock", action="store_true",
                       help="write 0 in the wall_ms column (byte-reproducible traces)")
    _add_overrides(p_run)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")

    p_pre = sub.add_parser("preset", help="write a preset as a config file")
    p_pre.add_argument("name", choices=PRESETS)
    p_pre.add_argument("--write", required=True, help="destination INI path")
    _add_overrides(p_pre)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # deviations (batch cap, size guard) are always shown on stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return _dispatch(args)
    finally:
        log.removeHandler(handler)


def _dispatch(args) -> int:
    try:
        if args.command == "validate":
            cfg = load(args.config)
            build_scenario(cfg)
            print(f"{args.config}: ok ({len(cfg.measures)} agents)")
            return 0
        if args.command == "preset":
            args.config, args.preset = None, args.name
            cfg = _config_from_args(args)
            validate(cfg)
            dump(cfg, args.write)
            print(f"wrote {args.write}")
            return 0
        cfg = _config_from_args(args)
        if args.render:
            cfg.output.render_pgm = True
        if args.no_wall_clock:
            cfg.output.wall_clock = False
        scenario = build_scenario(cfg)
        if scenario.rounds != cfg.solver.rounds:
            log.warning("rounds derived from R: N=%d", scenario.rounds)
        trace = run(cfg, scenario=scenario)
    except (ConfigError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    last = trace.rows[-1]
    print(f"rounds={last.round} lambda_max={scenario.lambda_max:.6g} "
          f"dual_value={last.dual_value:.6g} consensus={last.consensus:.6g}")
    if cfg.output.out_dir:
        try:
            paths = write_outputs(trace, cfg, scenario, cfg.output.out_dir)
        except OSError as exc:
            print(f"error: cannot write outputs: {exc}", file=sys.stderr)
            return 1
        for key, path in paths.items():
            print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
