"""Command-line entry point: configure and launch a benchmark run under any
strategy and rank layout, and write the diagnostics/timers/meta outputs."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__, diag
from .bench import landau_spec, penning_spec
from .comm import CallLog, RankFailedError, spawn_spmd
from .strategies import (
    CoarseSpec,
    PararealConfig,
    PararealConvergenceError,
    RunSetup,
    run_domain_decomposition,
    run_parareal,
    run_particle_decomposition,
    run_serial,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_NO_CONVERGENCE = 4


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """User-facing run configuration; None fields resolve to the paper's
    defaults (resolution is recorded verbatim in meta.json)."""

    benchmark: str                 # landau | penning
    strategy: str = "serial"       # serial | dd | pd | st
    modes: int = 16
    ppm: int = 10
    dt: float = 0.003125
    steps: int = 768
    eps_fine: float = 1e-7
    ranks_space: int = 1
    ranks_time: int = 1
    coarse: str = "pif"            # pif | pic
    eps_coarse: float = 1e-3
    dt_coarse: float | None = None  # pif: 0.05; pic: the fine dt
    coarse_modes: int | None = None  # pic grid size, defaults to modes
    blocks: int | None = None      # pif: 1; pic: 16
    tol_parareal: float = 1e-8
    max_iters: int = 50
    shape: str = "delta"
    seed: int = 0
    diag_every: int = 1
    out_dir: str = "out"
    log_comm: bool = False
    overwrite: bool = False

    def resolved(self) -> "RunConfig":
        dt_coarse = self.dt_coarse
        if dt_coarse is None:
            dt_coarse = 0.05 if self.coarse == "pif" else self.dt
        blocks = self.blocks
        if blocks is None:
            blocks = 1 if self.coarse == "pif" else 16
        coarse_modes = self.coarse_modes if self.coarse_modes is not None else self.modes
        return replace(self, dt_coarse=dt_coarse, blocks=blocks,
                       coarse_modes=coarse_modes)

    def validate(self) -> None:
        if self.benchmark not in ("landau", "penning"):
            raise UsageError(f"unknown benchmark {self.benchmark!r}")
        if self.strategy not in ("serial", "dd", "pd", "st"):
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "st" and self.ranks_time < 2:
            raise UsageError("strategy st requires --ranks-time >= 2")
        if self.strategy in ("serial", "dd", "pd") and self.ranks_time != 1:
            raise UsageError(f"strategy {self.strategy} requires ranks_time = 1")
        if self.strategy == "serial" and self.ranks_space != 1:
            raise UsageError("strategy serial runs on exactly one rank")
        if self.coarse not in ("pif", "pic"):
            raise UsageError(f"unknown coarse propagator {self.coarse!r}")
        if self.strategy == "st":
            denom = (self.blocks or 1) * self.ranks_time
            if self.steps % denom != 0:
                raise UsageError(
                    f"steps={self.steps} not divisible by blocks*ranks_time={denom}"
                )
        if self.steps < 1 or self.modes < 4 or self.modes % 2 or self.ppm < 1:
            raise UsageError("need steps >= 1, even modes >= 4, ppm >= 1")
        if self.dt <= 0:
            raise UsageError("dt must be positive")


PRESETS = {
    "desk-landau": dict(benchmark="landau", modes=16, ppm=10, dt=0.05,
                        steps=100, dt_coarse=0.05),
    "desk-penning": dict(benchmark="penning", modes=16, ppm=10, dt=0.05,
                         steps=100, dt_coarse=0.05),
}

_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


_FLOAT_KEYS = ("dt", "eps_fine", "eps_coarse", "dt_coarse", "tol_parareal")
_BOOL_KEYS = ("log_comm", "overwrite")
_INT_KEYS = ("modes", "ppm", "steps", "ranks_space", "ranks_time",
             "coarse_modes", "blocks", "max_iters", "seed", "diag_every")


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown configuration key {key!r}")
    if not isinstance(value, str):
        return value
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(value)
    return value


def load_config_file(path: str) -> dict:
    """JSON object or simple key=value lines; unknown keys are rejected."""
    with open(path) as f:
        text = f.read()
    raw: dict = {}
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
    else:
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    return {k: _coerce(k, v) for k, v in raw.items()}


def build_config(args: argparse.Namespace) -> RunConfig:
    layers: dict = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}")
        layers.update(PRESETS[args.preset])
    if args.config:
        layers.update(load_config_file(args.config))
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            layers[key] = flag
    if "benchmark" not in layers:
        raise UsageError("a benchmark is required (--benchmark or --preset)")
    cfg = RunConfig(**layers)
    cfg.validate()
    return cfg


def _benchmark_spec(cfg: RunConfig):
    if cfg.benchmark == "landau":
        return landau_spec(N=cfg.modes, ppm=cfg.ppm, dt=cfg.dt,
                           steps=cfg.steps, seed=cfg.seed)
    return penning_spec(N=cfg.modes, ppm=cfg.ppm, dt=cfg.dt,
                        steps=cfg.steps, seed=cfg.seed)


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit code."""
    cfg = cfg.resolved()
    try:
        cfg.validate()
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE

    setup = RunSetup(spec=_benchmark_spec(cfg), eps=cfg.eps_fine,
                     shape=cfg.shape, diag_every=cfg.diag_every)
    pcfg = PararealConfig(
        ranks_time=cfg.ranks_time, tol=cfg.tol_parareal, max_iters=cfg.max_iters,
        blocks=cfg.blocks,
        coarse=CoarseSpec(kind=cfg.coarse, eps=cfg.eps_coarse,
                          n_c=cfg.coarse_modes, dt=cfg.dt_coarse),
    )
    num_ranks = cfg.ranks_space * cfg.ranks_time
    call_log = CallLog() if cfg.log_comm else None

    def program(ctx):
        tm = diag.Timers()
        if cfg.strategy == "serial":
            return run_serial(setup, ctx, tm)
        if cfg.strategy == "pd":
            return run_particle_decomposition(setup, ctx, tm)
        if cfg.strategy == "dd":
            return run_domain_decomposition(setup, ctx, tm)
        return run_parareal(setup, pcfg, ctx, tm)

    try:
        results = spawn_spmd(num_ranks, program, call_log=call_log)
    except RankFailedError as err:
        if isinstance(err.__cause__, PararealConvergenceError):
            print(f"parareal did not converge: {err.__cause__}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    root = results[0]
    records = root["records"]
    rows = diag.timer_rows([r["timers"] for r in results])
    loop_seconds = float(np.mean([r["loop_seconds"] for r in results]))
    time_per_step = loop_seconds / max(1, cfg.steps)
    meta = {
        "config": asdict(cfg),
        "version": __version__,
        "seed": cfg.seed,
        "rank_layout": {"space": cfg.ranks_space, "time": cfg.ranks_time,
                        "total": num_ranks},
        "time_per_step": time_per_step,
        "category_seconds_avg": diag.category_averages(rows),
        "initial_record": asdict(root["initial"]) if root["initial"] else None,
        "parareal_iterations": root.get("iterations"),
    }
    try:
        diag.write_outputs(records, rows, meta, cfg.out_dir,
                           overwrite=cfg.overwrite)
        if call_log is not None:
            call_log.write_csv(os.path.join(cfg.out_dir, "comm_log.csv"))
    except OSError as err:
        print(f"output failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    final_w = records[-1].field_energy if records else float("nan")
    iters = root.get("iterations")
    extra = f" iterations={iters}" if iters else ""
    print(f"final_field_energy={final_w:.9e} time_per_step={time_per_step:.4e}s"
          f"{extra} out={cfg.out_dir}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pifsim",
        description="Particle-in-Fourier Vlasov-Poisson benchmark runner",
    )
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="desk-scale preset configuration")
    p.add_argument("--config", default=None,
                   help="config file (JSON or key=value lines); flags override")
    p.add_argument("--benchmark", choices=("landau", "penning"), default=None)
    p.add_argument("--strategy", choices=("serial", "dd", "pd", "st"), default=None)
    p.add_argument("--modes", type=int, default=None, help="Fourier modes per dimension")
    p.add_argument("--ppm", type=int, default=None, help="particles per mode")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eps-fine", dest="eps_fine", type=float, default=None)
    p.add_argument("--ranks-space", dest="ranks_space", type=int, default=None)
    p.add_argument("--ranks-time", dest="ranks_time", type=int, default=None)
    p.add_argument("--coarse", choices=("pif", "pic"), default=None)
    p.add_argument("--eps-coarse", dest="eps_coarse", type=float, default=None)
    p.add_argument("--dt-coarse", dest="dt_coarse", type=float, default=None)
    p.add_argument("--coarse-modes", dest="coarse_modes", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--tol-parareal", dest="tol_parareal", type=float, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--shape", choices=("delta", "cic"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--diag-every", dest="diag_every", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--log-comm", dest="log_comm", action="store_const", const=True,
                   default=None, help="write comm_log.csv (one line per primitive)")
    p.add_argument("--overwrite", action="store_const", const=True, default=None)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
