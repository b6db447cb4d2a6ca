"""Shared helpers: strategy launchers and acceptance reporting."""

import time
from contextlib import contextmanager

import numpy as np

from pifsim.comm import spawn_spmd
from pifsim.strategies import (
    run_domain_decomposition,
    run_parareal,
    run_particle_decomposition,
    run_serial,
)


def launch_strategy(strategy, setup, ranks=1, pcfg=None, call_log=None,
                    watchdog=120.0):
    """Run one strategy under spawn_spmd and return the per-rank results."""

    def program(ctx):
        if strategy == "serial":
            return run_serial(setup, ctx)
        if strategy == "pd":
            return run_particle_decomposition(setup, ctx)
        if strategy == "dd":
            return run_domain_decomposition(setup, ctx)
        if strategy == "st":
            return run_parareal(setup, pcfg, ctx)
        raise ValueError(strategy)

    return spawn_spmd(ranks, program, call_log=call_log, watchdog=watchdog)


def energy_trace(result) -> np.ndarray:
    return np.array([r.field_energy for r in result["records"]])


@contextmanager
def criterion(number, name):
    """Prints one pass/fail line per acceptance criterion."""
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] criterion {number} ({name}): FAIL "
              f"[{time.monotonic() - start:.1f}s]")
        raise
    print(f"[ACCEPTANCE] criterion {number} ({name}): PASS "
          f"[{time.monotonic() - start:.1f}s]")
