"""The three distributed execution strategies.

* particle decomposition: particles split by id, modes replicated, one
  Allreduce of the deposited density per step, everything else local.
* domain decomposition: particles and modes split by z-slab; particle
  migration and field halos move by P2P, the distributed FFT by Alltoall.
* space-time decomposition: parareal across time slabs (coarse serial
  sweep, fine solves in parallel, P2P correction chain in time) on top of
  particle decomposition within each slab.

Every strategy records the same per-step diagnostics so runs can be
compared step by step, and reduces them only with the communication
primitives its pattern allows.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import nufft, pif
from .bench import BenchmarkSpec, id_slice, sample_benchmark
from .comm import Comm, RankContext, SlabTopology
from .diag import NULL_TIMERS, StepRecord, Timers
from .particles import ParticleEnsemble, minimum_image, wrap_positions
from .spectral import FourierField, mode_ints, poisson_efield, field_energy


class MigrationError(RuntimeError):
    pass


class PararealConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class RunSetup:
    """Resolved numerical configuration for one run."""

    spec: BenchmarkSpec
    eps: float = 1e-7
    shape: str = "delta"
    diag_every: int = 1


@dataclass(frozen=True)
class CoarseSpec:
    kind: str = "pif"          # pif | pic
    eps: float = 1e-3          # NUFFT tolerance of the coarse PIF
    n_c: int | None = None     # PIC grid per dimension (defaults to spec.N)
    dt: float | None = None    # coarse step (defaults to the fine dt)

    def __post_init__(self):
        if self.kind not in ("pif", "pic"):
            raise ValueError(f"coarse kind must be pif|pic, got {self.kind!r}")


@dataclass(frozen=True)
class PararealConfig:
    ranks_time: int
    tol: float = 1e-8
    max_iters: int = 50
    coarse: CoarseSpec = field(default_factory=CoarseSpec)
    blocks: int = 1
    record_states: bool = False     # keep per-iteration slab boundary states
    exact_iters: int | None = None  # run a fixed iteration count, no stopping


# ---------------------------------------------------------------------------
# Diagnostics recording with strategy-appropriate reductions
# ---------------------------------------------------------------------------

class Recorder:
    """Builds StepRecords from rank-local sums via a pluggable reduction.

    reduce_fn receives a float vector of local sums and must return the
    global sums on the root rank (other ranks may get None).
    """

    def __init__(self, externals, total_charge, diag_every, reduce_fn, is_root,
                 field_energy_is_local):
        self.externals = externals
        self.total_charge = total_charge
        self.diag_every = max(1, diag_every)
        self.reduce_fn = reduce_fn
        self.is_root = is_root
        self.field_energy_is_local = field_energy_is_local
        self.records: list[StepRecord] = []
        self.initial: StepRecord | None = None

    def record(self, step, t, ens, w_field):
        if step != 0 and step % self.diag_every != 0:
            return
        p = pif.momentum(ens)
        vec = np.array([
            pif.kinetic_energy(ens),
            p[0], p[1], p[2],
            pif.external_potential_energy(self.externals, ens),
            w_field if self.field_energy_is_local else 0.0,
        ])
        total = self.reduce_fn(vec)
        if total is None or not self.is_root:
            return
        ke, px, py, pz, u_ext = total[:5]
        w = total[5] if self.field_energy_is_local else w_field
        rec = StepRecord(step=step, t=t, field_energy=w, kinetic_energy=ke,
                         total_energy=w + ke + u_ext, px=px, py=py, pz=pz,
                         total_charge=self.total_charge)
        if step == 0:
            self.initial = rec
        else:
            self.records.append(rec)


def _reduce_local(vec):
    return vec


def _make_allreduce_reducer(comm: Comm, timers):
    def reduce_fn(vec):
        with timers.section("Allreduce"):
            return comm.allreduce_sum(vec)
    return reduce_fn


def _make_p2p_reducer(comm: Comm):
    """Fan-in to rank 0 with fixed order (domain decomposition keeps to P2P)."""
    def reduce_fn(vec):
        if comm.rank != 0:
            comm.send(0, vec)
            return None
        total = vec.copy()
        for src in range(1, comm.size):
            total = total + comm.recv(src)
        return total
    return reduce_fn


# ---------------------------------------------------------------------------
# Field operators: replicated-mode (PIF/PIC) and slab-distributed
# ---------------------------------------------------------------------------

class _PifFieldOps:
    """Replicated-mode PIF solve/gather (serial, particle decomposition,
    and the parareal propagators)."""

    def __init__(self, plan, shape, comm, timers):
        self.plan = plan
        self.shape = shape
        self.comm = comm
        self.timers = timers

    def solve(self, ens: ParticleEnsemble) -> FourierField:
        with self.timers.section("Scatter"):
            raw = nufft.type1(self.plan, ens.x,
                              np.full(ens.count, ens.q_per_particle))
        if self.comm is not None:
            with self.timers.section("Allreduce"):
                raw.coeffs = self.comm.allreduce_sum(raw.coeffs)
        return pif.finish_deposit(raw, self.plan, self.shape)

    def gather(self, rho: FourierField, ens: ParticleEnsemble) -> np.ndarray:
        with self.timers.section("Gather"):
            Ex, Ey, Ez = poisson_efield(rho)
            return pif.gather_efield(Ex, Ey, Ez, ens, self.plan, self.shape)

    def field_energy(self, rho: FourierField) -> float:
        return field_energy(*poisson_efield(rho))


class _PicFieldOps:
    """Replicated-grid FFT-PIC solve/gather (parareal coarse propagator)."""

    def __init__(self, n_c, L, comm, timers):
        self.n_c = n_c
        self.L = L
        self.comm = comm
        self.timers = timers
        m = np.fft.fftfreq(n_c) * n_c
        self.kx = (2 * np.pi / L) * m[:, None, None]
        self.ky = (2 * np.pi / L) * m[None, :, None]
        self.kz = (2 * np.pi / L) * m[None, None, :]
        k2 = self.kx**2 + self.ky**2 + self.kz**2
        k2[0, 0, 0] = 1.0
        self.inv_k2 = 1.0 / k2

    def solve(self, ens: ParticleEnsemble):
        with self.timers.section("Scatter"):
            grid = pif.cic_deposit_grid(ens, self.n_c, self.L)
        if self.comm is not None:
            with self.timers.section("Allreduce"):
                grid = self.comm.allreduce_sum(grid)
        return grid

    def gather(self, grid, ens: ParticleEnsemble) -> np.ndarray:
        with self.timers.section("Gather"):
            g = np.fft.fftn(grid) * (-1j * self.inv_k2)
            g[0, 0, 0] = 0.0
            comps = [np.ascontiguousarray(np.fft.ifftn(kd * g).real).ravel()
                     for kd in (self.kx, self.ky, self.kz)]
            from . import _kernels
            out = np.empty((ens.count, 3))
            _kernels.cic_interp_r3(ens.x, comps[0], comps[1], comps[2], out,
                                   self.n_c, self.L / self.n_c)
            return out

    def field_energy(self, grid) -> float:
        return 0.0  # coarse propagator runs never record diagnostics


class _DdFieldOps:
    """Slab-distributed solve/gather for domain decomposition."""

    def __init__(self, plan, layout, shape, comm, timers):
        self.plan = plan
        self.layout = layout
        self.shape = shape
        self.comm = comm
        self.timers = timers
        self.shape1d = pif.shape_factors(plan, shape)
        N = plan.N
        self.mz, _ = nufft.owned_mode_planes(plan, layout, comm.rank)
        k1 = (2 * np.pi / plan.L) * mode_ints(N).astype(np.float64)
        self.kx = k1[:, None, None]
        self.ky = k1[None, :, None]
        self.kzl = ((2 * np.pi / plan.L) * self.mz.astype(np.float64))[None, None, :]
        k2 = self.kx**2 + self.ky**2 + self.kzl**2
        self.zero_plane = np.nonzero(self.mz == 0)[0]
        if self.zero_plane.size:
            k2[N // 2, N // 2, self.zero_plane[0]] = 1.0
        self.inv_k2 = 1.0 / k2

    def solve(self, ens: ParticleEnsemble) -> nufft.LocalModes:
        with self.timers.section("Scatter"):
            raw = nufft.dd_type1(self.comm, self.layout, self.plan, ens.x,
                                 np.full(ens.count, ens.q_per_particle),
                                 timers=self.timers)
        c = raw.coeffs
        c *= self.shape1d[:, None, None]
        c *= self.shape1d[None, :, None]
        c *= self.shape1d[self.mz + self.plan.N // 2][None, None, :]
        c *= 1.0 / self.plan.L**3
        if self.zero_plane.size:
            c[self.plan.N // 2, self.plan.N // 2, self.zero_plane[0]] = 0.0
        return raw

    def _efield_modes(self, rho: nufft.LocalModes):
        g = rho.coeffs * (-1j * self.inv_k2)
        comps = [self.kx * g, self.ky * g, self.kzl * g]
        if self.zero_plane.size:
            for c in comps:
                c[self.plan.N // 2, self.plan.N // 2, self.zero_plane[0]] = 0.0
        return comps

    def gather(self, rho: nufft.LocalModes, ens: ParticleEnsemble) -> np.ndarray:
        with self.timers.section("Gather"):
            comps = self._efield_modes(rho)
            s = self.shape1d
            out = np.empty((ens.count, 3))
            for d, c in enumerate(comps):
                c = c * s[:, None, None]
                c *= s[None, :, None]
                c *= s[self.mz + self.plan.N // 2][None, None, :]
                local = nufft.LocalModes(self.plan.N, self.plan.L, self.mz, c)
                out[:, d] = nufft.dd_type2(self.comm, self.layout, self.plan,
                                           local, ens.x, timers=self.timers).real
            return out

    def field_energy(self, rho: nufft.LocalModes) -> float:
        total = 0.0
        for c in self._efield_modes(rho):
            total += float(np.sum(np.abs(c) ** 2))
        return 0.5 * self.plan.L**3 * total


# ---------------------------------------------------------------------------
# Shared stepping loop (prime solve, then gather/push/solve per step)
# ---------------------------------------------------------------------------

def _stepping_loop(ens, ops, externals, L, dt, steps, *, timers,
                   recorder=None, t0=0.0, step0=0, record_start=False,
                   post_push=None):
    """Advance `steps` steps; the field state is primed from the incoming
    positions so recorded energies always match the recorded particles."""
    fields = ops.solve(ens)
    if recorder is not None and record_start:
        recorder.record(step0, t0, ens, ops.field_energy(fields))
    for i in range(steps):
        E_at = ops.gather(fields, ens)
        with timers.section("ParticleUpdate"):
            pif.boris_push(ens, E_at, externals, dt, L)
            if post_push is not None:
                ens = post_push(ens)
        fields = ops.solve(ens)
        if recorder is not None:
            recorder.record(step0 + i + 1, t0 + (i + 1) * dt, ens,
                            ops.field_energy(fields))
    return ens


# ---------------------------------------------------------------------------
# Serial and particle decomposition
# ---------------------------------------------------------------------------

def _run_replicated(setup: RunSetup, comm: Comm | None, timers: Timers) -> dict:
    spec = setup.spec
    plan = nufft.make_plan(spec.N, spec.L, setup.eps)
    externals = spec.externals()
    size = comm.size if comm is not None else 1
    rank = comm.rank if comm is not None else 0
    ens = sample_benchmark(spec, spec.seed,
                           id_slice(spec.num_particles, rank, size))
    ops = _PifFieldOps(plan, setup.shape, comm, timers)
    reduce_fn = _reduce_local if comm is None else _make_allreduce_reducer(comm, timers)
    recorder = Recorder(externals, spec.Q_e, setup.diag_every, reduce_fn,
                        is_root=(rank == 0), field_energy_is_local=False)
    start = _time.perf_counter()
    _stepping_loop(ens, ops, externals, spec.L, spec.dt, spec.steps,
                   timers=timers, recorder=recorder, record_start=True)
    loop_seconds = _time.perf_counter() - start
    return {
        "records": recorder.records if rank == 0 else None,
        "initial": recorder.initial,
        "loop_seconds": loop_seconds,
        "steps": spec.steps,
        "timers": timers,
    }


def run_serial(setup: RunSetup, ctx: RankContext, timers: Timers | None = None) -> dict:
    """Plain single-rank PIF stepping (no communication at all)."""
    if ctx.world_size != 1:
        raise ValueError("serial strategy runs on exactly one rank")
    return _run_replicated(setup, None, timers or Timers())


def run_particle_decomposition(setup: RunSetup, ctx: RankContext,
                               timers: Timers | None = None) -> dict:
    """Particles split by id, modes replicated, Allreduce-only communication."""
    ctx.space = ctx.world
    return _run_replicated(setup, ctx.world, timers or Timers())


# ---------------------------------------------------------------------------
# Domain decomposition
# ---------------------------------------------------------------------------

def migrate_particles(ens: ParticleEnsemble, layout: nufft.SlabLayout,
                      comm: Comm, L: float, expected_total: int) -> ParticleEnsemble:
    """Move every particle to the rank owning its z-slab.

    Nearest-neighbor P2P per round; floor(P/2) rounds cover the worst-case
    periodic hop distance, so multi-slab crossings forward hop by hop.
    Raises if the global count changes or a particle ends up foreign.
    """
    P = comm.size
    rank = comm.rank
    if P == 1:
        return ens
    left = (rank - 1) % P
    right = (rank + 1) % P
    rounds = max(1, P // 2)
    for _ in range(rounds):
        owner = nufft.slab_owner(layout, ens.x[:, 2], L)
        diff = (owner - rank) % P
        moving = diff != 0
        go_left = moving & (diff > P // 2)
        go_right = moving & ~go_left
        comm.send(left, ens.take(go_left))
        comm.send(right, ens.take(go_right))
        stay = ens.take(~moving)
        arrivals = [comm.recv(left), comm.recv(right)]
        ens = ParticleEnsemble.concat([stay] + arrivals)
    owner = nufft.slab_owner(layout, ens.x[:, 2], L)
    if np.any(owner != rank):
        raise MigrationError(
            f"rank {rank}: {int(np.sum(owner != rank))} particles remain foreign "
            f"after {rounds} exchange rounds"
        )
    counts = comm.alltoall([np.array([ens.count], dtype=np.int64)] * P)
    total = int(sum(c[0] for c in counts))
    if total != expected_total:
        raise MigrationError(
            f"global particle count {total} != expected {expected_total}"
        )
    return ens


def run_domain_decomposition(setup: RunSetup, ctx: RankContext,
                             timers: Timers | None = None) -> dict:
    """Slab-partitioned particles and modes; P2P + Alltoall communication."""
    timers = timers or Timers()
    comm = ctx.world
    ctx.space = comm
    P = comm.size
    rank = comm.rank
    spec = setup.spec
    plan = nufft.make_plan(spec.N, spec.L, setup.eps)
    layout = nufft.make_slab_layout(plan, P)
    ctx.slab = SlabTopology(axis=2, index=rank, left=(rank - 1) % P,
                            right=(rank + 1) % P)
    externals = spec.externals()
    full = sample_benchmark(spec, spec.seed)
    ens = full.take(nufft.slab_owner(layout, full.x[:, 2], spec.L) == rank)

    ops = _DdFieldOps(plan, layout, setup.shape, comm, timers)
    reduce_fn = _reduce_local if P == 1 else _make_p2p_reducer(comm)
    recorder = Recorder(externals, spec.Q_e, setup.diag_every, reduce_fn,
                        is_root=(rank == 0), field_energy_is_local=(P > 1))
    count_history = [ens.count]

    def post_push(e):
        e = migrate_particles(e, layout, comm, spec.L, spec.num_particles)
        count_history.append(e.count)
        return e

    start = _time.perf_counter()
    _stepping_loop(ens, ops, externals, spec.L, spec.dt, spec.steps,
                   timers=timers, recorder=recorder, record_start=True,
                   post_push=post_push)
    loop_seconds = _time.perf_counter() - start
    return {
        "records": recorder.records if rank == 0 else None,
        "initial": recorder.initial,
        "loop_seconds": loop_seconds,
        "steps": spec.steps,
        "timers": timers,
        "count_history": count_history,
    }


# ---------------------------------------------------------------------------
# Parareal space-time decomposition
# ---------------------------------------------------------------------------

def parareal_correction(F_prev: ParticleEnsemble, G_prev: ParticleEnsemble,
                        G_new: ParticleEnsemble, L: float) -> ParticleEnsemble:
    """U = F_prev + G_new - G_prev per particle and component; the coarse
    increment is taken minimum-image in position before re-wrapping."""
    for other in (G_prev, G_new):
        if not np.array_equal(F_prev.ids, other.ids):
            raise ValueError("parareal correction requires matching particle ids")
    out = F_prev.copy()
    out.x = wrap_positions(F_prev.x + minimum_image(G_new.x - G_prev.x, L), L)
    out.v = F_prev.v + (G_new.v - G_prev.v)
    return out


def convergence_norm(u_new: ParticleEnsemble, u_old: ParticleEnsemble,
                     L: float, comm: Comm | None = None,
                     timers=NULL_TIMERS) -> float:
    """Relative l2 distance between successive slab states.

    Positions enter as minimum-image differences, normalized against a state
    vector whose position components sit at their natural scale L/2; sums
    are reduced across the space communicator when one is given.
    """
    if not np.array_equal(u_new.ids, u_old.ids):
        raise ValueError("convergence norm requires matching particle ids")
    dx = minimum_image(u_new.x - u_old.x, L)
    dv = u_new.v - u_old.v
    num = float(np.sum(dx * dx) + np.sum(dv * dv))
    den = float(3 * u_new.count * (L / 2.0) ** 2 + np.sum(u_new.v**2))
    if comm is not None:
        with timers.section("Allreduce"):
            num, den = comm.allreduce_sum(np.array([num, den]))
    return float(np.sqrt(num / den))


def _ring_from_last(tcomm: Comm, value, timers=NULL_TIMERS):
    """Distribute a value held by the last time rank to every time rank."""
    P = tcomm.size
    t = tcomm.rank
    if P == 1:
        return value
    with timers.section("TimeComm"):
        if t == P - 1:
            tcomm.send(0, value)
            return value
        v = tcomm.recv(P - 1 if t == 0 else t - 1)
        if t < P - 2:
            tcomm.send(t + 1, v)
        return v


def _records_to_payload(records: list[StepRecord]) -> dict:
    cols = ("step", "t", "field_energy", "kinetic_energy", "total_energy",
            "px", "py", "pz", "total_charge")
    return {c: np.array([getattr(r, c) for r in records]) for c in cols}


def _records_from_payload(d: dict) -> list[StepRecord]:
    n = len(d["step"])
    return [StepRecord(step=int(d["step"][i]), t=d["t"][i],
                       field_energy=d["field_energy"][i],
                       kinetic_energy=d["kinetic_energy"][i],
                       total_energy=d["total_energy"][i],
                       px=d["px"][i], py=d["py"][i], pz=d["pz"][i],
                       total_charge=d["total_charge"][i]) for i in range(n)]


def run_parareal(setup: RunSetup, pcfg: PararealConfig, ctx: RankContext,
                 timers: Timers | None = None) -> dict:
    """Space-time decomposition: parareal over P_t slabs, particle
    decomposition over P_s ranks inside every slab (Algorithm: coarse serial
    sweep, then iterate fine-parallel + corrected coarse, states flowing
    forward in time by P2P until the last slab converges)."""
    timers = timers or Timers()
    spec = setup.spec
    P_t = pcfg.ranks_time
    world = ctx.world
    if world.size % P_t != 0:
        raise ValueError(f"{world.size} ranks not divisible by ranks_time={P_t}")
    P_s = world.size // P_t
    t_idx, s_idx = divmod(world.rank, P_s)
    space = world.split(color=t_idx, key=s_idx, label="space")
    tcomm = world.split(color=s_idx, key=t_idx, label="time")
    ctx.space, ctx.time = space, tcomm

    if spec.steps % (pcfg.blocks * P_t) != 0:
        raise ValueError(
            f"steps={spec.steps} not divisible by blocks*ranks_time="
            f"{pcfg.blocks * P_t}"
        )
    slab_steps = spec.steps // (pcfg.blocks * P_t)
    dt_c = pcfg.coarse.dt if pcfg.coarse.dt is not None else spec.dt
    ratio = dt_c / spec.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(f"dt_coarse={dt_c} must be an integer multiple of dt={spec.dt}")
    ratio = int(round(ratio))
    if slab_steps % ratio != 0:
        raise ValueError(
            f"slab of {slab_steps} fine steps not divisible by coarsening {ratio}"
        )
    coarse_slab_steps = slab_steps // ratio

    externals = spec.externals()
    L = spec.L
    fine_plan = nufft.make_plan(spec.N, spec.L, setup.eps)
    fine_ops = _PifFieldOps(fine_plan, setup.shape, space, timers)
    if pcfg.coarse.kind == "pif":
        coarse_plan = nufft.make_plan(spec.N, spec.L, pcfg.coarse.eps)
        coarse_ops = _PifFieldOps(coarse_plan, setup.shape, space, timers)
    else:
        coarse_ops = _PicFieldOps(pcfg.coarse.n_c or spec.N, L, space, timers)

    def fine(ens, t0, step0, recorder=None):
        with timers.section("FinePropagator"):
            return _stepping_loop(ens, fine_ops, externals, L, spec.dt,
                                  slab_steps, timers=timers, recorder=recorder,
                                  t0=t0, step0=step0)

    def coarse(ens, t0):
        with timers.section("CoarsePropagator"):
            return _stepping_loop(ens, coarse_ops, externals, L, dt_c,
                                  coarse_slab_steps, timers=timers, t0=t0)

    ens0 = sample_benchmark(spec, spec.seed,
                            id_slice(spec.num_particles, s_idx, P_s))
    reduce_fn = _make_allreduce_reducer(space, timers)
    recorder = Recorder(externals, spec.Q_e, setup.diag_every, reduce_fn,
                        is_root=(s_idx == 0), field_energy_is_local=False)
    if t_idx == 0:
        recorder.record(0, 0.0, ens0, fine_ops.field_energy(fine_ops.solve(ens0)))

    iterations: list[int] = []
    residual_history: list[float] = []
    states: dict[int, dict[int, ParticleEnsemble]] = {}
    block_state = ens0
    start = _time.perf_counter()

    for b in range(pcfg.blocks):
        block_step0 = b * P_t * slab_steps
        slab_step0 = block_step0 + t_idx * slab_steps
        slab_t0 = slab_step0 * spec.dt

        # sequential coarse sweep, replicated on every time rank
        sweep = block_state.copy()
        U_start = sweep.copy() if t_idx == 0 else None
        G_saved = None
        U_end_prev = None
        for n in range(P_t):
            if n == t_idx:
                U_start = sweep.copy()
            sweep = coarse(sweep, (block_step0 + n * slab_steps) * spec.dt)
            if n == t_idx:
                G_saved = sweep.copy()
                U_end_prev = sweep.copy()

        frozen = False
        done = False
        k = 0
        max_k = pcfg.exact_iters if pcfg.exact_iters is not None else pcfg.max_iters
        while k < max_k:
            k += 1
            if not frozen:
                F_end = fine(U_start.copy(), slab_t0, slab_step0)
            if t_idx == 0:
                new_start = block_state
                prefix_ok = True
                run_max = 0.0
            else:
                with timers.section("TimeComm"):
                    msg = tcomm.recv(t_idx - 1)
                new_start = msg["state"]
                prefix_ok = msg["converged"]
                run_max = msg["run_max"]
            if not frozen:
                G_new = coarse(new_start.copy(), slab_t0)
                U_end_new = parareal_correction(F_end, G_saved, G_new, L)
                G_saved = G_new
                r = convergence_norm(U_end_new, U_end_prev, L, space, timers)
            else:
                U_end_new = U_end_prev
                r = 0.0
            run_max = max(run_max, r)
            if pcfg.exact_iters is not None:
                frozen_next = False
            else:
                frozen_next = prefix_ok and (frozen or r <= pcfg.tol)
            if t_idx < P_t - 1:
                with timers.section("TimeComm"):
                    tcomm.send(t_idx + 1, {"state": U_end_new,
                                           "converged": frozen_next,
                                           "run_max": run_max})
            U_end_prev = U_end_new
            U_start = new_start
            frozen = frozen_next

            if pcfg.record_states:
                per_iter = states.setdefault(k, {})
                per_iter[t_idx] = U_start.copy()
                if t_idx == P_t - 1:
                    per_iter[P_t] = U_end_new.copy()

            status = _ring_from_last(
                tcomm,
                {"done": frozen_next and t_idx == P_t - 1, "residual": run_max},
                timers,
            )
            residual_history.append(float(status["residual"]))
            if pcfg.exact_iters is None and status["done"]:
                done = True
                break

        if pcfg.exact_iters is None and not done:
            raise PararealConvergenceError(
                f"parareal block {b} did not converge within {pcfg.max_iters} "
                f"iterations (tol={pcfg.tol})", residual_history)
        iterations.append(k)

        # one recording fine sweep from the converged slab starts; its end
        # state on the last slab seeds the next block
        sweep_end = fine(U_start.copy(), slab_t0, slab_step0, recorder=recorder)
        block_state = _ring_from_last(
            tcomm, sweep_end if t_idx == P_t - 1 else None, timers)

    loop_seconds = _time.perf_counter() - start

    # assemble records at world rank 0 along the s=0 time column
    if s_idx == 0 and t_idx > 0:
        with timers.section("TimeComm"):
            tcomm.send(0, _records_to_payload(recorder.records))
    records = None
    if world.rank == 0:
        records = list(recorder.records)
        for src in range(1, P_t):
            with timers.section("TimeComm"):
                records.extend(_records_from_payload(tcomm.recv(src)))
        records.sort(key=lambda r: r.step)

    return {
        "records": records,
        "initial": recorder.initial,
        "loop_seconds": loop_seconds,
        "steps": spec.steps,
        "timers": timers,
        "iterations": iterations,
        "residuals": residual_history,
        "states": states if pcfg.record_states else None,
    }
