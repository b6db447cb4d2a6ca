"""Initial-condition samplers for the Landau damping and Penning trap
benchmarks.

Sampling is a deterministic per-attribute stream (counter-based Philox keyed
by seed and attribute, indexed by particle id), so the global ensemble is
bit-identical for every rank decomposition: a rank takes its id slice of the
same stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .particles import ParticleEnsemble, wrap_positions
from .pif import ExternalFieldsSpec

_REJECTION_BUDGET = 16  # normal candidates per coordinate; 4-sigma cuts leave
                        # the exhaustion probability at ~1e-70


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: str            # landau | penning
    N: int               # Fourier modes per dimension
    ppm: int             # particles per mode
    L: float
    Q_e: float           # total electron charge
    alpha: float = 0.0   # landau perturbation amplitude
    k: float = 0.0       # landau wavenumber
    stds: tuple = (1.0, 1.0, 1.0)   # penning position spread
    B_ext: tuple = (0.0, 0.0, 0.0)
    e_kind: str = "none"
    dt: float = 0.003125
    steps: int = 768
    seed: int = 0

    @property
    def num_particles(self) -> int:
        return self.ppm * self.N**3

    def externals(self) -> ExternalFieldsSpec:
        return ExternalFieldsSpec(L=self.L, B=self.B_ext, e_kind=self.e_kind)

    def __post_init__(self):
        if self.N % 2 != 0 or self.ppm < 1:
            raise ValueError(f"need even N and ppm >= 1, got N={self.N} ppm={self.ppm}")


def landau_spec(N: int = 16, ppm: int = 10, *, k: float = 0.5, alpha: float = 0.05,
                dt: float = 0.003125, steps: int = 768, seed: int = 0) -> BenchmarkSpec:
    """Weak Landau damping: perturbed Maxwellian on L = 2*pi/k, Q_e = -L^3."""
    L = 2.0 * np.pi / k
    return BenchmarkSpec(kind="landau", N=N, ppm=ppm, L=L, Q_e=-(L**3),
                         alpha=alpha, k=k, dt=dt, steps=steps, seed=seed)


def penning_spec(N: int = 16, ppm: int = 10, *, dt: float = 0.003125,
                 steps: int = 768, seed: int = 0) -> BenchmarkSpec:
    """Penning trap: Gaussian cloud in B = (0,0,5) plus a quadrupole E field."""
    return BenchmarkSpec(kind="penning", N=N, ppm=ppm, L=25.0, Q_e=-1562.5,
                         stds=(2.0, 1.0, 3.0), B_ext=(0.0, 0.0, 5.0),
                         e_kind="quadrupole", dt=dt, steps=steps, seed=seed)


def _attr_stream(seed: int, attr: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, attr))))


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _standard_normal(seed: int, attr: int, count: int) -> np.ndarray:
    u = _attr_stream(seed, attr).random((2, count))
    return _box_muller(u[0], u[1])


def _invert_landau_cdf(u: np.ndarray, alpha: float, k: float, L: float) -> np.ndarray:
    """Invert F(x) = (x + (alpha/k) sin(kx)) / L by Newton iteration.

    F is strictly monotone for alpha < 1, so Newton from x = u*L converges;
    a bisection fallback covers any stragglers.
    """
    x = u * L
    a = alpha / k
    converged = np.zeros(u.shape, dtype=bool)
    for _ in range(60):
        f = (x + a * np.sin(k * x)) / L - u
        converged = np.abs(f) <= 1e-12
        if converged.all():
            break
        fp = (1.0 + alpha * np.cos(k * x)) / L
        x = np.where(converged, x, x - f / fp)
    if not converged.all():
        bad = ~converged
        lo = np.zeros(bad.sum())
        hi = np.full(bad.sum(), L)
        ub = u[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = (mid + a * np.sin(k * mid)) / L - ub
            hi = np.where(fm > 0, mid, hi)
            lo = np.where(fm > 0, lo, mid)
        x[bad] = 0.5 * (lo + hi)
        f = (x + a * np.sin(k * x)) / L - u
        if np.max(np.abs(f)) > 1e-10:
            raise RuntimeError("CDF inversion failed to converge")
    return x


def _rejection_normal_in_box(seed: int, attr: int, count: int, mean: float,
                             std: float, L: float) -> np.ndarray:
    """First in-domain sample from a fixed budget of normal candidates."""
    u = _attr_stream(seed, attr).random((2 * _REJECTION_BUDGET, count))
    cand = mean + std * _box_muller(u[:_REJECTION_BUDGET], u[_REJECTION_BUDGET:])
    valid = (cand >= 0.0) & (cand < L)
    if not valid.any(axis=0).all():
        raise RuntimeError("rejection sampling budget exhausted")
    first = np.argmax(valid, axis=0)
    return cand[first, np.arange(count)]


def _make_ensemble(spec: BenchmarkSpec, x: np.ndarray, v: np.ndarray,
                   lo: int, hi: int) -> ParticleEnsemble:
    n_p = spec.num_particles
    return ParticleEnsemble(
        x=x[lo:hi],
        v=v[lo:hi],
        ids=np.arange(lo, hi, dtype=np.int64),
        q_per_particle=spec.Q_e / n_p,
        m_per_particle=abs(spec.Q_e) / n_p,  # q/m = -1 in normalized units
        total_charge=spec.Q_e,
        total_mass=abs(spec.Q_e),
        global_count=n_p,
    )


def sample_landau(spec: BenchmarkSpec, seed: int,
                  id_range: tuple[int, int] | None = None) -> ParticleEnsemble:
    """Sample the Landau benchmark; id_range selects a rank-local slice of
    the decomposition-independent global ensemble."""
    if spec.kind != "landau":
        raise ValueError(f"spec kind {spec.kind!r} is not landau")
    n_p = spec.num_particles
    lo, hi = id_range if id_range is not None else (0, n_p)
    x = np.empty((n_p, 3))
    v = np.empty((n_p, 3))
    for d in range(3):
        u = _attr_stream(seed, d).random(n_p)
        x[:, d] = _invert_landau_cdf(u, spec.alpha, spec.k, spec.L)
        v[:, d] = _standard_normal(seed, 3 + d, n_p)
    x = wrap_positions(x, spec.L)
    return _make_ensemble(spec, x, v, lo, hi)


def sample_penning(spec: BenchmarkSpec, seed: int,
                   id_range: tuple[int, int] | None = None) -> ParticleEnsemble:
    """Sample the Penning benchmark (Gaussian positions about the center,
    out-of-domain candidates rejected)."""
    if spec.kind != "penning":
        raise ValueError(f"spec kind {spec.kind!r} is not penning")
    n_p = spec.num_particles
    lo, hi = id_range if id_range is not None else (0, n_p)
    x = np.empty((n_p, 3))
    v = np.empty((n_p, 3))
    for d in range(3):
        x[:, d] = _rejection_normal_in_box(seed, d, n_p, spec.L / 2.0,
                                           spec.stds[d], spec.L)
        v[:, d] = _standard_normal(seed, 3 + d, n_p)
    return _make_ensemble(spec, x, v, lo, hi)


def sample_benchmark(spec: BenchmarkSpec, seed: int,
                     id_range: tuple[int, int] | None = None) -> ParticleEnsemble:
    if spec.kind == "landau":
        return sample_landau(spec, seed, id_range)
    if spec.kind == "penning":
        return sample_penning(spec, seed, id_range)
    raise ValueError(f"unknown benchmark kind {spec.kind!r}")


def id_slice(n_p: int, rank: int, size: int) -> tuple[int, int]:
    """Contiguous balanced id range owned by `rank` of `size`."""
    base, extra = divmod(n_p, size)
    lo = rank * base + min(rank, extra)
    return lo, lo + base + (1 if rank < extra else 0)
