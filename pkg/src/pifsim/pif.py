"""The particle-in-Fourier computational cycle, plus a standard FFT-PIC
stepper used as a parareal coarse propagator.

One cycle couples macro-particles to the truncated mode set: deposit the
charge with a type-1 NUFFT, solve Poisson in Fourier space, gather the
field back with type-2 NUFFTs, and advance the particles with a Boris push.
Deposit and gather share one plan and one shape factor, so the pair is an
exact adjoint and the self-field exerts zero net force to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, nufft
from .diag import NULL_TIMERS
from .particles import ParticleEnsemble, wrap_positions
from .spectral import FourierField, hermitian_mismatch, poisson_efield


class FieldSymmetryError(RuntimeError):
    """Gather input lost the Hermitian pairing a real field must carry."""


@dataclass(frozen=True)
class ExternalFieldsSpec:
    """Constant magnetic field plus an optional quadrupole electric field."""

    L: float
    B: tuple = (0.0, 0.0, 0.0)
    e_kind: str = "none"   # none | quadrupole

    def __post_init__(self):
        if self.e_kind not in ("none", "quadrupole"):
            raise ValueError(f"unknown external E-field kind {self.e_kind!r}")


NO_EXTERNALS = ExternalFieldsSpec(L=1.0)


def external_field_eval(spec: ExternalFieldsSpec, x: np.ndarray) -> np.ndarray:
    """External electric field at positions x, (M, 3).

    The quadrupole is (-15/L (x-L/2), -15/L (y-L/2), +30/L (z-L/2)): it
    vanishes at the domain center and confines axially while the magnetic
    rotation provides the transverse confinement.
    """
    if spec.e_kind == "none":
        return np.zeros_like(x)
    c = spec.L / 2.0
    out = np.empty_like(x)
    out[:, 0] = (-15.0 / spec.L) * (x[:, 0] - c)
    out[:, 1] = (-15.0 / spec.L) * (x[:, 1] - c)
    out[:, 2] = (30.0 / spec.L) * (x[:, 2] - c)
    return out


def external_potential_energy(spec: ExternalFieldsSpec, ens: ParticleEnsemble) -> float:
    """Potential energy of the ensemble in the external electric field."""
    if spec.e_kind == "none":
        return 0.0
    c = spec.L / 2.0
    dx = ens.x - c
    phi = (7.5 / spec.L) * (dx[:, 0] ** 2 + dx[:, 1] ** 2) \
        - (15.0 / spec.L) * dx[:, 2] ** 2
    return ens.q_per_particle * float(np.sum(phi))


def shape_factors(plan: nufft.NufftPlan, shape: str) -> np.ndarray:
    """Per-dimension particle shape transform S_k on the mode set.

    "delta" (the default) keeps deposit/gather exactly adjoint; "cic" applies
    the cloud-in-cell sinc^2 at the mode-grid spacing.
    """
    if shape == "delta":
        return np.ones(plan.N)
    if shape == "cic":
        m = np.arange(plan.N) - plan.N // 2
        u = np.pi * m / plan.N
        s = np.ones(plan.N)
        nz = m != 0
        s[nz] = (np.sin(u[nz]) / u[nz]) ** 2
        return s
    raise ValueError(f"unknown shape {shape!r}")


def _apply_shape(coeffs: np.ndarray, s: np.ndarray) -> None:
    coeffs *= s[:, None, None]
    coeffs *= s[None, :, None]
    coeffs *= s[None, None, :]


def finish_deposit(f: FourierField, plan: nufft.NufftPlan,
                   shape: str = "delta") -> FourierField:
    """Turn a raw type-1 result into a charge density: apply the particle
    shape transform and 1/L^3, and zero the k=0 entry (the immobile
    neutralizing background removes the mean charge)."""
    _apply_shape(f.coeffs, shape_factors(plan, shape))
    f.coeffs *= 1.0 / plan.L**3
    mid = plan.N // 2
    f.coeffs[mid, mid, mid] = 0.0
    f.units = "charge-density"
    return f


def deposit_charge(ens: ParticleEnsemble, plan: nufft.NufftPlan,
                   shape: str = "delta") -> FourierField:
    """Charge density modes rho_k = (S_k / L^3) sum_j q_j exp(-i k.x_j)."""
    strengths = np.full(ens.count, ens.q_per_particle)
    return finish_deposit(nufft.type1(plan, ens.x, strengths), plan, shape)


def gather_efield(Ex: FourierField, Ey: FourierField, Ez: FourierField,
                  ens: ParticleEnsemble, plan: nufft.NufftPlan,
                  shape: str = "delta") -> np.ndarray:
    """Field at the particles, E(x_j) = sum_k E_k S_k exp(+i k.x_j), (M, 3).

    A real-valued field requires Hermitian mode pairing; the pairing of the
    input is checked (unpaired -N/2 planes exempt) and the imaginary part of
    the evaluation is discarded.  A broken pairing signals an upstream bug
    and raises.
    """
    comps = []
    s = shape_factors(plan, shape)
    for f in (Ex, Ey, Ez):
        scale = np.max(np.abs(f.coeffs))
        if scale > 0 and hermitian_mismatch(f.coeffs) > 1e-10 * scale:
            raise FieldSymmetryError(
                f"{f.units} modes lost Hermitian symmetry "
                f"(mismatch {hermitian_mismatch(f.coeffs):.3e} vs scale {scale:.3e})"
            )
        c = f.coeffs.copy()
        _apply_shape(c, s)
        comps.append(c)
    return nufft.gather3_real(plan, comps, ens.x)


def boris_push(ens: ParticleEnsemble, E_at: np.ndarray,
               externals: ExternalFieldsSpec, dt: float, L: float) -> ParticleEnsemble:
    """Boris scheme: half kick, tan(theta/2) magnetic rotation, half kick,
    then drift with periodic wrap.  Mutates and returns the ensemble."""
    if E_at.shape != ens.x.shape:
        raise ValueError(f"E_at shape {E_at.shape} does not match particles")
    qm = ens.q_per_particle / ens.m_per_particle
    E_tot = E_at + external_field_eval(externals, ens.x)
    half = 0.5 * dt * qm
    vm = ens.v + half * E_tot
    B = np.asarray(externals.B, dtype=np.float64)
    if np.any(B != 0.0):
        t = half * B
        s = 2.0 * t / (1.0 + t @ t)
        vp = vm + np.cross(vm, t)
        vm = vm + np.cross(vp, s)
    ens.v = vm + half * E_tot
    ens.x = wrap_positions(ens.x + dt * ens.v, L)
    return ens


@dataclass
class StepState:
    """Everything one rank needs to advance its particles one step."""

    ensemble: ParticleEnsemble
    plan: nufft.NufftPlan
    externals: ExternalFieldsSpec
    dt: float
    t: float = 0.0
    step: int = 0
    shape: str = "delta"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


def pif_step(state: StepState, timers=NULL_TIMERS) -> StepState:
    """One PIF cycle: deposit, Poisson solve (embedded in the gather stage),
    gather, push."""
    with timers.section("Scatter"):
        rho = deposit_charge(state.ensemble, state.plan, state.shape)
    with timers.section("Gather"):
        Ex, Ey, Ez = poisson_efield(rho)
        E_at = gather_efield(Ex, Ey, Ez, state.ensemble, state.plan, state.shape)
    with timers.section("ParticleUpdate"):
        boris_push(state.ensemble, E_at, state.externals, state.dt, state.plan.L)
    state.t += state.dt
    state.step += 1
    return state


# ---------------------------------------------------------------------------
# Standard FFT-PIC stepper (coarse propagator)
# ---------------------------------------------------------------------------

def cic_deposit_grid(ens: ParticleEnsemble, n_c: int, L: float) -> np.ndarray:
    """Cloud-in-cell charge density on a uniform n_c^3 periodic grid."""
    h = L / n_c
    grid = np.zeros(n_c**3, dtype=np.float64)
    vals = np.full(ens.count, ens.q_per_particle / h**3)
    _kernels.cic_spread_r(ens.x, vals, grid, n_c, h)
    return grid.reshape(n_c, n_c, n_c)


def pic_step(state: StepState, n_c: int, timers=NULL_TIMERS) -> StepState:
    """One cycle of the standard FFT-PIC scheme on an n_c^3 grid.

    Linear B-spline (CIC) deposit and gather around the same spectral
    Poisson kernel and Boris push as the PIF cycle.
    """
    if n_c % 2 != 0:
        raise ValueError(f"coarse grid size must be even, got {n_c}")
    ens = state.ensemble
    L = state.plan.L
    h = L / n_c
    with timers.section("Scatter"):
        rho = cic_deposit_grid(ens, n_c, L)
    with timers.section("Gather"):
        rho_hat = np.fft.fftn(rho)
        m = np.fft.fftfreq(n_c) * n_c
        kx = (2 * np.pi / L) * m[:, None, None]
        ky = (2 * np.pi / L) * m[None, :, None]
        kz = (2 * np.pi / L) * m[None, None, :]
        k2 = kx * kx + ky * ky + kz * kz
        k2[0, 0, 0] = 1.0
        g = rho_hat * (-1j / k2)
        g[0, 0, 0] = 0.0
        grids = [np.ascontiguousarray(np.fft.ifftn(kd * g).real).ravel()
                 for kd in (kx, ky, kz)]
        E_at = np.empty((ens.count, 3))
        _kernels.cic_interp_r3(ens.x, grids[0], grids[1], grids[2], E_at, n_c, h)
    with timers.section("ParticleUpdate"):
        boris_push(ens, E_at, state.externals, state.dt, L)
    state.t += state.dt
    state.step += 1
    return state


def kinetic_energy(ens: ParticleEnsemble) -> float:
    return 0.5 * ens.m_per_particle * float(np.sum(ens.v * ens.v))


def momentum(ens: ParticleEnsemble) -> np.ndarray:
    return ens.m_per_particle * ens.v.sum(axis=0)
