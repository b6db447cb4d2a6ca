"""pifsim: desk-scale particle-in-Fourier Vlasov-Poisson simulator.

Couples macro-particles directly to truncated Fourier modes through type-1/2
NUFFTs and runs the cycle under three distributed strategies (domain,
particle, and space-time/parareal decomposition) on an in-process SPMD
communicator.
"""

__version__ = "0.1.0"

from .bench import BenchmarkSpec, landau_spec, penning_spec, sample_landau, sample_penning
from .comm import CallLog, Comm, RankContext, spawn_spmd
from .nufft import NufftPlan, direct_transform, make_plan, type1, type2
from .particles import ParticleEnsemble
from .pif import ExternalFieldsSpec, StepState, boris_push, deposit_charge, gather_efield, pic_step, pif_step
from .spectral import FourierField, field_energy, mode_vector, poisson_efield
from .strategies import (
    CoarseSpec,
    PararealConfig,
    RunSetup,
    run_domain_decomposition,
    run_parareal,
    run_particle_decomposition,
    run_serial,
)

__all__ = [
    "BenchmarkSpec", "CallLog", "CoarseSpec", "Comm", "ExternalFieldsSpec",
    "FourierField", "NufftPlan", "PararealConfig", "ParticleEnsemble",
    "RankContext", "RunSetup", "StepState", "boris_push", "deposit_charge",
    "direct_transform", "field_energy", "gather_efield", "landau_spec",
    "make_plan", "mode_vector", "penning_spec", "pic_step", "pif_step",
    "poisson_efield", "run_domain_decomposition", "run_parareal",
    "run_particle_decomposition", "run_serial", "sample_landau",
    "sample_penning", "spawn_spmd", "type1", "type2",
]
