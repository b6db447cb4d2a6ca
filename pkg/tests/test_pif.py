"""PIF cycle tests: deposit/gather against direct sums, Boris properties,
cycle composition, and the CIC coarse stepper."""

import numpy as np
import pytest

from pifsim import nufft, pif
from pifsim.particles import ParticleEnsemble
from pifsim.spectral import FourierField, poisson_efield


def make_ensemble(x, v=None, q=-1.0, m=1.0):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    v = np.zeros_like(x) if v is None else np.atleast_2d(np.asarray(v, float))
    return ParticleEnsemble(
        x=x, v=v, ids=np.arange(n, dtype=np.int64),
        q_per_particle=q, m_per_particle=m,
        total_charge=q * n, total_mass=m * n, global_count=n,
    )


# ---------------------------------------------------------------------------
# External fields
# ---------------------------------------------------------------------------

QUAD = pif.ExternalFieldsSpec(L=25.0, B=(0.0, 0.0, 5.0), e_kind="quadrupole")


def test_external_field_center_vanishes():
    E = pif.external_field_eval(QUAD, np.array([[12.5, 12.5, 12.5]]))
    assert np.array_equal(E, np.zeros((1, 3)))


def test_external_field_x_edge():
    E = pif.external_field_eval(QUAD, np.array([[25.0, 12.5, 12.5]]))
    assert np.allclose(E, [[-7.5, 0.0, 0.0]])


def test_external_field_z_edge():
    E = pif.external_field_eval(QUAD, np.array([[12.5, 12.5, 25.0]]))
    assert np.allclose(E, [[0.0, 0.0, 15.0]])


def test_external_potential_is_field_potential():
    # -grad phi must reproduce the field: check by central differences
    rng = np.random.default_rng(0)
    x = rng.random((4, 3)) * 25.0
    eps = 1e-6
    ens = make_ensemble(x, q=-2.0)
    for d in range(3):
        xp = x.copy()
        xm = x.copy()
        xp[:, d] += eps
        xm[:, d] -= eps
        up = pif.external_potential_energy(QUAD, make_ensemble(xp, q=-2.0))
        um = pif.external_potential_energy(QUAD, make_ensemble(xm, q=-2.0))
        force = -(up - um) / (2 * eps)  # total generalized force along d
        expected = ens.q_per_particle * pif.external_field_eval(QUAD, x)[:, d].sum()
        assert force == pytest.approx(expected, rel=1e-6)


# ---------------------------------------------------------------------------
# Deposit
# ---------------------------------------------------------------------------

def test_deposit_single_particle_at_origin():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    q = -2.0
    ens = make_ensemble([[0.0, 0.0, 0.0]], q=q)
    rho = pif.deposit_charge(ens, plan)
    mid = plan.N // 2
    assert rho.coeffs[mid, mid, mid] == 0.0
    expect = q / plan.L**3
    mask = np.ones(rho.coeffs.shape, bool)
    mask[mid, mid, mid] = False
    assert np.max(np.abs(rho.coeffs[mask] - expect)) <= 10 * plan.eps * abs(expect)


def test_deposit_opposite_charges_cancel():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    x = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    ens = make_ensemble(x, q=1.0)
    # override strengths via two ensembles: +q then -q at the same point
    plus = pif.deposit_charge(make_ensemble(x[:1], q=1.0), plan)
    minus = pif.deposit_charge(make_ensemble(x[:1], q=-1.0), plan)
    assert np.array_equal(plus.coeffs + minus.coeffs, np.zeros_like(plus.coeffs))
    del ens


def test_deposit_matches_direct_sum():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(30)
    x = rng.random((100, 3)) * plan.L
    q = -0.7
    ens = make_ensemble(x, q=q)
    rho = pif.deposit_charge(ens, plan)
    oracle = nufft.direct_type1(plan, x, np.full(100, q)).coeffs / plan.L**3
    mid = plan.N // 2
    oracle[mid, mid, mid] = 0.0
    assert np.max(np.abs(rho.coeffs - oracle)) <= 10 * plan.eps * np.max(np.abs(oracle))


def test_deposit_cic_shape_attenuates_high_modes():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    s = pif.shape_factors(plan, "cic")
    assert s[plan.N // 2] == 1.0                  # m = 0 unattenuated
    assert np.all(s <= 1.0) and np.all(s > 0.0)
    assert s[0] == pytest.approx((2 / np.pi) ** 2)  # m = -N/2


# ---------------------------------------------------------------------------
# Gather
# ---------------------------------------------------------------------------

def hermitian_field(N, L, rng, scale=1.0):
    real_grid = rng.standard_normal((N, N, N)) * scale
    return FourierField(N, L, np.fft.fftshift(np.fft.fftn(real_grid)) / N**3)


def test_gather_zero_field():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    z = FourierField(8, plan.L, np.zeros((8, 8, 8), complex))
    ens = make_ensemble(np.random.default_rng(1).random((5, 3)) * plan.L)
    assert np.array_equal(pif.gather_efield(z, z, z, ens, plan), np.zeros((5, 3)))


def test_gather_constant_field():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    N = plan.N
    c = np.zeros((N, N, N), complex)
    c[N // 2, N // 2, N // 2] = 1.75
    Ex = FourierField(N, plan.L, c)
    zero = FourierField(N, plan.L, np.zeros_like(c))
    ens = make_ensemble(np.random.default_rng(2).random((7, 3)) * plan.L)
    E = pif.gather_efield(Ex, zero, zero, ens, plan)
    assert np.max(np.abs(E[:, 0] - 1.75)) <= 10 * plan.eps * 1.75
    assert np.max(np.abs(E[:, 1:])) <= 10 * plan.eps * 1.75


def test_gather_matches_direct_sum():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(31)
    comps = [hermitian_field(8, plan.L, rng) for _ in range(3)]
    ens = make_ensemble(rng.random((50, 3)) * plan.L)
    E = pif.gather_efield(*comps, ens, plan)
    for d in range(3):
        vd = nufft.direct_type2(plan, comps[d].coeffs, ens.x).real
        assert np.max(np.abs(E[:, d] - vd)) <= 10 * plan.eps * np.max(np.abs(vd))


def test_gather_rejects_broken_symmetry():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(32)
    f = hermitian_field(8, plan.L, rng)
    f.coeffs[5, 4, 4] += 1.0  # break one pair
    ens = make_ensemble(rng.random((5, 3)) * plan.L)
    with pytest.raises(pif.FieldSymmetryError):
        pif.gather_efield(f, f, f, ens, plan)


# ---------------------------------------------------------------------------
# Boris push
# ---------------------------------------------------------------------------

def test_boris_pure_drift():
    ens = make_ensemble([[1.0, 2.0, 3.0]], v=[[0.5, -0.25, 1.0]])
    L = 2 * np.pi
    x0, v0 = ens.x.copy(), ens.v.copy()
    pif.boris_push(ens, np.zeros((1, 3)), pif.ExternalFieldsSpec(L=L), 0.125, L)
    assert np.array_equal(ens.v, v0)
    assert np.allclose(ens.x, np.mod(x0 + 0.125 * v0, L), atol=0, rtol=1e-15)


def test_boris_magnetic_rotation_preserves_speed():
    ens = make_ensemble([[1.0, 1.0, 1.0]], v=[[1.0, 0.5, 0.75]])
    ext = pif.ExternalFieldsSpec(L=25.0, B=(0.0, 0.0, 5.0))
    vz0 = ens.v[0, 2]
    speed0 = np.hypot(ens.v[0, 0], ens.v[0, 1])
    for _ in range(50):
        pif.boris_push(ens, np.zeros((1, 3)), ext, 0.01, 25.0)
    assert ens.v[0, 2] == vz0
    assert np.hypot(ens.v[0, 0], ens.v[0, 1]) == pytest.approx(speed0, rel=1e-13)


def test_boris_uniform_e_kick():
    ens = make_ensemble([[0.0, 0.0, 0.0]], v=[[0.0, 0.0, 0.0]], q=1.0, m=1.0)
    pif.boris_push(ens, np.array([[1.0, 0.0, 0.0]]),
                   pif.ExternalFieldsSpec(L=10.0), 0.1, 10.0)
    assert ens.v[0, 0] == 0.1
    assert ens.v[0, 1] == 0.0 and ens.v[0, 2] == 0.0


def test_gyration_radius_constant():
    # B = (0,0,5), q/m = -1: gyro frequency 5, period 2*pi/5
    ext = pif.ExternalFieldsSpec(L=25.0, B=(0.0, 0.0, 5.0))
    dt = (2 * np.pi / 5.0) / 100.0
    ens = make_ensemble([[12.5, 12.5, 12.5]], v=[[1.0, 0.0, 0.0]], q=-1.0, m=1.0)
    pts = [ens.x[0].copy()]
    for _ in range(100):
        pif.boris_push(ens, np.zeros((1, 3)), ext, dt, 25.0)
        pts.append(ens.x[0].copy())
    pts = np.array(pts)
    chords = np.linalg.norm(np.diff(pts[:, :2], axis=0), axis=1)
    # constant chord length over the period <=> constant orbit radius
    assert (chords.max() - chords.min()) <= 1e-10 * chords.mean()


# ---------------------------------------------------------------------------
# Cycle
# ---------------------------------------------------------------------------

def lattice_ensemble(n_side, L):
    g = (np.arange(n_side) + 0.5) * (L / n_side)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    x = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    n = x.shape[0]
    q = -(L**3) / n
    return ParticleEnsemble(
        x=x, v=np.zeros_like(x), ids=np.arange(n, dtype=np.int64),
        q_per_particle=q, m_per_particle=-q,
        total_charge=q * n, total_mass=-q * n, global_count=n,
    )


def test_pif_step_neutral_lattice_is_stationary():
    plan = nufft.make_plan(4, 2 * np.pi, 1e-7)
    ens = lattice_ensemble(8, plan.L)
    x0 = ens.x.copy()
    state = pif.StepState(ensemble=ens, plan=plan,
                          externals=pif.ExternalFieldsSpec(L=plan.L), dt=0.05)
    pif.pif_step(state)
    assert np.max(np.abs(state.ensemble.x - x0)) <= 1e-10


def test_pif_step_equals_stage_composition():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(33)
    x = rng.random((64, 3)) * plan.L
    v = rng.standard_normal((64, 3))
    q = -plan.L**3 / 64
    a = make_ensemble(x.copy(), v=v.copy(), q=q, m=-q)
    b = make_ensemble(x.copy(), v=v.copy(), q=q, m=-q)
    ext = pif.ExternalFieldsSpec(L=plan.L)

    state = pif.StepState(ensemble=a, plan=plan, externals=ext, dt=0.05)
    pif.pif_step(state)

    rho = pif.deposit_charge(b, plan)
    Ex, Ey, Ez = poisson_efield(rho)
    E_at = pif.gather_efield(Ex, Ey, Ez, b, plan)
    pif.boris_push(b, E_at, ext, 0.05, plan.L)

    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.v, b.v)


def test_forces_match_direct_transform_pipeline():
    # eps = 1e-12 NUFFT pipeline vs the direct-sum pipeline: same forces
    plan = nufft.make_plan(8, 2 * np.pi, 1e-12)
    rng = np.random.default_rng(34)
    x = rng.random((100, 3)) * plan.L
    q = -plan.L**3 / 100
    ens = make_ensemble(x, q=q, m=-q)

    rho = pif.deposit_charge(ens, plan)
    Ex, Ey, Ez = poisson_efield(rho)
    E_fast = pif.gather_efield(Ex, Ey, Ez, ens, plan)

    rho_d = nufft.direct_type1(plan, x, np.full(100, q)).coeffs / plan.L**3
    mid = plan.N // 2
    rho_d[mid, mid, mid] = 0.0
    Exd, Eyd, Ezd = poisson_efield(FourierField(plan.N, plan.L, rho_d, "charge-density"))
    E_direct = np.stack(
        [nufft.direct_type2(plan, f.coeffs, x).real for f in (Exd, Eyd, Ezd)], axis=1
    )
    scale = np.max(np.abs(E_direct))
    assert np.max(np.abs(E_fast - E_direct)) <= 1e-10 * scale


def test_self_force_is_zero_net():
    # adjoint deposit/gather: the self-field exerts no net force (momentum
    # conservation), independent of the unpaired -N/2 planes
    plan = nufft.make_plan(8, 2 * np.pi, 1e-3)
    rng = np.random.default_rng(35)
    x = rng.random((500, 3)) * plan.L
    q = -plan.L**3 / 500
    ens = make_ensemble(x, q=q, m=-q)
    rho = pif.deposit_charge(ens, plan)
    E_at = pif.gather_efield(*poisson_efield(rho), ens, plan)
    net = q * E_at.sum(axis=0)
    # scale: q * typical field * count
    scale = abs(q) * np.max(np.abs(E_at)) * ens.count
    assert np.max(np.abs(net)) <= 1e-12 * scale


# ---------------------------------------------------------------------------
# Diagnostic sums
# ---------------------------------------------------------------------------

def test_kinetic_energy_zero_velocities():
    ens = make_ensemble(np.random.default_rng(3).random((10, 3)))
    assert pif.kinetic_energy(ens) == 0.0


def test_kinetic_and_momentum_single_particle():
    ens = make_ensemble([[0.0, 0.0, 0.0]], v=[[3.0, 0.0, 0.0]], q=-2.0, m=2.0)
    assert pif.kinetic_energy(ens) == 9.0
    assert np.array_equal(pif.momentum(ens), [6.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# PIC coarse stepper
# ---------------------------------------------------------------------------

def test_cic_deposit_at_node():
    L, n_c = 8.0, 4
    h = L / n_c
    ens = make_ensemble([[2.0, 4.0, 6.0]], q=-3.0)  # exactly on node (1,2,3)
    grid = pif.cic_deposit_grid(ens, n_c, L)
    assert grid[1, 2, 3] == pytest.approx(-3.0 / h**3)
    grid[1, 2, 3] = 0.0
    assert np.all(grid == 0.0)


def test_cic_deposit_at_cell_center():
    L, n_c = 8.0, 4
    h = L / n_c
    ens = make_ensemble([[1.0, 1.0, 1.0]], q=8.0)  # center of cell (0,0,0)
    grid = pif.cic_deposit_grid(ens, n_c, L)
    corners = [(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    for c in corners:
        assert grid[c] == pytest.approx(1.0 / h**3)


def test_pic_step_comparable_to_pif_step():
    # side-by-side single step from identical states: bounded difference,
    # consistent with spectral-vs-CIC truncation
    plan = nufft.make_plan(16, 4 * np.pi, 1e-7)
    rng = np.random.default_rng(36)
    n = 2000
    x = rng.random((n, 3)) * plan.L
    v = rng.standard_normal((n, 3))
    q = -plan.L**3 / n
    ext = pif.ExternalFieldsSpec(L=plan.L)
    a = pif.StepState(make_ensemble(x.copy(), v=v.copy(), q=q, m=-q), plan, ext, 0.05)
    b = pif.StepState(make_ensemble(x.copy(), v=v.copy(), q=q, m=-q), plan, ext, 0.05)
    pif.pif_step(a)
    pif.pic_step(b, 16)
    dv = np.max(np.abs(a.ensemble.v - b.ensemble.v))
    v_th = 1.0
    assert 0 < dv < 0.1 * v_th  # different discretizations, same physics scale
