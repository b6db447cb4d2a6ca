"""NUFFT accuracy against direct-sum oracles, plus distributed variants."""

import numpy as np
import pytest

from pifsim import nufft
from pifsim.comm import spawn_spmd
from pifsim.spectral import FourierField, hermitian_mismatch


def rel_max(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------

def test_plan_w_from_tolerance():
    assert nufft.make_plan(16, 1.0, 1e-7).window.w == 8
    assert nufft.make_plan(16, 1.0, 1e-16).window.w == 17


def test_plan_upsampling():
    plan = nufft.make_plan(16, 1.0, 1e-7)
    assert plan.window.sigma == 2.0
    assert plan.n_up == 32


def test_plan_deconv_positive_finite():
    for eps in (1e-3, 1e-7, 1e-12):
        plan = nufft.make_plan(8, 2 * np.pi, eps)
        assert np.all(np.isfinite(plan.deconv))
        assert np.all(plan.deconv > 0)


@pytest.mark.parametrize("bad", [dict(N=7, L=1.0, eps=1e-7),
                                 dict(N=2, L=1.0, eps=1e-7),
                                 dict(N=8, L=1.0, eps=1e-17),
                                 dict(N=8, L=1.0, eps=0.5)])
def test_plan_rejects_invalid(bad):
    with pytest.raises(ValueError):
        nufft.make_plan(**bad)


# ---------------------------------------------------------------------------
# type 1
# ---------------------------------------------------------------------------

def test_type1_single_point_at_origin():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    F = nufft.type1(plan, np.zeros((1, 3)), np.ones(1))
    assert np.max(np.abs(F.coeffs - 1.0)) <= 10 * plan.eps


def test_type1_empty_input():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    F = nufft.type1(plan, np.zeros((0, 3)), np.zeros(0))
    assert np.all(F.coeffs == 0)


def test_type1_matches_direct_oracle():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(11)
    pts = rng.random((50, 3)) * plan.L
    c = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    F = nufft.type1(plan, pts, c)
    Fd = nufft.direct_type1(plan, pts, c)
    assert rel_max(F.coeffs, Fd.coeffs) <= 10 * plan.eps


def test_type1_conjugate_symmetry_for_real_strengths():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(12)
    pts = rng.random((40, 3)) * plan.L
    F = nufft.type1(plan, pts, rng.standard_normal(40))
    assert hermitian_mismatch(F.coeffs) <= 1e-13 * np.max(np.abs(F.coeffs))


def test_type1_rejects_nonfinite():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    with pytest.raises(ValueError):
        nufft.type1(plan, np.array([[np.nan, 0, 0]]), np.ones(1))
    with pytest.raises(ValueError):
        nufft.type1(plan, np.zeros((1, 3)), np.array([np.inf]))


# ---------------------------------------------------------------------------
# type 2
# ---------------------------------------------------------------------------

def test_type2_constant_field():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    N = plan.N
    f = np.zeros((N, N, N), complex)
    f[N // 2, N // 2, N // 2] = 2.5 - 0.5j
    rng = np.random.default_rng(13)
    pts = rng.random((20, 3)) * plan.L
    v = nufft.type2(plan, f, pts)
    assert np.max(np.abs(v - (2.5 - 0.5j))) <= 10 * plan.eps * 2.6


def test_type2_zero_modes():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    pts = np.random.default_rng(14).random((10, 3)) * plan.L
    v = nufft.type2(plan, np.zeros((8, 8, 8), complex), pts)
    assert np.all(v == 0)


def test_type2_matches_direct_oracle():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(15)
    f = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    pts = rng.random((50, 3)) * plan.L
    assert rel_max(nufft.type2(plan, f, pts), nufft.direct_type2(plan, f, pts)) \
        <= 10 * plan.eps


@pytest.mark.parametrize("eps", [1e-3, 1e-7, 1e-12])
def test_accuracy_sweep_small(eps):
    # fuller N x eps sweep runs in the acceptance suite
    plan = nufft.make_plan(8, 2 * np.pi, eps)
    rng = np.random.default_rng(16)
    pts = rng.random((200, 3)) * plan.L
    c = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    assert rel_max(nufft.type1(plan, pts, c).coeffs,
                   nufft.direct_type1(plan, pts, c).coeffs) <= 10 * eps
    f = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    assert rel_max(nufft.type2(plan, f, pts),
                   nufft.direct_type2(plan, f, pts)) <= 10 * eps


# ---------------------------------------------------------------------------
# direct oracles
# ---------------------------------------------------------------------------

def test_direct_type1_point_at_origin_exact():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    F = nufft.direct_type1(plan, np.zeros((1, 3)), np.ones(1))
    assert np.array_equal(F.coeffs, np.ones((8, 8, 8), complex))


def test_direct_type2_unit_impulse():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    N = plan.N
    f = np.zeros((N, N, N), complex)
    f[N // 2 + 2, N // 2 - 1, N // 2] = 1.0  # mode m = (2, -1, 0)
    x = np.array([[0.3, 1.1, 2.0]])
    k = np.array([2.0, -1.0, 0.0]) * (2 * np.pi / plan.L)
    v = nufft.direct_type2(plan, f, x)
    assert v[0] == pytest.approx(np.exp(1j * k @ x[0]), abs=1e-14)


def test_direct_adjoint_identity():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    rng = np.random.default_rng(17)
    pts = rng.random((64, 3)) * plan.L
    c = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    f = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    lhs = np.vdot(f.ravel(), nufft.direct_type1(plan, pts, c).coeffs.ravel())
    rhs = np.vdot(nufft.direct_type2(plan, f, pts), c)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_direct_transform_dispatch():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    pts = np.zeros((1, 3))
    F = nufft.direct_transform(plan, "type1", pts, np.ones(1))
    assert isinstance(F, FourierField)
    with pytest.raises(ValueError):
        nufft.direct_transform(plan, "sideways", pts)


# ---------------------------------------------------------------------------
# distributed FFT
# ---------------------------------------------------------------------------

def test_distributed_fft_single_rank_equals_serial():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, 1)
    rng = np.random.default_rng(20)
    g = rng.standard_normal((16, 16, 16)) + 1j * rng.standard_normal((16, 16, 16))

    def program(ctx):
        return nufft.distributed_fft(ctx.world, layout, g, "forward")

    out = spawn_spmd(1, program)[0]
    assert np.array_equal(out, np.fft.fftn(g))


@pytest.mark.parametrize("P", [2, 4])
def test_distributed_fft_round_trip(P):
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, P)
    rng = np.random.default_rng(21)
    g = rng.standard_normal((16, 16, 16)) + 1j * rng.standard_normal((16, 16, 16))

    def program(ctx):
        z0 = layout.offsets[ctx.world_rank]
        z1 = z0 + layout.counts[ctx.world_rank]
        local = g[:, :, z0:z1]
        fwd = nufft.distributed_fft(ctx.world, layout, local, "forward")
        back = nufft.distributed_fft(ctx.world, layout, fwd, "inverse")
        return fwd, back

    results = spawn_spmd(P, program)
    fwd = np.concatenate([r[0] for r in results], axis=2)
    back = np.concatenate([r[1] for r in results], axis=2)
    serial = np.fft.fftn(g)
    assert np.max(np.abs(fwd - serial)) <= 1e-13 * np.max(np.abs(serial))
    assert np.max(np.abs(back - g)) <= 1e-13 * np.max(np.abs(g))


def test_distributed_fft_delta_gives_flat_spectrum():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    P = 2
    layout = nufft.make_slab_layout(plan, P)

    def program(ctx):
        z0 = layout.offsets[ctx.world_rank]
        local = np.zeros((16, 16, layout.counts[ctx.world_rank]), complex)
        if z0 == 0:
            local[0, 0, 0] = 1.0
        return nufft.distributed_fft(ctx.world, layout, local, "forward")

    results = spawn_spmd(P, program)
    full = np.concatenate(results, axis=2)
    assert np.max(np.abs(full - 1.0)) <= 1e-13


# ---------------------------------------------------------------------------
# distributed type 1 / type 2
# ---------------------------------------------------------------------------

def _split_by_slab(layout, pts, L):
    owner = nufft.slab_owner(layout, pts[:, 2], L)
    return [np.flatnonzero(owner == r) for r in range(layout.ranks)]


def test_dd_type1_single_rank_is_serial():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, 1)
    rng = np.random.default_rng(22)
    pts = rng.random((30, 3)) * plan.L
    c = rng.standard_normal(30)

    def program(ctx):
        local = nufft.dd_type1(ctx.world, layout, plan, pts, c)
        return nufft.gather_local_modes(ctx.world, local)

    full = spawn_spmd(1, program)[0]
    serial = nufft.type1(plan, pts, c)
    assert np.array_equal(full.coeffs, serial.coeffs)


@pytest.mark.parametrize("P", [2, 4])
def test_dd_type1_matches_serial(P):
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, P)
    rng = np.random.default_rng(23)
    pts = rng.random((300, 3)) * plan.L
    # place some particles exactly on slab boundary planes
    h = plan.L / plan.n_up
    for r in range(P):
        pts[r, 2] = layout.offsets[r] * h
    c = rng.standard_normal(300)
    parts = _split_by_slab(layout, pts, plan.L)

    def program(ctx):
        idx = parts[ctx.world_rank]
        local = nufft.dd_type1(ctx.world, layout, plan, pts[idx], c[idx])
        return nufft.gather_local_modes(ctx.world, local)

    full = spawn_spmd(P, program)[0]
    serial = nufft.type1(plan, pts, c)
    assert rel_max(full.coeffs, serial.coeffs) <= 1e-12


def test_dd_type1_rejects_foreign_points():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, 2)
    pts = np.array([[0.1, 0.1, 0.1]])  # owned by rank 0 only

    def program(ctx):
        nufft.dd_type1(ctx.world, layout, plan, pts, np.ones(1))

    from pifsim.comm import RankFailedError
    with pytest.raises(RankFailedError):
        spawn_spmd(2, program, watchdog=5.0)


@pytest.mark.parametrize("P", [2, 4])
def test_dd_type2_matches_serial(P):
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    layout = nufft.make_slab_layout(plan, P)
    rng = np.random.default_rng(24)
    f = rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8))
    pts = rng.random((300, 3)) * plan.L
    parts = _split_by_slab(layout, pts, plan.L)
    serial = nufft.type2(plan, f, pts)

    def program(ctx):
        r = ctx.world_rank
        mz, _ = nufft.owned_mode_planes(plan, layout, r)
        local = nufft.LocalModes(plan.N, plan.L, mz,
                                 np.ascontiguousarray(f[:, :, mz + plan.N // 2]))
        return nufft.dd_type2(ctx.world, layout, plan, local, pts[parts[r]])

    results = spawn_spmd(P, program)
    got = np.empty(pts.shape[0], complex)
    for r in range(P):
        got[parts[r]] = results[r]
    assert rel_max(got, serial) <= 1e-12


def test_dd_type2_constant_field_every_rank():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)
    P = 4
    layout = nufft.make_slab_layout(plan, P)
    N = plan.N
    f = np.zeros((N, N, N), complex)
    f[N // 2, N // 2, N // 2] = 3.0
    rng = np.random.default_rng(25)
    pts = rng.random((100, 3)) * plan.L
    parts = _split_by_slab(layout, pts, plan.L)

    def program(ctx):
        r = ctx.world_rank
        mz, _ = nufft.owned_mode_planes(plan, layout, r)
        local = nufft.LocalModes(plan.N, plan.L, mz,
                                 np.ascontiguousarray(f[:, :, mz + plan.N // 2]))
        return nufft.dd_type2(ctx.world, layout, plan, local, pts[parts[r]])

    for vals in spawn_spmd(P, program):
        assert np.max(np.abs(vals - 3.0)) <= 10 * plan.eps * 3.0


def test_slab_layout_validation():
    plan = nufft.make_plan(8, 2 * np.pi, 1e-7)  # n_up=16, halo=4
    with pytest.raises(ValueError):
        nufft.make_slab_layout(plan, 8)  # depth 2 < halo 4
