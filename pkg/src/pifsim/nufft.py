"""Type-1/2 nonuniform FFTs on a periodic box, plus slab-distributed variants.

The transforms evaluate, to a requested tolerance eps,

    type 1:  F[k] = sum_j c_j exp(-i k.x_j)        (points -> modes)
    type 2:  v_j  = sum_{k in K_N} f_k exp(+i k.x_j)  (modes -> points)

over the mode set K_N = {2*pi/L * [-N/2 .. N/2-1]}^3, via spreading with an
exponential-of-semicircle window onto a sigma-upsampled grid, a uniform FFT,
and per-dimension deconvolution by the window transform (evaluated by
quadrature).  The pair is an exact adjoint: the same window and deconvolution
factors appear on both sides.

Direct summation oracles are provided for test-scale inputs, and the
slab-distributed variants (halo exchange + alltoall-transposed FFT) reproduce
the shared-memory results for any rank count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .comm import Comm
from .diag import NULL_TIMERS
from .spectral import FourierField, mode_ints, mode_matrix


@dataclass(frozen=True)
class WindowSpec:
    w: int          # support width in upsampled grid points
    sigma: float    # upsampling factor
    beta: float     # window shape parameter

    def __post_init__(self):
        if self.w < 2 or self.sigma < 1.25 or self.beta <= 0:
            raise ValueError(f"invalid window: {self}")


@dataclass(eq=False)
class NufftPlan:
    N: int
    L: float
    eps: float
    window: WindowSpec
    n_up: int
    deconv: np.ndarray = field(init=False)   # (N,) 1/psi_hat(k_m), per dimension
    _trunc: np.ndarray = field(init=False)   # fine-grid frequency index of mode m

    def __post_init__(self):
        psi_hat = _window_transform(self.window, self.n_up, self.N, self.L)
        if not np.all(np.isfinite(psi_hat)) or np.any(psi_hat <= 0):
            raise ValueError("window transform must be strictly positive over the band")
        self.deconv = 1.0 / psi_hat
        self._trunc = np.asarray(mode_ints(self.N) % self.n_up)

    @property
    def h(self) -> float:
        """Upsampled grid spacing."""
        return self.L / self.n_up


def make_plan(N: int, L: float, eps: float) -> NufftPlan:
    """Build a transform plan for N modes per dimension at tolerance eps.

    The window support follows w = ceil(|log10 eps|) + 1 (so eps=1e-7 gives
    w=8 and eps=1e-16 gives w=17), with sigma = 2 and beta = 2.30 w.
    """
    if N % 2 != 0 or N < 4:
        raise ValueError(f"N must be even and >= 4, got {N}")
    if not (1e-16 <= eps <= 1e-1):
        raise ValueError(f"eps out of range [1e-16, 1e-1]: {eps}")
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"invalid domain length {L}")
    # snap log10 of intended power-of-ten tolerances onto the integer
    w = math.ceil(abs(math.log10(eps)) - 1e-9) + 1
    sigma = 2.0
    window = WindowSpec(w=w, sigma=sigma, beta=2.30 * w)
    n_up = math.ceil(sigma * N)
    n_up += n_up % 2
    return NufftPlan(N=N, L=L, eps=eps, window=window, n_up=n_up)


def _window_transform(window: WindowSpec, n_up: int, N: int, L: float) -> np.ndarray:
    """psi_hat(k_m) = (1/L) int psi(x) exp(-i k x) dx by Gauss-Legendre.

    psi is the exponential-of-semicircle window exp(beta*(sqrt(1-t^2)-1))
    scaled to half-width alpha = w*h/2; even symmetry reduces the transform
    to a cosine integral over [0, alpha].
    """
    h = L / n_up
    alpha = 0.5 * window.w * h
    nodes, weights = np.polynomial.legendre.leggauss(80)
    u = 0.5 * (nodes + 1.0)          # map to [0, 1]
    gw = 0.5 * weights
    phi = np.exp(window.beta * (np.sqrt(np.maximum(1.0 - u * u, 0.0)) - 1.0))
    k = (2.0 * np.pi / L) * mode_ints(N)
    ck = np.cos(np.outer(k, alpha * u))
    return (2.0 * alpha / L) * (ck @ (gw * phi))


def _prep_points(points: np.ndarray, L: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (M, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite point coordinates")
    w = np.mod(pts, L)
    w[w >= L] -= L
    return np.ascontiguousarray(w)


def _apply_deconv(block: np.ndarray, dx, dy, dz) -> None:
    block *= dx[:, None, None]
    block *= dy[None, :, None]
    block *= dz[None, None, :]


def type1(plan: NufftPlan, points: np.ndarray, strengths: np.ndarray) -> FourierField:
    """Nonuniform points -> Fourier modes, accurate to O(eps)."""
    pts = _prep_points(points, plan.L)
    s = np.asarray(strengths)
    if s.shape != (pts.shape[0],):
        raise ValueError(f"strengths shape {s.shape} does not match {pts.shape[0]} points")
    if s.size and not np.all(np.isfinite(s)):
        raise ValueError("non-finite strengths")
    n = plan.n_up
    w, beta = plan.window.w, plan.window.beta
    if np.isrealobj(s):
        grid = np.zeros(n * n * n, dtype=np.float64)
        _kernels.spread_r(pts, np.ascontiguousarray(s, dtype=np.float64), grid,
                          n, plan.h, w, beta)
    else:
        grid = np.zeros(n * n * n, dtype=np.complex128)
        _kernels.spread_c(pts, np.ascontiguousarray(s, dtype=np.complex128), grid,
                          n, plan.h, w, beta)
    spectrum = np.fft.fftn(grid.reshape(n, n, n))
    j = plan._trunc
    block = np.ascontiguousarray(spectrum[np.ix_(j, j, j)])
    _apply_deconv(block, plan.deconv, plan.deconv, plan.deconv)
    block *= 1.0 / n**3
    return FourierField(plan.N, plan.L, block)


def _padded_spectrum(plan: NufftPlan, coeffs: np.ndarray) -> np.ndarray:
    """Deconvolved modes embedded into the fine grid's frequency layout."""
    n = plan.n_up
    d = np.array(coeffs, dtype=np.complex128)
    _apply_deconv(d, plan.deconv, plan.deconv, plan.deconv)
    pad = np.zeros((n, n, n), dtype=np.complex128)
    j = plan._trunc
    pad[np.ix_(j, j, j)] = d
    return pad


def type2(plan: NufftPlan, modes: FourierField | np.ndarray, points: np.ndarray) -> np.ndarray:
    """Fourier modes -> values at nonuniform points, accurate to O(eps)."""
    coeffs = modes.coeffs if isinstance(modes, FourierField) else np.asarray(modes)
    if coeffs.shape != (plan.N, plan.N, plan.N):
        raise ValueError(f"modes shape {coeffs.shape} does not match N={plan.N}")
    if not np.all(np.isfinite(coeffs.view(np.float64))):
        raise ValueError("non-finite mode coefficients")
    pts = _prep_points(points, plan.L)
    # the 1/n^3 of the inverse DFT cancels the n^3 of the deconvolution
    u = np.fft.ifftn(_padded_spectrum(plan, coeffs))
    out = np.empty(pts.shape[0], dtype=np.complex128)
    _kernels.interp_c(pts, u.ravel(), out, plan.n_up, plan.h,
                      plan.window.w, plan.window.beta)
    return out


def gather3_real(plan: NufftPlan, components, points: np.ndarray) -> np.ndarray:
    """Fused type-2 of three mode blocks, keeping only real parts.

    Hot path for electric-field interpolation: the imaginary content of a
    Hermitian field is discarded before windowing, which halves the work.
    """
    pts = _prep_points(points, plan.L)
    grids = []
    for coeffs in components:
        u = np.fft.ifftn(_padded_spectrum(plan, coeffs))
        grids.append(np.ascontiguousarray(u.real).ravel())
    out = np.empty((pts.shape[0], 3), dtype=np.float64)
    _kernels.interp_r3(pts, grids[0], grids[1], grids[2], out,
                       plan.n_up, plan.h, plan.window.w, plan.window.beta)
    return out


# ---------------------------------------------------------------------------
# Direct-sum oracles (test scale)
# ---------------------------------------------------------------------------

_DIRECT_CHUNK = 2048


def direct_type1(plan: NufftPlan, points: np.ndarray, strengths: np.ndarray) -> FourierField:
    """Exact double-precision evaluation of the type-1 defining sum."""
    pts = _prep_points(points, plan.L)
    s = np.asarray(strengths, dtype=np.complex128)
    K = mode_matrix(plan.N, plan.L)
    acc = np.zeros(K.shape[0], dtype=np.complex128)
    for lo in range(0, pts.shape[0], _DIRECT_CHUNK):
        chunk = pts[lo : lo + _DIRECT_CHUNK]
        phase = chunk @ K.T
        acc += np.exp(-1j * phase).T @ s[lo : lo + chunk.shape[0]]
    return FourierField(plan.N, plan.L, acc.reshape(plan.N, plan.N, plan.N))


def direct_type2(plan: NufftPlan, modes: FourierField | np.ndarray, points: np.ndarray) -> np.ndarray:
    """Exact double-precision evaluation of the type-2 defining sum."""
    coeffs = modes.coeffs if isinstance(modes, FourierField) else np.asarray(modes)
    pts = _prep_points(points, plan.L)
    K = mode_matrix(plan.N, plan.L)
    f = coeffs.ravel().astype(np.complex128)
    out = np.empty(pts.shape[0], dtype=np.complex128)
    for lo in range(0, pts.shape[0], _DIRECT_CHUNK):
        chunk = pts[lo : lo + _DIRECT_CHUNK]
        out[lo : lo + chunk.shape[0]] = np.exp(1j * (chunk @ K.T)) @ f
    return out


def direct_transform(plan: NufftPlan, direction: str, *args):
    """Dispatch to the direct-sum oracle for either transform direction."""
    if direction == "type1":
        return direct_type1(plan, *args)
    if direction == "type2":
        return direct_type2(plan, *args)
    raise ValueError(f"direction must be 'type1' or 'type2', got {direction!r}")


# ---------------------------------------------------------------------------
# Slab decomposition (z axis) and distributed transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabLayout:
    """1D partition of the upsampled grid along z, with halo depth."""

    n: int                 # fine grid points per dimension
    counts: tuple          # owned z-planes per rank
    offsets: tuple         # first owned z-plane per rank
    halo: int              # ghost planes on each side
    axis: int = 2

    @property
    def ranks(self) -> int:
        return len(self.counts)


def make_slab_layout(plan: NufftPlan, num_ranks: int) -> SlabLayout:
    n = plan.n_up
    halo = (plan.window.w + 1) // 2
    if num_ranks < 1 or num_ranks > n:
        raise ValueError(f"cannot split {n} planes over {num_ranks} ranks")
    base, extra = divmod(n, num_ranks)
    counts = tuple(base + (1 if r < extra else 0) for r in range(num_ranks))
    offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(counts)[:-1]]))
    if num_ranks > 1 and min(counts) < halo:
        raise ValueError(
            f"slab depth {min(counts)} shallower than halo {halo}; use fewer ranks"
        )
    return SlabLayout(n=n, counts=counts, offsets=offsets, halo=halo)


def slab_owner(layout: SlabLayout, z: np.ndarray, L: float) -> np.ndarray:
    """Rank owning each z coordinate (positions must be wrapped to [0, L))."""
    plane = np.minimum((np.asarray(z) * (layout.n / L)).astype(np.int64), layout.n - 1)
    return np.searchsorted(layout.offsets, plane, side="right") - 1


def _balanced(n: int, parts: int):
    base, extra = divmod(n, parts)
    counts = [base + (1 if r < extra else 0) for r in range(parts)]
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    return counts, offsets


def _transpose_z_to_x(comm: Comm, layout: SlabLayout, local: np.ndarray) -> np.ndarray:
    """(n, n, zcnt) z-slab -> (xcnt, n, n) x-slab with full z."""
    P = comm.size
    n = layout.n
    xcounts, xoffsets = _balanced(n, P)
    send = [
        np.ascontiguousarray(local[xoffsets[r] : xoffsets[r] + xcounts[r], :, :])
        for r in range(P)
    ]
    recv = comm.alltoall(send)
    out = np.empty((xcounts[comm.rank], n, n), dtype=np.complex128)
    for r in range(P):
        out[:, :, layout.offsets[r] : layout.offsets[r] + layout.counts[r]] = recv[r]
    return out


def _transpose_x_to_z(comm: Comm, layout: SlabLayout, local: np.ndarray) -> np.ndarray:
    """(xcnt, n, n) x-slab -> (n, n, zcnt) z-slab."""
    P = comm.size
    n = layout.n
    xcounts, xoffsets = _balanced(n, P)
    send = [
        np.ascontiguousarray(local[:, :, layout.offsets[r] : layout.offsets[r] + layout.counts[r]])
        for r in range(P)
    ]
    recv = comm.alltoall(send)
    out = np.empty((n, n, layout.counts[comm.rank]), dtype=np.complex128)
    for r in range(P):
        out[xoffsets[r] : xoffsets[r] + xcounts[r], :, :] = recv[r]
    return out


def distributed_fft(comm: Comm, layout: SlabLayout, local_grid: np.ndarray,
                    direction: str, timers=NULL_TIMERS) -> np.ndarray:
    """3D DFT of the globally assembled grid, slab decomposed along z.

    Local 2D transforms in the undivided axes, an alltoall transpose, 1D
    transforms along z, and a transpose back; the result keeps the input
    slab layout.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be forward|inverse, got {direction!r}")
    zcnt = layout.counts[comm.rank]
    if local_grid.shape != (layout.n, layout.n, zcnt):
        raise ValueError(
            f"local grid {local_grid.shape} inconsistent with layout "
            f"({layout.n}, {layout.n}, {zcnt})"
        )
    local = np.ascontiguousarray(local_grid, dtype=np.complex128)
    if comm.size == 1:
        return np.fft.fftn(local) if direction == "forward" else np.fft.ifftn(local)
    if direction == "forward":
        a = np.fft.fft2(local, axes=(0, 1))
        with timers.section("FftAlltoall"):
            b = _transpose_z_to_x(comm, layout, a)
        b = np.fft.fft(b, axis=2)
        with timers.section("FftAlltoall"):
            return _transpose_x_to_z(comm, layout, b)
    with timers.section("FftAlltoall"):
        b = _transpose_z_to_x(comm, layout, local)
    b = np.fft.ifft(b, axis=2)
    with timers.section("FftAlltoall"):
        c = _transpose_x_to_z(comm, layout, b)
    return np.fft.ifft2(c, axes=(0, 1))


@dataclass(eq=False)
class LocalModes:
    """This rank's share of a FourierField under the slab mode partition.

    Plane ownership follows the fine-grid frequency layout: mode m_z lives on
    the rank whose slab contains m_z mod n_up.
    """

    N: int
    L: float
    mz: np.ndarray        # (nloc,) integer z mode numbers owned here
    coeffs: np.ndarray    # (N, N, nloc) complex


def owned_mode_planes(plan: NufftPlan, layout: SlabLayout, rank: int):
    """(mz values, fine-grid z indices) of the mode planes owned by `rank`."""
    z0 = layout.offsets[rank]
    z1 = z0 + layout.counts[rank]
    m = mode_ints(plan.N)
    j = m % plan.n_up
    sel = (j >= z0) & (j < z1)
    return m[sel], j[sel]


def gather_local_modes(comm: Comm, local: LocalModes) -> FourierField | None:
    """Assemble the distributed mode planes on rank 0 (test/diagnostic aid)."""
    payload = {"mz": local.mz, "coeffs": local.coeffs}
    if comm.rank != 0:
        comm.send(0, payload)
        return None
    full = np.zeros((local.N, local.N, local.N), dtype=np.complex128)
    parts = [payload] + [comm.recv(src) for src in range(1, comm.size)]
    for part in parts:
        idx = part["mz"] + local.N // 2
        full[:, :, idx] = part["coeffs"]
    return FourierField(local.N, local.L, full)


def _exchange_deposit_halos(comm: Comm, layout: SlabLayout, buf: np.ndarray) -> np.ndarray:
    """Fold halo contributions onto their owning ranks; returns owned planes."""
    rank, P = comm.rank, comm.size
    halo = layout.halo
    zcnt = layout.counts[rank]
    zoff = layout.offsets[rank]
    left = (rank - 1) % P
    right = (rank + 1) % P
    comm.send(left, {"start": zoff - halo, "block": np.ascontiguousarray(buf[:, :, :halo])})
    comm.send(right, {"start": zoff + zcnt, "block": np.ascontiguousarray(buf[:, :, halo + zcnt :])})
    owned = buf[:, :, halo : halo + zcnt].copy()
    for msg in (comm.recv(left), comm.recv(right)):
        g = (msg["start"] + np.arange(halo)) % layout.n
        local = g - zoff
        if np.any(local < 0) or np.any(local >= zcnt):
            raise ValueError("halo block crosses a non-neighbor slab")
        owned[:, :, local] += msg["block"]
    return owned


def _exchange_field_halos(comm: Comm, layout: SlabLayout, owned: np.ndarray) -> np.ndarray:
    """Extend owned planes with neighbor edge planes for interpolation."""
    rank, P = comm.rank, comm.size
    halo = layout.halo
    zcnt = layout.counts[rank]
    left = (rank - 1) % P
    right = (rank + 1) % P
    # my bottom planes complete the left neighbor's top halo and vice versa
    comm.send(left, {"edge": "top", "block": np.ascontiguousarray(owned[:, :, :halo])})
    comm.send(right, {"edge": "bottom", "block": np.ascontiguousarray(owned[:, :, zcnt - halo :])})
    buf = np.empty((layout.n, layout.n, zcnt + 2 * halo), dtype=np.complex128)
    buf[:, :, halo : halo + zcnt] = owned
    for msg in (comm.recv(left), comm.recv(right)):
        if msg["edge"] == "bottom":
            buf[:, :, :halo] = msg["block"]
        else:
            buf[:, :, halo + zcnt :] = msg["block"]
    return buf


def _check_points_in_slab(layout: SlabLayout, rank: int, pts: np.ndarray, L: float):
    owner = slab_owner(layout, pts[:, 2], L)
    if np.any(owner != rank):
        bad = int(np.argmax(owner != rank))
        raise ValueError(
            f"point {bad} (z={pts[bad, 2]}) not owned by rank {rank}; "
            "migration must precede deposition"
        )


def dd_type1(comm: Comm, layout: SlabLayout, plan: NufftPlan,
             points: np.ndarray, strengths: np.ndarray,
             timers=NULL_TIMERS) -> LocalModes:
    """Slab-distributed type 1: local spreading, halo fold, distributed FFT."""
    if comm.size == 1:
        full = type1(plan, points, strengths)
        mz, _ = owned_mode_planes(plan, layout, 0)
        return LocalModes(plan.N, plan.L, mz, np.ascontiguousarray(
            full.coeffs[:, :, mz + plan.N // 2]))
    pts = _prep_points(points, plan.L)
    _check_points_in_slab(layout, comm.rank, pts, plan.L)
    s = np.ascontiguousarray(strengths, dtype=np.complex128)
    n = layout.n
    halo = layout.halo
    zcnt = layout.counts[comm.rank]
    zoff = layout.offsets[comm.rank]
    nzbuf = zcnt + 2 * halo
    buf = np.zeros(n * n * nzbuf, dtype=np.complex128)
    _kernels.spread_slab_c(pts, s, buf, n, nzbuf, zoff - halo, plan.h,
                           plan.window.w, plan.window.beta)
    with timers.section("FieldHalo"):
        owned = _exchange_deposit_halos(comm, layout, buf.reshape(n, n, nzbuf))
    spectrum = distributed_fft(comm, layout, owned, "forward", timers)
    mz, j = owned_mode_planes(plan, layout, comm.rank)
    block = np.ascontiguousarray(spectrum[np.ix_(plan._trunc, plan._trunc, j - zoff)])
    _apply_deconv(block, plan.deconv, plan.deconv, plan.deconv[mz + plan.N // 2])
    block *= 1.0 / plan.n_up**3
    return LocalModes(plan.N, plan.L, mz, block)


def dd_type2(comm: Comm, layout: SlabLayout, plan: NufftPlan,
             local_modes: LocalModes, points: np.ndarray,
             timers=NULL_TIMERS) -> np.ndarray:
    """Slab-distributed type 2: distributed inverse FFT, halo extend, gather."""
    if comm.size == 1:
        full = np.zeros((plan.N,) * 3, dtype=np.complex128)
        full[:, :, local_modes.mz + plan.N // 2] = local_modes.coeffs
        return type2(plan, full, points)
    pts = _prep_points(points, plan.L)
    _check_points_in_slab(layout, comm.rank, pts, plan.L)
    n = layout.n
    zcnt = layout.counts[comm.rank]
    zoff = layout.offsets[comm.rank]
    mz, j = owned_mode_planes(plan, layout, comm.rank)
    if not np.array_equal(mz, local_modes.mz):
        raise ValueError("local mode planes do not match the slab layout")
    d = np.array(local_modes.coeffs, dtype=np.complex128)
    _apply_deconv(d, plan.deconv, plan.deconv, plan.deconv[mz + plan.N // 2])
    pad = np.zeros((n, n, zcnt), dtype=np.complex128)
    pad[np.ix_(plan._trunc, plan._trunc, j - zoff)] = d
    u = distributed_fft(comm, layout, pad, "inverse", timers)
    with timers.section("FieldHalo"):
        buf = _exchange_field_halos(comm, layout, u)
    out = np.empty(pts.shape[0], dtype=np.complex128)
    _kernels.interp_slab_c(pts, np.ascontiguousarray(buf).ravel(), out, n,
                           zcnt + 2 * layout.halo, zoff - layout.halo,
                           plan.h, plan.window.w, plan.window.beta)
    return out
