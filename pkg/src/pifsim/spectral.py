"""Fourier-space field container, Poisson solve, and spectral diagnostics.

Mode convention: per dimension m in [-N/2, N/2-1], physical wavenumber
k = 2*pi*m/L, stored as an (N, N, N) complex array whose C-order flattening
is the lexicographic order of (m_x, m_y, m_z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class FourierField:
    N: int
    L: float
    coeffs: np.ndarray        # (N, N, N) complex128
    units: str = "generic"    # e.g. charge-density | field-component

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (self.N, self.N, self.N):
            raise ValueError(
                f"coefficient block {self.coeffs.shape} does not match N={self.N}"
            )

    def copy(self) -> "FourierField":
        return FourierField(self.N, self.L, self.coeffs.copy(), self.units)


def mode_ints(N: int) -> np.ndarray:
    """Integer mode numbers m = -N/2 .. N/2-1 in storage order."""
    return np.arange(N) - N // 2


def mode_matrix(N: int, L: float) -> np.ndarray:
    """(N^3, 3) physical wavevectors in lexicographic storage order."""
    m = mode_ints(N)
    mx, my, mz = np.meshgrid(m, m, m, indexing="ij")
    return (2.0 * np.pi / L) * np.stack(
        [mx.ravel(), my.ravel(), mz.ravel()], axis=1
    ).astype(np.float64)


def mode_vector(N: int, L: float, lex_index: int) -> np.ndarray:
    """Wavevector of the mode at a lexicographic index."""
    if not 0 <= lex_index < N**3:
        raise ValueError(f"index {lex_index} out of range for N={N}")
    ix, rem = divmod(lex_index, N * N)
    iy, iz = divmod(rem, N)
    m = np.array([ix, iy, iz]) - N // 2
    return (2.0 * np.pi / L) * m


def wavenumber_grids(N: int, L: float):
    """Broadcastable (kx, ky, kz) arrays over the (N, N, N) mode block."""
    k1 = (2.0 * np.pi / L) * mode_ints(N).astype(np.float64)
    return k1[:, None, None], k1[None, :, None], k1[None, None, :]


def poisson_efield(rho: FourierField) -> tuple[FourierField, FourierField, FourierField]:
    """Electric field modes E_k = -i k / |k|^2 rho_k with the k=0 mode zeroed.

    The zero mode carries the neutralizing-background mean and produces no
    field (normalized units, vacuum permittivity absorbed).
    """
    N, L = rho.N, rho.L
    kx, ky, kz = wavenumber_grids(N, L)
    k2 = kx * kx + ky * ky + kz * kz
    zero = N // 2
    k2[zero, zero, zero] = 1.0  # placeholder; the k=0 entry is zeroed below
    g = rho.coeffs * (-1j / k2)
    ex, ey, ez = kx * g, ky * g, kz * g
    for comp in (ex, ey, ez):
        comp[zero, zero, zero] = 0.0
    return (
        FourierField(N, L, ex, "field-component"),
        FourierField(N, L, ey, "field-component"),
        FourierField(N, L, ez, "field-component"),
    )


def field_energy(Ex: FourierField, Ey: FourierField, Ez: FourierField) -> float:
    """(1/2) integral |E|^2 dx evaluated by Parseval: (L^3/2) sum_k |E_k|^2."""
    total = 0.0
    for f in (Ex, Ey, Ez):
        c = f.coeffs.ravel()
        total += np.vdot(c, c).real
    return 0.5 * Ex.L**3 * total


def hermitian_mismatch(coeffs: np.ndarray) -> float:
    """Max |F[k] - conj(F[-k])| over paired modes (the -N/2 planes have no
    partner in the mode set and are exempt)."""
    a = coeffs[1:, 1:, 1:]
    b = coeffs[:0:-1, :0:-1, :0:-1]
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - np.conj(b))))
