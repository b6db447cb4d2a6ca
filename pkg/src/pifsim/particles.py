"""Macro-particle ensemble container shared by the physics and comm layers."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class ParticleEnsemble:
    """Lagrangian state of a (possibly rank-local) set of macro-particles.

    ``total_charge``/``total_mass``/``global_count`` describe the *global*
    ensemble and are carried unchanged through partitioning, migration and
    messaging so that charge conservation checks can be bit-exact.
    """

    x: np.ndarray            # (count, 3) positions, wrapped into [0, L)
    v: np.ndarray            # (count, 3) velocities
    ids: np.ndarray          # (count,) int64 globally unique identifiers
    q_per_particle: float    # uniform macro-particle charge
    m_per_particle: float    # uniform macro-particle mass
    total_charge: float      # global sum of charges, exact by construction
    total_mass: float
    global_count: int

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        n = self.x.shape[0]
        if self.x.shape != (n, 3) or self.v.shape != (n, 3) or self.ids.shape != (n,):
            raise ValueError(
                f"inconsistent particle batch: x{self.x.shape} v{self.v.shape} ids{self.ids.shape}"
            )

    @property
    def count(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "ParticleEnsemble":
        return replace(self, x=self.x.copy(), v=self.v.copy(), ids=self.ids.copy())

    def take(self, index) -> "ParticleEnsemble":
        return replace(self, x=self.x[index], v=self.v[index], ids=self.ids[index])

    def sort_by_id(self) -> "ParticleEnsemble":
        order = np.argsort(self.ids, kind="stable")
        return self.take(order)

    @staticmethod
    def concat(parts: list["ParticleEnsemble"]) -> "ParticleEnsemble":
        if not parts:
            raise ValueError("concat of zero parts")
        head = parts[0]
        return replace(
            head,
            x=np.concatenate([p.x for p in parts], axis=0),
            v=np.concatenate([p.v for p in parts], axis=0),
            ids=np.concatenate([p.ids for p in parts]),
        )


def wrap_positions(x: np.ndarray, L: float) -> np.ndarray:
    """Wrap coordinates into [0, L), guarding the x % L == L float edge case."""
    w = np.mod(x, L)
    # mod of a tiny negative value can round up to exactly L
    w[w >= L] -= L
    return w


def minimum_image(delta: np.ndarray, L: float) -> np.ndarray:
    """Shortest periodic representative of coordinate differences."""
    return delta - L * np.round(delta / L)
