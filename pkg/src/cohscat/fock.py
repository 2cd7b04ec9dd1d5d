"""Truncated Fock-space operators for one cavity mode and N mechanical modes.

Mode order is fixed: the cavity first (if present), then mechanical modes
in particle order.  Operators are dense ``complex128`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .params import DerivedParams


@dataclass(frozen=True)
class SpaceLayout:
    """Cutoffs of the truncated tensor-product space.

    ``cavity_cutoff=None`` drops the cavity and gives the purely
    mechanical space used by the reduced model.
    """

    mech_cutoffs: tuple[int, ...]
    cavity_cutoff: int | None = 1

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.mech_cutoffs)
        if not cutoffs:
            raise ValueError("at least one mechanical mode is required")
        if any(c < 1 for c in cutoffs):
            raise ValueError("mechanical cutoffs must be >= 1")
        if self.cavity_cutoff is not None and int(self.cavity_cutoff) < 1:
            raise ValueError("cavity cutoff must be >= 1")
        object.__setattr__(self, "mech_cutoffs", cutoffs)

    @classmethod
    def uniform(cls, n_particles: int, mech_cutoff: int = 3,
                cavity_cutoff: int | None = 1) -> "SpaceLayout":
        return cls((mech_cutoff,) * n_particles, cavity_cutoff)

    @property
    def has_cavity(self) -> bool:
        return self.cavity_cutoff is not None

    @property
    def n_particles(self) -> int:
        return len(self.mech_cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        mech = tuple(c + 1 for c in self.mech_cutoffs)
        return ((self.cavity_cutoff + 1,) + mech) if self.has_cavity else mech

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def mechanical(self) -> "SpaceLayout":
        return SpaceLayout(self.mech_cutoffs, None)

    def mode_index(self, particle: int) -> int:
        if not 0 <= particle < self.n_particles:
            raise IndexError(f"particle index {particle} out of range")
        return particle + (1 if self.has_cavity else 0)

    def basis_index(self, occupations: Sequence[int]) -> int:
        """Flat index of a product Fock state, occupations in mode order."""
        return int(np.ravel_multi_index(tuple(occupations), self.dims))


def destroy(cutoff: int) -> np.ndarray:
    """Single-mode annihilation operator on {|0>, ..., |cutoff>}."""
    return np.diag(np.sqrt(np.arange(1, cutoff + 1)), 1).astype(complex)


def ladder(layout: SpaceLayout, mode: int) -> np.ndarray:
    """Annihilation operator of ``mode`` (position in mode order) on the full space."""
    dims = layout.dims
    if not 0 <= mode < len(dims):
        raise IndexError(f"mode {mode} out of range for {len(dims)} modes")
    factors = [destroy(d - 1) if k == mode else np.eye(d, dtype=complex)
               for k, d in enumerate(dims)]
    return reduce(np.kron, factors)


def cavity_op(layout: SpaceLayout) -> np.ndarray:
    if not layout.has_cavity:
        raise IndexError("layout has no cavity mode")
    return ladder(layout, 0)


def mech_op(layout: SpaceLayout, particle: int) -> np.ndarray:
    return ladder(layout, layout.mode_index(particle))


def collective_op(layout: SpaceLayout) -> np.ndarray:
    """A = a_1 + ... + a_N."""
    return sum(mech_op(layout, j) for j in range(layout.n_particles))


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def build_hamiltonian(layout: SpaceLayout, dp: DerivedParams, detuning: float) -> np.ndarray:
    """H/hbar = -Delta b^dag b + sum_j w_j a_j^dag a_j - sum_j g_j (b + b^dag)(a_j + a_j^dag)."""
    if layout.n_particles != dp.n_particles:
        raise ValueError("layout and parameters disagree on the number of particles")
    b = cavity_op(layout)
    H = -detuning * (dag(b) @ b)
    x_cav = b + dag(b)
    for j in range(layout.n_particles):
        a = mech_op(layout, j)
        H = H + dp.trap_frequency[j] * (dag(a) @ a)
        H = H - dp.coupling[j] * (x_cav @ (a + dag(a)))
    return (H + dag(H)) / 2


def build_collapse_ops(layout: SpaceLayout, dp: DerivedParams) -> list[tuple[float, np.ndarray]]:
    """Dissipators of the full model as ``(rate, operator)`` pairs.

    Cavity loss at rate ``2 kappa`` on ``b``, then for every particle
    Rayleigh-scattering recoil at ``gamma_sc`` on both ``a_j`` and ``a_j^dag``.
    """
    ops = [(2 * dp.cavity_linewidth, cavity_op(layout))]
    for j in range(layout.n_particles):
        a = mech_op(layout, j)
        ops.append((float(dp.scattering_rate[j]), a))
        ops.append((float(dp.scattering_rate[j]), dag(a)))
    return ops


def thermal_populations(cutoff: int, occupation: float) -> np.ndarray:
    """Geometric populations with mean ``occupation``, renormalised on the cutoff."""
    if occupation < 0:
        raise ValueError("occupation must be nonnegative")
    if occupation == 0:
        p = np.zeros(cutoff + 1)
        p[0] = 1.0
        return p
    ratio = occupation / (1 + occupation)
    p = ratio ** np.arange(cutoff + 1)
    return p / p.sum()


def occupation_from_ground_population(p0: float) -> float:
    """Invert p0 = 1 / (1 + n)."""
    if not 0 < p0 <= 1:
        raise ValueError("ground-state population must lie in (0, 1]")
    return 1 / p0 - 1


def thermal_product_state(layout: SpaceLayout, occupations: Sequence[float]) -> np.ndarray:
    """Cavity vacuum times per-mode truncated thermal states."""
    if len(occupations) != layout.n_particles:
        raise ValueError("one occupation per mechanical mode is required")
    diag = [np.eye(1, layout.cavity_cutoff + 1).ravel()] if layout.has_cavity else []
    diag += [thermal_populations(c, n) for c, n in zip(layout.mech_cutoffs, occupations)]
    return np.diag(reduce(np.kron, diag)).astype(complex)


def fock_ket(layout: SpaceLayout, occupations: Sequence[int]) -> np.ndarray:
    psi = np.zeros(layout.dim, dtype=complex)
    psi[layout.basis_index(occupations)] = 1.0
    return psi


def single_excitation_state(layout: SpaceLayout, amplitudes: Sequence[complex] | None = None) -> np.ndarray:
    """Projector onto sum_j c_j |0..1_j..0> (cavity vacuum); equal weights give the W state."""
    n = layout.n_particles
    amps = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=complex)
    psi = np.zeros(layout.dim, dtype=complex)
    for j in range(n):
        occ = [0] * len(layout.dims)
        occ[layout.mode_index(j)] = 1
        psi += amps[j] * fock_ket(layout, occ)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    """tr(rho op)."""
    if rho.shape != op.shape:
        raise ValueError(f"layout mismatch: state {rho.shape} vs operator {op.shape}")
    return complex(np.einsum("ij,ji->", rho, op))


def partial_trace_cavity(rho: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    """Reduced mechanical state tr_b(rho)."""
    dc = layout.cavity_cutoff + 1
    dm = layout.dim // dc
    return np.einsum("aiaj->ij", rho.reshape(dc, dm, dc, dm))


def embed_mechanical(rho_mech: np.ndarray, layout: SpaceLayout, photons: int = 0) -> np.ndarray:
    """|photons><photons| (x) rho_mech on the full layout."""
    proj = np.zeros((layout.cavity_cutoff + 1,) * 2)
    proj[photons, photons] = 1.0
    return np.kron(proj, rho_mech).astype(complex)


def check_density_matrix(rho: np.ndarray, *, herm_tol: float = 1e-10, trace_tol: float = 1e-8,
                         eig_tol: float | None = 1e-8) -> None:
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix within tolerances."""
    herm = np.max(np.abs(rho - dag(rho)))
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: max|rho - rho^dag| = {herm:.3g}")
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr:.12g} differs from 1")
    if eig_tol is not None:
        lo = np.linalg.eigvalsh((rho + dag(rho)) / 2)[0]
        if lo < -eig_tol:
            raise ValueError(f"negative eigenvalue {lo:.3g}")
