"""Weak-coupling model: closed-form moments, conditioning, flux and witness bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .fock import SpaceLayout, collective_op, dag, mech_op
from .params import DerivedParams


class ConditioningError(ValueError):
    """The heralding operator annihilates the state (zero click probability)."""


@dataclass(frozen=True)
class MomentSet:
    """Second moments of N mechanical modes, optionally on a time axis.

    ``second[..., i, j] = <a_i^dag a_j>`` (Hermitian, occupations on the
    diagonal) and ``correlation[..., i, j] = <n_i n_j>`` for ``i != j``.
    Diagonal entries of ``correlation`` are not used.
    """

    second: np.ndarray
    correlation: np.ndarray
    time: np.ndarray | float = 0.0

    @property
    def occupations(self) -> np.ndarray:
        return np.real(np.diagonal(self.second, axis1=-2, axis2=-1))

    @property
    def n_particles(self) -> int:
        return self.second.shape[-1]

    def coherence(self, i: int, j: int) -> np.ndarray:
        """<a_i^dag a_j>."""
        return self.second[..., i, j]

    def with_zero_correlation(self) -> "MomentSet":
        return MomentSet(self.second, np.zeros_like(self.correlation), self.time)

    def check(self, tol: float = 1e-8) -> None:
        occ = self.occupations
        bound = occ[..., :, None] * occ[..., None, :] + tol
        if np.any(np.abs(self.second) ** 2 > bound):
            raise ValueError("coherences violate the Cauchy-Schwarz inequality")
        if not (np.all(np.isfinite(self.second)) and np.all(np.isfinite(self.correlation))):
            raise ValueError("non-finite moments")


def moments_from_state(rho: np.ndarray, layout: SpaceLayout) -> MomentSet:
    """Moments of a state on ``layout`` (cavity, if present, is traced implicitly)."""
    n = layout.n_particles
    a = [mech_op(layout, j) for j in range(n)]
    num = [dag(x) @ x for x in a]
    second = np.empty((n, n), complex)
    corr = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            second[i, j] = np.trace(rho @ dag(a[i]) @ a[j])
            if i != j:
                corr[i, j] = np.trace(rho @ num[i] @ num[j]).real
    return MomentSet(second, corr)


def _relax(rate_plus, gamma, t):
    """n (1 - e^{-gamma t}) written as gamma^+ t (1 - e^{-x}) / x; finite as gamma -> 0."""
    x = gamma * t
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(x == 0, 1.0, -np.expm1(-x) / np.where(x == 0, 1.0, x))
    return rate_plus * t * phi


def evolve_moments(m0: MomentSet, dp: DerivedParams, t) -> MomentSet:
    """Closed-form moments of N independent damped oscillators after time ``t``.

    Occupations relax to ``n_j`` at ``gamma_j``; coherences rotate at the
    spring-shifted frequency differences and decay at ``gamma_ij``; the
    occupation correlations follow from the occupations as
    ``K_t = K_0 e^{-(g_i+g_j)t} + u_i N_j0 e^{-g_j t} + u_j N_i0 e^{-g_i t} + u_i u_j``
    with ``u_j = n_j (1 - e^{-g_j t})``.  That grouping is algebraically
    identical to the usual four-term expression and stays finite when a
    damping rate vanishes.

    ``t`` may be an array; results then carry a leading time axis.
    """
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    gamma = dp.net_damping
    decay = np.exp(-gamma * tt)
    u = _relax(dp.heating_rate, gamma, tt)
    occ0 = m0.occupations
    occ_t = occ0 * decay + u

    w = dp.shifted_frequency
    rot = np.exp(1j * (w[:, None] - w[None, :]) * t[..., None, None]
                 - dp.pair_damping * t[..., None, None])
    second = m0.second * rot
    idx = np.arange(dp.n_particles)
    second[..., idx, idx] = occ_t

    corr = (m0.correlation * decay[..., :, None] * decay[..., None, :]
            + u[..., :, None] * (occ0 * decay)[..., None, :]
            + (occ0 * decay)[..., :, None] * u[..., None, :]
            + u[..., :, None] * u[..., None, :])
    corr[..., idx, idx] = 0.0
    return MomentSet(second, corr, t)


def conditioning_operator(dp: DerivedParams, detuning: float, layout: SpaceLayout) -> np.ndarray:
    """Heralding operator B on the mechanical space for a cavity-photon click.

    Uses the mean coupling and mean trap frequency for all particles.
    """
    if layout.has_cavity:
        layout = layout.mechanical()
    A = collective_op(layout)
    g = dp.mean_coupling
    wbar = dp.mean_trap_frequency
    kappa = dp.cavity_linewidth
    return 1j * g * (A / (kappa - 1j * (detuning + wbar)) + dag(A) / (kappa - 1j * (detuning - wbar)))


def condition_state(rho: np.ndarray, B: np.ndarray) -> np.ndarray:
    """B rho B^dag normalised to unit trace."""
    out = B @ rho @ dag(B)
    p = np.trace(out).real
    if not p > 0:
        raise ConditioningError("conditioning has zero probability")
    out /= p
    return (out + dag(out)) / 2


def flux(m: MomentSet, dp: DerivedParams, efficiency: float = 1.0) -> np.ndarray:
    """Anti-Stokes photon flux efficiency * (2 g^2/kappa) <A^dag A>."""
    total = np.real(np.sum(m.second, axis=(-2, -1)))
    return efficiency * dp.flux_scale() * total


def separability_bound(m: MomentSet, dp: DerivedParams, efficiency: float = 1.0):
    """(lower, upper) flux range attainable by separable states with these populations."""
    occ_sum = np.sum(m.occupations, axis=-1)
    iu = np.triu_indices(m.n_particles, 1)
    root = np.sqrt(np.clip(m.correlation[..., iu[0], iu[1]], 0.0, None))
    width = 2 * np.sum(root, axis=-1)
    scale = efficiency * dp.flux_scale()
    return scale * np.clip(occ_sum - width, 0.0, None), scale * (occ_sum + width)


class Window(NamedTuple):
    start: float
    end: float
    side: str  # "above" or "below" the separable region


def _crossing(t0, t1, d0, d1):
    if d1 == d0:
        return t0
    return t0 + (t1 - t0) * d0 / (d0 - d1)


def find_verification_windows(times: Sequence[float], flux_values: Sequence[float],
                              lower: Sequence[float], upper: Sequence[float]) -> list[Window]:
    """Maximal intervals where the flux leaves [lower, upper].

    Crossing times are linearly interpolated between grid points.
    """
    t = np.asarray(times, float)
    f = np.asarray(flux_values, float)
    windows: list[Window] = []
    for side, excess in (("above", f - np.asarray(upper, float)),
                         ("below", np.asarray(lower, float) - f)):
        outside = excess > 0
        k = 0
        while k < len(t):
            if not outside[k]:
                k += 1
                continue
            s = k
            while k + 1 < len(t) and outside[k + 1]:
                k += 1
            start = t[s] if s == 0 else _crossing(t[s - 1], t[s], excess[s - 1], excess[s])
            end = t[k] if k == len(t) - 1 else _crossing(t[k], t[k + 1], excess[k], excess[k + 1])
            windows.append(Window(float(start), float(end), side))
            k += 1
    windows.sort(key=lambda w: (w.start, w.end))
    return windows


@dataclass
class FluxTrace:
    """Conditional flux with its separability bounds on a time grid (click at t = 0)."""

    times: np.ndarray
    flux: np.ndarray
    bound_lower: np.ndarray
    bound_upper: np.ndarray
    source: str
    windows: list[Window] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.windows:
            self.windows = find_verification_windows(self.times, self.flux,
                                                     self.bound_lower, self.bound_upper)

    @property
    def width(self) -> np.ndarray:
        return self.bound_upper - self.bound_lower


def analytic_trace(m0: MomentSet, dp: DerivedParams, times, efficiency: float = 1.0,
                   source: str = "analytic") -> FluxTrace:
    """Flux and bound from closed-form moments; the bound zeroes the initial correlation."""
    times = np.asarray(times, float)
    m_t = evolve_moments(m0, dp, times)
    b_t = evolve_moments(m0.with_zero_correlation(), dp, times)
    lo, hi = separability_bound(b_t, dp, efficiency)
    return FluxTrace(times, flux(m_t, dp, efficiency), lo, hi, source)
