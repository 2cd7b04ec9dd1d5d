"""Time integration of the full cavity + particles master equation.

The integrator is an embedded Dormand-Prince 5(4) pair acting on the
density matrix (or a stack of matrices evolved by the same linear
generator).  After every accepted step the state is symmetrised,
``rho <- (rho + rho^dag) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fock import (SpaceLayout, build_collapse_ops, build_hamiltonian, cavity_op, dag, mech_op,
                   thermal_product_state)
from .params import DerivedParams, PhysicalConfig, derive, mean_trap_frequency

Collapse = Sequence[tuple[float, np.ndarray]]


class IntegrationError(RuntimeError):
    """The adaptive integrator could not advance (step-size underflow or non-finite state)."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t = {t:.9g} s")
        self.t = t


class ConvergenceError(RuntimeError):
    pass


def rhs(rho: np.ndarray, H: np.ndarray, collapse: Collapse) -> np.ndarray:
    """-i[H, rho] + sum rate (c rho c^dag - {c^dag c, rho} / 2)."""
    if rho.shape != H.shape:
        raise ValueError(f"layout mismatch: state {rho.shape} vs Hamiltonian {H.shape}")
    out = -1j * (H @ rho - rho @ H)
    for rate, c in collapse:
        if c.shape != rho.shape:
            raise ValueError("layout mismatch in collapse operator")
        cd = dag(c)
        cdc = cd @ c
        out += rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def _effective_hamiltonian(H, collapse, monitored):
    h_eff = H.astype(complex)
    for rate, c in list(collapse) + list(monitored):
        h_eff = h_eff - 0.5j * rate * (dag(c) @ c)
    return h_eff


def liouvillian(H: np.ndarray, collapse: Collapse, monitored: Collapse = ()) -> np.ndarray:
    """Superoperator acting on row-major vectorised density matrices.

    Channels in ``monitored`` contribute only their decay (anticommutator)
    part: the result generates the unnormalised no-click evolution.
    """
    d = H.shape[0]
    eye = np.eye(d)
    h_eff = _effective_hamiltonian(H, collapse, monitored)
    L = -1j * np.kron(h_eff, eye) + 1j * np.kron(eye, h_eff.conj())
    for rate, c in collapse:
        L += rate * np.kron(c, c.conj())
    return L


def generator(H: np.ndarray, collapse: Collapse, monitored: Collapse = (),
              dense_limit: int = 8) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``f(stack) -> d stack / dt`` for a stack of shape ``(k, d, d)``.

    Tiny spaces use the dense superoperator; larger ones the operator form,
    which is faster from d ~ 10 on and never materialises a d^2 x d^2 matrix.  ``monitored`` channels
    are as in :func:`liouvillian`.
    """
    d = H.shape[0]
    if d <= dense_limit:
        L = liouvillian(H, collapse, monitored)

        def f(stack):
            k = stack.shape[0]
            return (L @ stack.reshape(k, d * d).T).T.reshape(k, d, d)
        return f

    h_eff = _effective_hamiltonian(H, collapse, monitored)
    jumps = [(math.sqrt(rate) * c, math.sqrt(rate) * c.conj().T)
             for rate, c in collapse if rate != 0]
    A = -1j * h_eff
    Ad = A.conj().T

    def f(stack):
        out = A @ stack + stack @ Ad
        for c, cd in jumps:
            out += c @ stack @ cd
        return out
    return f


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B_LOW = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_E = _B - _B_LOW


def _sym(stack: np.ndarray) -> np.ndarray:
    return 0.5 * (stack + stack.conj().transpose(0, 2, 1))


@dataclass(frozen=True)
class EvolutionSpec:
    """Output grid and tolerances for one evolution segment."""

    times: np.ndarray
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("times must be a nonempty 1-d grid")
        if np.any(np.diff(t) < 0):
            raise ValueError("times must be nondecreasing")
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0):
            raise ValueError("tolerances and max_step must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, t_start: float, t_end: float, n_points: int, **kw) -> "EvolutionSpec":
        if not t_end > t_start:
            raise ValueError("t_end must exceed t_start")
        return cls(np.linspace(t_start, t_end, n_points), **kw)


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0
    max_hermiticity_drift: float = 0.0


def propagate(stack0: np.ndarray, f: Callable[[np.ndarray], np.ndarray], spec: EvolutionSpec,
              stats: IntegrationStats | None = None) -> np.ndarray:
    """Integrate ``d stack / dt = f(stack)`` and return states on ``spec.times``.

    ``stack0`` has shape ``(k, d, d)``; the result has shape ``(T, k, d, d)``.
    Output times are hit exactly by shortening the step that would cross them.
    """
    stats = stats if stats is not None else IntegrationStats()
    y = _sym(np.array(stack0, dtype=complex))
    times = spec.times
    out = np.empty((len(times),) + y.shape, dtype=complex)
    t = float(times[0])
    out[0] = y
    if len(times) == 1 or times[-1] == t:
        out[1:] = y
        return out

    def err_norm(err, y_old, y_new):
        scale = spec.atol + spec.rtol * np.maximum(np.abs(y_old), np.abs(y_new))
        return math.sqrt(np.mean(np.abs(err / scale) ** 2))

    k1 = f(y)
    stats.evaluations += 1
    scale0 = spec.atol + spec.rtol * np.abs(y)
    d0 = math.sqrt(np.mean(np.abs(y / scale0) ** 2))
    d1 = math.sqrt(np.mean(np.abs(k1 / scale0) ** 2))
    h = 0.01 * d0 / d1 if d1 > 1e-5 and d0 > 1e-5 else 1e-6 * (times[-1] - t)
    h = min(h, spec.max_step, times[-1] - t)

    idx = 1
    while idx < len(times):
        t_next = float(times[idx])
        if t_next == t:
            out[idx] = y
            idx += 1
            continue
        h_try = min(h, t_next - t)
        clamped = h_try < h
        if h_try <= 16 * np.finfo(float).eps * max(abs(t), abs(t_next)):
            raise IntegrationError("step size underflow", t)
        k = [k1]
        for s in range(1, 7):
            ys = y + h_try * sum(a * kk for a, kk in zip(_A[s], k) if a != 0)
            k.append(f(ys))
        stats.evaluations += 6
        y_new = ys  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err = h_try * sum(e * kk for e, kk in zip(_E, k) if e != 0)
        en = err_norm(err, y, y_new)
        if not math.isfinite(en):
            raise IntegrationError("non-finite state", t)
        if en <= 1.0:
            t = t_next if clamped or t + h_try >= t_next else t + h_try
            stats.max_hermiticity_drift = max(
                stats.max_hermiticity_drift,
                float(np.max(np.abs(y_new - y_new.conj().transpose(0, 2, 1)))))
            y = _sym(y_new)
            # f is Hermiticity-preserving, so f(sym(y)) = sym(f(y)).
            k1 = _sym(k[6])
            stats.accepted += 1
            factor = 10.0 if en == 0 else min(10.0, 0.9 * en ** -0.2)
            if not clamped:
                h = min(h_try * factor, spec.max_step)
            while idx < len(times) and times[idx] <= t:
                out[idx] = y
                idx += 1
        else:
            stats.rejected += 1
            h = h_try * max(0.2, 0.9 * en ** -0.2)
    return out


@dataclass
class MomentTrace:
    """Mechanical and cavity moments on an output grid.

    ``second[t, i, j] = <a_i^dag a_j>``, ``correlation[t, i, j] = <n_i n_j>``
    (diagonal holds ``<n_i^2>``).
    """

    times: np.ndarray
    second: np.ndarray
    correlation: np.ndarray
    cavity_occupation: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray | None = None
    states: np.ndarray | None = field(default=None, repr=False)
    stats: IntegrationStats | None = None

    @property
    def occupations(self) -> np.ndarray:
        return np.einsum("tii->ti", self.second).real


def measure(states: np.ndarray, layout: SpaceLayout, times: np.ndarray,
            check_eigenvalues: bool = False) -> MomentTrace:
    """Extract moments from states of shape ``(T, d, d)`` on ``layout``."""
    n = layout.n_particles
    a = [mech_op(layout, j) for j in range(n)]
    num = [dag(x) @ x for x in a]
    ops_second = np.array([dag(a[i]) @ a[j] for i in range(n) for j in range(n)])
    ops_corr = np.array([num[i] @ num[j] for i in range(n) for j in range(n)])
    # tr(rho O) = sum_ij rho_ij O_ji
    second = np.einsum("tij,kji->tk", states, ops_second).reshape(-1, n, n)
    corr = np.einsum("tij,kji->tk", states, ops_corr).real.reshape(-1, n, n)
    if layout.has_cavity:
        b = cavity_op(layout)
        cav = np.einsum("tij,ji->t", states, dag(b) @ b).real
    else:
        cav = np.zeros(len(states))
    trace = np.einsum("tii->t", states).real
    eigs = None
    if check_eigenvalues:
        eigs = np.array([np.linalg.eigvalsh(0.5 * (r + dag(r)))[0] for r in states])
    return MomentTrace(np.asarray(times, float), second, corr, cav, trace, eigs)


def evolve(rho0: np.ndarray, H: np.ndarray, collapse: Collapse, spec: EvolutionSpec,
           layout: SpaceLayout, check_eigenvalues: bool = False,
           keep_states: bool = False) -> MomentTrace:
    """Evolve one density matrix and record moments on the output grid."""
    if rho0.shape != H.shape or rho0.shape[0] != layout.dim:
        raise ValueError("layout mismatch between state, Hamiltonian and layout")
    stats = IntegrationStats()
    states = propagate(rho0[None], generator(H, collapse), spec, stats)[:, 0]
    trace = measure(states, layout, spec.times, check_eigenvalues)
    trace.stats = stats
    if keep_states:
        trace.states = states
    return trace


def steady_occupation_check(cfg: PhysicalConfig, layout: SpaceLayout | None = None,
                            rel_change: float = 1e-4, max_time: float = 5e-3,
                            chunk: float = 5e-5, rtol: float = 1e-8,
                            atol: float = 1e-10) -> np.ndarray:
    """Asymptotic mechanical occupations of the full model in the cooling regime.

    Starts from the ground state at ``Delta = -mean(omega)`` and integrates
    in chunks.  Occupations are sampled once per mechanical period at the
    end of every chunk; the run stops when the change per period drops
    below ``rel_change`` for every particle.
    """
    delta = -mean_trap_frequency(cfg)
    dp = derive(cfg, delta)
    layout = layout or SpaceLayout.uniform(cfg.n_particles, 2, 1)
    H = build_hamiltonian(layout, dp, delta)
    f = generator(H, build_collapse_ops(layout, dp))
    period = 2 * math.pi / dp.mean_trap_frequency
    y = thermal_product_state(layout, [0.0] * cfg.n_particles)[None]
    t = 0.0
    while t < max_time:
        grid = EvolutionSpec(np.array([t, t + chunk - period, t + chunk]), rtol=rtol, atol=atol)
        states = propagate(y, f, grid)
        y = states[-1]
        t += chunk
        occ = measure(states[1:, 0], layout, grid.times[1:]).occupations
        change = np.abs(occ[1] - occ[0]) / np.maximum(np.abs(occ[1]), 1e-300)
        if np.all(occ[1] == 0) or np.all(change < rel_change):
            return occ[1]
    raise ConvergenceError(f"occupations did not settle within {max_time} s")
