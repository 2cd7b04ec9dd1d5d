"""Herald-and-read-out protocol: blue segment, Stokes click, red read-out.

Both engines report traces with the click at t = 0.

* ``analytic``: the heralding operator B(+w) acts on the initial
  mechanical state; moments then follow the closed forms.
* ``full``: the cavity + particles master equation runs at Delta = +w for
  ``t0`` under no-click evolution (detected cavity emissions removed), a
  cavity jump heralds the click, and the red segment is integrated
  with the full dissipator.  The flux is the same 2 g^2/kappa <A^dag A>
  expression evaluated on the full-model moments; the raw cavity
  emission rate ``2 kappa <b^dag b>`` is kept in ``extras``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import fock
from .fock import SpaceLayout
from .lindblad import EvolutionSpec, IntegrationStats, generator, measure, propagate
from .params import DerivedParams, PhysicalConfig, derive, mean_trap_frequency
from .reduced import (FluxTrace, MomentSet, analytic_trace, condition_state, conditioning_operator,
                      flux, moments_from_state, separability_bound)

ENGINES = ("analytic", "full", "both")


@dataclass(frozen=True)
class ProtocolSummary:
    engine: str
    verification_time: float
    effective_detuning: float
    beat_period: float
    n_windows: int
    first_window_onset: float
    first_recurrence_onset: float
    last_window_end: float
    conditioned_fidelity: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProtocolResult:
    traces: dict[str, FluxTrace]
    summaries: dict[str, ProtocolSummary]
    blue: DerivedParams
    red: DerivedParams
    conditioned_states: dict[str, np.ndarray]


def default_grid(red: DerivedParams, horizon: float, n_points: int | None = None) -> np.ndarray:
    """Uniform grid on [0, horizon] resolving the fastest beat with 20 points per period."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon == 0:
        return np.zeros(1)
    if n_points is None:
        beat = np.max(np.abs(red.effective_detuning_pairs)) if red.n_particles > 1 else 0.0
        if beat > 0:
            n_points = int(math.ceil(horizon / (2 * math.pi / (20 * beat)))) + 1
        else:
            n_points = 201
    return np.linspace(0.0, horizon, max(int(n_points), 2))


def _summarise(engine: str, trace: FluxTrace, red: DerivedParams, fidelity: float) -> ProtocolSummary:
    starts = [w.start for w in trace.windows]
    later = [s for s in starts if s > trace.times[0]]
    beat = abs(red.effective_detuning) if red.n_particles > 1 else math.nan
    return ProtocolSummary(
        engine=engine,
        verification_time=red.verification_time,
        effective_detuning=red.effective_detuning,
        beat_period=2 * math.pi / beat if beat else math.inf,
        n_windows=len(trace.windows),
        first_window_onset=min(starts) if starts else math.nan,
        first_recurrence_onset=min(later) if later else math.nan,
        last_window_end=max(w.end for w in trace.windows) if trace.windows else math.nan,
        conditioned_fidelity=fidelity,
    )


def _w_fidelity(rho_mech: np.ndarray, layout: SpaceLayout) -> float:
    return float(np.trace(rho_mech @ fock.single_excitation_state(layout.mechanical())).real)


def _initial_mechanical(cfg: PhysicalConfig, layout: SpaceLayout) -> np.ndarray:
    occ = [fock.occupation_from_ground_population(p) for p in cfg.ground_state_population]
    return fock.thermal_product_state(layout.mechanical(), occ)


def run_analytic(cfg: PhysicalConfig, layout: SpaceLayout, times: np.ndarray,
                 conditioned_state: np.ndarray | None = None) -> tuple[FluxTrace, np.ndarray]:
    wbar = mean_trap_frequency(cfg)
    blue, red = derive(cfg, wbar), derive(cfg, -wbar)
    mech = layout.mechanical()
    if conditioned_state is None:
        B = conditioning_operator(blue, wbar, mech)
        conditioned_state = condition_state(_initial_mechanical(cfg, layout), B)
    m0 = moments_from_state(conditioned_state, mech)
    return analytic_trace(m0, red, times, cfg.detector_efficiency), conditioned_state


def herald_full(cfg: PhysicalConfig, layout: SpaceLayout, t0: float,
                rtol: float = 1e-8, atol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Mechanical state right after the first detected Stokes photon at ``t0``.

    Returns ``(rho_mech, click_density)`` where ``click_density`` is the
    unnormalised weight tr(b rho b^dag) of the no-click state.
    """
    wbar = mean_trap_frequency(cfg)
    blue = derive(cfg, wbar)
    H = fock.build_hamiltonian(layout, blue, wbar)
    (cav_rate, b), *mech_ops = fock.build_collapse_ops(layout, blue)
    eta = cfg.detector_efficiency
    collapse = [((1 - eta) * cav_rate, b)] + mech_ops
    rho0 = fock.embed_mechanical(_initial_mechanical(cfg, layout), layout)
    f = generator(H, collapse, monitored=[(eta * cav_rate, b)])
    rho_t0 = propagate(rho0[None], f, EvolutionSpec(np.array([0.0, t0]), rtol=rtol, atol=atol))[-1, 0]
    jumped = fock.partial_trace_cavity(b @ rho_t0 @ fock.dag(b), layout)
    weight = float(np.trace(jumped).real)
    if not weight > 0:
        raise ValueError("zero probability for a Stokes click")
    jumped /= weight
    return (jumped + fock.dag(jumped)) / 2, weight


def _correlation_removers(layout: SpaceLayout) -> list[tuple[int, int, np.ndarray]]:
    """Traceless diagonal operators X_ij with <n_i n_j> = 1 and no other first/second moments."""
    mech = layout.mechanical()
    n = mech.n_particles
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            X = np.zeros((mech.dim, mech.dim), complex)
            for occ_i, occ_j, sign in ((1, 1, 1), (1, 0, -1), (0, 1, -1), (0, 0, 1)):
                occ = [0] * n
                occ[i], occ[j] = occ_i, occ_j
                k = mech.basis_index(occ)
                X[k, k] = sign
            out.append((i, j, X))
    return out


def run_full(cfg: PhysicalConfig, layout: SpaceLayout, times: np.ndarray,
             t0_over_kappa: float = 20.0, conditioned_state: np.ndarray | None = None,
             rtol: float = 1e-8, atol: float = 1e-10,
             check_eigenvalues: bool = True) -> tuple[FluxTrace, np.ndarray]:
    """Full master-equation engine; see the module docstring."""
    if not layout.has_cavity:
        raise ValueError("the full engine needs a layout with a cavity mode")
    wbar = mean_trap_frequency(cfg)
    red = derive(cfg, -wbar)
    if conditioned_state is None:
        conditioned_state, _ = herald_full(cfg, layout, t0_over_kappa / cfg.cavity_linewidth,
                                           rtol, atol)
    mech = layout.mechanical()
    m0 = moments_from_state(conditioned_state, mech)
    removers = _correlation_removers(layout)
    stack = [fock.embed_mechanical(conditioned_state, layout)]
    stack += [fock.embed_mechanical(X, layout) for *_, X in removers]

    H = fock.build_hamiltonian(layout, red, -wbar)
    stats = IntegrationStats()
    spec = EvolutionSpec(times, rtol=rtol, atol=atol)
    states = propagate(np.array(stack), generator(H, fock.build_collapse_ops(layout, red)),
                       spec, stats)

    main = measure(states[:, 0], layout, times, check_eigenvalues)
    main.stats = stats
    moments = MomentSet(main.second, main.correlation, times)
    # Bound: same evolution with the click-time occupation correlations removed.
    corr_ref = main.correlation.copy()
    occ_ref = main.second.copy()
    for k, (i, j, _) in enumerate(removers):
        c_ij = m0.correlation[i, j]
        if c_ij == 0:
            continue
        extra = measure(states[:, k + 1], layout, times)
        corr_ref -= c_ij * extra.correlation
        occ_ref -= c_ij * extra.second
    lo, hi = separability_bound(MomentSet(occ_ref, corr_ref, times), red, cfg.detector_efficiency)
    trace = FluxTrace(times, flux(moments, red, cfg.detector_efficiency), lo, hi, "full")
    trace.extras = {
        "cavity_flux": cfg.detector_efficiency * 2 * cfg.cavity_linewidth * main.cavity_occupation,
        "trace": main.trace,
        "min_eigenvalue": main.min_eigenvalue,
        "moments": main,
        "stats": stats,
    }
    return trace, conditioned_state


def run_protocol(cfg: PhysicalConfig, layout: SpaceLayout | None = None, engine: str = "analytic",
                 horizon: float = 1e-3, n_points: int | None = None,
                 t0_over_kappa: float = 20.0, conditioned_state: np.ndarray | None = None,
                 times: Sequence[float] | None = None, rtol: float = 1e-8,
                 atol: float = 1e-10) -> ProtocolResult:
    """Run the herald/read-out protocol with one or both engines.

    The configured detuning is ignored: the blue segment uses +mean(omega)
    and the read-out -mean(omega).  ``conditioned_state`` (a mechanical
    density matrix) bypasses the herald, e.g. to feed a separable mixture.
    """
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    layout = layout or SpaceLayout.uniform(cfg.n_particles)
    if layout.n_particles != cfg.n_particles:
        raise ValueError("layout and configuration disagree on the number of particles")
    wbar = mean_trap_frequency(cfg)
    blue, red = derive(cfg, wbar), derive(cfg, -wbar)
    grid = np.asarray(times, float) if times is not None else default_grid(red, horizon, n_points)

    jobs = {}
    if engine in ("analytic", "both"):
        jobs["analytic"] = lambda: run_analytic(cfg, layout, grid, conditioned_state)
    if engine in ("full", "both"):
        jobs["full"] = lambda: run_full(cfg, layout, grid, t0_over_kappa, conditioned_state,
                                        rtol, atol)
    if len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            futures = {name: pool.submit(job) for name, job in jobs.items()}
            results = {name: fut.result() for name, fut in futures.items()}
    else:
        results = {name: job() for name, job in jobs.items()}

    traces, summaries, states = {}, {}, {}
    for name in jobs:
        trace, rho = results[name]
        traces[name] = trace
        states[name] = rho
        summaries[name] = _summarise(name, trace, red, _w_fidelity(rho, layout))
    return ProtocolResult(traces, summaries, blue, red, states)


@dataclass(frozen=True)
class PairBeat:
    i: int
    j: int
    effective_detuning: float
    damping: float


def run_nparticle(cfg: PhysicalConfig, layout: SpaceLayout | None = None, engine: str = "analytic",
                  **kwargs) -> tuple[ProtocolResult, list[PairBeat]]:
    """Protocol for N >= 2 particles plus the pairwise beat frequencies of the flux.

    Warns when two spring-shifted frequencies are closer than their pair
    damping rate, in which case that beat cannot be resolved.
    """
    if cfg.n_particles < 2:
        raise ValueError("at least two particles are required")
    result = run_protocol(cfg, layout, engine, **kwargs)
    red = result.red
    beats = []
    for i in range(red.n_particles):
        for j in range(i + 1, red.n_particles):
            det = float(red.effective_detuning_pairs[j, i])
            damp = float(red.pair_damping[i, j])
            if abs(det) <= damp:
                warnings.warn(f"particles {i} and {j}: beat {det:.4g} rad/s is not resolved "
                              f"against damping {damp:.4g} 1/s", RuntimeWarning, stacklevel=2)
            beats.append(PairBeat(i, j, det, damp))
    return result, beats


def doubled(layout: SpaceLayout) -> SpaceLayout:
    cavity = None if layout.cavity_cutoff is None else 2 * layout.cavity_cutoff
    return SpaceLayout(tuple(2 * c for c in layout.mech_cutoffs), cavity)


def cutoff_convergence(cfg: PhysicalConfig, layout: SpaceLayout, times: Sequence[float],
                       engine: str = "full", **kwargs) -> float:
    """Largest flux change, relative to the peak flux, when all cutoffs are doubled.

    A value below 5e-3 means the truncation of ``layout`` is adequate.
    """
    if engine not in ("analytic", "full"):
        raise ValueError("engine must be 'analytic' or 'full'")
    coarse = run_protocol(cfg, layout, engine, times=times, **kwargs).traces[engine].flux
    fine = run_protocol(cfg, doubled(layout), engine, times=times, **kwargs).traces[engine].flux
    return float(np.max(np.abs(fine - coarse)) / np.max(np.abs(coarse)))
