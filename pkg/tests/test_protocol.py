"""Herald and read-out orchestration with both engines."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from cohscat import fock
from cohscat.fock import SpaceLayout
from cohscat.params import derive, fig2_config, mean_trap_frequency
from cohscat.protocol import (
    default_grid,
    herald_full,
    run_analytic,
    run_full,
    run_nparticle,
    run_protocol,
)
from cohscat.reduced import analytic_trace, evolve_moments, moments_from_state

MECH = SpaceLayout.uniform(2, 2, cavity_cutoff=None)


def mixture_10_01():
    rho = np.zeros((9, 9), complex)
    rho[MECH.basis_index((1, 0)), MECH.basis_index((1, 0))] = 0.5
    rho[MECH.basis_index((0, 1)), MECH.basis_index((0, 1))] = 0.5
    return rho


def three_particles(offsets=(-40e3, -8e3, 40e3), **kw):
    base = fig2_config().replace(tweezer_power=(1.5,) * 3, tweezer_waist=(720e-9,) * 3,
                                 particle_radius=(1e-8,) * 3, ground_state_population=0.95)
    cfg = base.with_frequency_offsets(offsets)
    return cfg.replace(detuning=-mean_trap_frequency(cfg), **kw)


def test_default_grid():
    red = derive(fig2_config())
    grid = default_grid(red, 1e-3)
    assert grid[0] == 0 and grid[-1] == 1e-3
    assert np.diff(grid).max() <= 2 * math.pi / (20 * abs(red.effective_detuning)) * (1 + 1e-12)
    assert default_grid(red, 0.0).tolist() == [0.0]
    assert len(default_grid(red, 1e-3, 7)) == 7
    with pytest.raises(ValueError):
        default_grid(red, -1.0)


def test_argument_validation():
    cfg = fig2_config()
    with pytest.raises(ValueError):
        run_protocol(cfg, engine="exact")
    with pytest.raises(ValueError):
        run_protocol(cfg, SpaceLayout.uniform(3))
    with pytest.raises(ValueError):
        run_full(cfg, MECH, np.array([0.0]))
    with pytest.raises(ValueError):
        run_nparticle(fig2_config().replace(tweezer_power=(1.5,), tweezer_waist=(7.2e-7,),
                                            particle_radius=(1e-8,), ground_state_population=1.0))


def test_analytic_conditioning_of_ground_state():
    cfg = fig2_config(ground_state_population=(1.0, 1.0))
    res = run_protocol(cfg, horizon=1e-4)
    s = res.summaries["analytic"]
    assert s.conditioned_fidelity >= 1 - 1e-10
    assert res.traces["analytic"].flux[0] == pytest.approx(2 * res.red.flux_scale(), rel=1e-12)


def test_reference_summary():
    res = run_protocol(fig2_config(), horizon=1e-3)
    s = res.summaries["analytic"]
    assert s.verification_time == pytest.approx(3.5426971477332639e-4, rel=1e-12)
    assert s.n_windows >= 3
    assert s.first_window_onset == 0.0
    assert abs(s.last_window_end - s.verification_time) <= s.beat_period
    assert s.beat_period == pytest.approx(2 * math.pi / res.red.effective_detuning)


def test_flux_dominated_by_mechanical_detuning():
    res = run_protocol(fig2_config(), horizon=1e-3)
    tr = res.traces["analytic"]
    dt = tr.times[1] - tr.times[0]
    signal = tr.flux - tr.flux.mean()
    freqs = 2 * math.pi * np.fft.rfftfreq(len(signal), dt)
    peak = freqs[np.argmax(np.abs(np.fft.rfft(signal))[1:]) + 1]
    assert abs(peak - 32e3) <= freqs[1]


def test_decoherence_free_windows_recur():
    cfg = fig2_config(ground_state_population=(1.0, 1.0))
    red = derive(cfg)
    quiet = replace(red, scattering_rate=np.zeros(2), heating_rate=np.zeros(2),
                    cooling_rate=np.zeros(2))
    _, rho = run_analytic(cfg, SpaceLayout.uniform(2, 2), np.array([0.0]))
    times = default_grid(red, 5e-3)
    tr = analytic_trace(moments_from_state(rho, MECH), quiet, times)
    period = 2 * math.pi / abs(red.effective_detuning)
    coh = evolve_moments(moments_from_state(rho, MECH), quiet, times).coherence(0, 1)
    np.testing.assert_allclose(np.abs(coh), abs(coh[0]), rtol=1e-12)
    assert len(tr.windows) >= 2 * int(5e-3 / period) - 1
    assert tr.windows[-1].end > 5e-3 - period


@pytest.mark.parametrize("engine", ["analytic", "full"])
def test_separable_override_has_no_windows(engine):
    res = run_protocol(fig2_config(), SpaceLayout.uniform(2, 2), engine=engine, conditioned_state=mixture_10_01(),
                       horizon=1e-4)
    tr = res.traces[engine]
    assert tr.windows == []
    if engine == "analytic":
        assert tr.flux[0] == pytest.approx(res.red.flux_scale())
        assert np.all(np.diff(tr.flux) < 0)  # no coherence, no oscillation


def test_full_herald_fidelity_and_report():
    cfg = fig2_config(ground_state_population=(1.0, 1.0))
    lay = SpaceLayout.uniform(2, 2)
    rho, weight = herald_full(cfg, lay, 20 / cfg.cavity_linewidth)
    fock.check_density_matrix(rho)
    assert weight > 0
    blue = derive(cfg, mean_trap_frequency(cfg))
    fid = np.trace(rho @ fock.single_excitation_state(MECH)).real
    c = (1 - fid) / (blue.mean_coupling / cfg.cavity_linewidth) ** 2
    print(f"herald fidelity {fid:.6f}, infidelity = {c:.2f} g^2/kappa^2")
    assert c < 10


def test_full_herald_infidelity_scales_with_coupling_squared():
    """Shrinking g by 2 (particle volume / 4) cuts the g-dependent infidelity by about 4."""
    lay = SpaceLayout.uniform(2, 2)
    out = []
    for radius in (1e-8, 1e-8 / 4 ** (1 / 3)):
        cfg = fig2_config(ground_state_population=(1.0, 1.0),
                          particle_radius=(radius, radius))
        # only photon-mediated errors: switch recoil heating off via a very short herald
        rho, _ = herald_full(cfg, lay, 2 / cfg.cavity_linewidth)
        out.append(1 - np.trace(rho @ fock.single_excitation_state(MECH)).real)
    assert out[0] / out[1] == pytest.approx(4.0, rel=0.25)


def test_nparticle_two_matches_protocol_bitwise():
    cfg = fig2_config()
    res, beats = run_nparticle(cfg, horizon=5e-4)
    ref = run_protocol(cfg, horizon=5e-4)
    for name in ("flux", "bound_lower", "bound_upper", "times"):
        assert np.array_equal(getattr(res.traces["analytic"], name),
                              getattr(ref.traces["analytic"], name))
    assert beats[0].effective_detuning == ref.red.effective_detuning


def test_w_state_initial_flux():
    cfg = three_particles(ground_state_population=1.0)
    res, beats = run_nparticle(cfg, horizon=1e-4)
    assert res.traces["analytic"].flux[0] == pytest.approx(3 * res.red.flux_scale(), rel=1e-12)
    assert len(beats) == 3
    assert res.summaries["analytic"].conditioned_fidelity >= 1 - 1e-10


def test_degenerate_frequencies_warn():
    cfg = three_particles(offsets=(-40e3, 40e3, 40e3 + 1000))
    with pytest.warns(RuntimeWarning, match="not resolved"):
        run_nparticle(cfg, horizon=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_nparticle(three_particles(), horizon=1e-4)


def test_cutoff_convergence_analytic():
    from cohscat.protocol import cutoff_convergence
    cfg = fig2_config()
    times = np.linspace(0, 2e-4, 41)
    assert cutoff_convergence(cfg, SpaceLayout.uniform(2, 3), times, "analytic") < 5e-3


@pytest.mark.slow
def test_cutoff_convergence_full():
    from cohscat.protocol import cutoff_convergence
    cfg = fig2_config()
    times = np.linspace(0, 5e-5, 26)
    change = cutoff_convergence(cfg, SpaceLayout.uniform(2, 3), times, "full")
    print(f"flux change on doubling cutoffs (1,3,3): {change:.3%}")
    assert change < 5e-3


@pytest.mark.slow
def test_tolerance_halving_changes_flux_little():
    cfg = fig2_config()
    times = np.linspace(0, 2e-4, 41)
    lay = SpaceLayout.uniform(2, 2)
    _, rho = run_analytic(cfg, lay, np.array([0.0]))
    a, _ = run_full(cfg, lay, times, conditioned_state=rho, check_eigenvalues=False)
    b, _ = run_full(cfg, lay, times, conditioned_state=rho, rtol=5e-9, atol=5e-11,
                    check_eigenvalues=False)
    assert np.max(np.abs(a.flux - b.flux) / np.abs(a.flux)) < 1e-3


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="secular closed forms neglect cavity-mediated collective "
                   "damping; see the engine-equivalence acceptance criterion")
def test_bound_curves_agree_between_engines(fig2_both):
    a, f = fig2_both.traces["analytic"], fig2_both.traces["full"]
    late = f.times * fig2_both.red.cavity_linewidth >= 10
    peak = np.max(a.flux)
    for name in ("bound_lower", "bound_upper"):
        assert np.max(np.abs(getattr(a, name) - getattr(f, name))[late]) / peak < 0.05


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="same cause as the engine-equivalence criterion "
                   "(8-9 % observed at the reference beat frequency)")
def test_flux_agrees_within_three_percent(fig2_both):
    a, f = fig2_both.traces["analytic"], fig2_both.traces["full"]
    late = f.times * fig2_both.red.cavity_linewidth >= 10
    assert np.max(np.abs(a.flux - f.flux)[late]) / np.max(a.flux) < 0.03


@pytest.mark.slow
def test_full_engine_matches_collective_reduced_model():
    """Full engine vs the reduced model with cross-damping kept (non-secular oracle)."""
    pytest.importorskip("scipy")
    import scipy.linalg

    cfg = fig2_config()
    lay = SpaceLayout.uniform(2, 2)
    red = derive(cfg)
    state = fock.single_excitation_state(MECH)
    times = np.linspace(0, 3e-4, 61)
    full, _ = run_full(cfg, lay, times, conditioned_state=state, check_eigenvalues=False)

    # eliminate the cavity without the secular approximation: cooling channel
    # on B_- = sum_j g_j a_j / (kappa - i(Delta + w_j)), heating on B_+.
    mech = SpaceLayout.uniform(2, 4, None)
    a = [fock.mech_op(mech, j) for j in range(2)]
    kappa, delta = red.cavity_linewidth, red.detuning
    w = red.trap_frequency + red.optical_spring - red.mean_trap_frequency
    H = sum(wj * fock.dag(x) @ x for wj, x in zip(w, a))
    lower = sum(g * x / (kappa - 1j * (delta + wj)) for g, x, wj in
                zip(red.coupling, a, red.trap_frequency))
    upper = sum(g * fock.dag(x) / (kappa - 1j * (delta - wj)) for g, x, wj in
                zip(red.coupling, a, red.trap_frequency))
    ops = [(2 * kappa, lower), (2 * kappa, upper)]
    ops += [(r, op) for j in range(2) for r, op in
            ((red.scattering_rate[j], a[j]), (red.scattering_rate[j], fock.dag(a[j])))]
    d = mech.dim
    eye = np.eye(d)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for r, c in ops:
        cdc = fock.dag(c) @ c
        L += r * (np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T))
    rho0 = fock.single_excitation_state(mech)
    A = fock.collective_op(mech)
    ref = np.array([np.trace((scipy.linalg.expm(L * t) @ rho0.ravel()).reshape(d, d)
                             @ fock.dag(A) @ A).real for t in times]) * red.flux_scale()
    late = times * kappa >= 10
    assert np.max(np.abs(full.flux - ref)[late]) / np.max(ref) < 0.01
