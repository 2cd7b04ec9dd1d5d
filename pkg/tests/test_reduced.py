"""Closed-form moments, conditioning, flux, separability bound and windows."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohscat import fock
from cohscat.fock import SpaceLayout
from cohscat.params import derive, fig2_config, mean_trap_frequency
from cohscat.reduced import (
    ConditioningError,
    FluxTrace,
    MomentSet,
    Window,
    analytic_trace,
    condition_state,
    conditioning_operator,
    evolve_moments,
    find_verification_windows,
    flux,
    moments_from_state,
    separability_bound,
)

MECH = SpaceLayout.uniform(2, 2, cavity_cutoff=None)
# <00|rho'|00> after conditioning the 95 % thermal state at cutoff 2, from a
# hand-built B (independent kron construction).
GROUND_WEIGHT_095 = 0.0016967740573180243


@pytest.fixture(scope="module")
def cfg():
    return fig2_config()


@pytest.fixture(scope="module")
def red(cfg):
    return derive(cfg)


@pytest.fixture(scope="module")
def blue(cfg):
    return derive(cfg, mean_trap_frequency(cfg))


def psi0_moments():
    return moments_from_state(fock.single_excitation_state(MECH), MECH)


# -- closed-form moments ------------------------------------------------------

def test_time_zero_is_identity(red):
    m0 = psi0_moments()
    m = evolve_moments(m0, red, 0.0)
    np.testing.assert_allclose(m.second, m0.second, atol=1e-16)
    np.testing.assert_allclose(m.correlation, m0.correlation, atol=1e-16)


def test_psi0_occupations(red):
    t = np.linspace(0, 1e-3, 51)
    m = evolve_moments(psi0_moments(), red, t)
    g, n = red.net_damping, red.steady_occupation
    expected = 0.5 * np.exp(-np.outer(t, g)) + n * (1 - np.exp(-np.outer(t, g)))
    np.testing.assert_allclose(m.occupations, expected, rtol=1e-13)


def test_psi0_coherence_magnitude(red):
    t = np.linspace(0, 1e-3, 51)
    m = evolve_moments(psi0_moments(), red, t)
    np.testing.assert_allclose(np.abs(m.coherence(1, 0)),
                               0.5 * np.exp(-red.pair_damping[0, 1] * t), rtol=1e-13)


def test_stationary_limit(red):
    m = evolve_moments(psi0_moments(), red, 1.0)
    np.testing.assert_allclose(m.occupations, red.steady_occupation, rtol=1e-12)
    assert abs(m.coherence(0, 1)) < 1e-300
    assert m.correlation[0, 1] == pytest.approx(np.prod(red.steady_occupation), rel=1e-12)


def test_correlation_matches_four_term_expression(red):
    rng = np.random.default_rng(2)
    occ0 = rng.uniform(0, 1, 2)
    k0 = 0.3
    m0 = MomentSet(np.diag(occ0).astype(complex), np.array([[0, k0], [k0, 0]]))
    t = np.linspace(0, 2e-3, 33)
    g, n = red.net_damping, red.steady_occupation
    e1, e2 = np.exp(-g[0] * t), np.exp(-g[1] * t)
    literal = (k0 * e1 * e2 + occ0[0] * e1 * n[1] * (1 - e2) + occ0[1] * e2 * n[0] * (1 - e1)
               + n[0] * n[1] * (1 - e1) * (1 - e2))
    np.testing.assert_allclose(evolve_moments(m0, red, t).correlation[:, 0, 1], literal,
                               rtol=1e-12)


def test_finite_at_zero_damping(red):
    frozen = replace(red, heating_rate=np.full(2, 100.0), cooling_rate=np.full(2, 100.0))
    m = evolve_moments(psi0_moments(), frozen, np.array([0.0, 1e-3]))
    np.testing.assert_allclose(m.occupations[1], 0.5 + 100.0 * 1e-3)
    assert np.all(np.isfinite(m.correlation))


def test_finite_difference_against_moment_odes(red):
    m0 = MomentSet(np.array([[0.4, 0.2 + 0.1j], [0.2 - 0.1j, 0.3]]), np.array([[0, 0.05], [0.05, 0]]))
    gp, g = red.heating_rate, red.net_damping
    w = red.shifted_frequency
    for t in (1e-5, 2e-4, 7e-4):
        h = 1e-9
        mp_, mm = evolve_moments(m0, red, t + h), evolve_moments(m0, red, t - h)
        m = evolve_moments(m0, red, t)
        dn = (mp_.occupations - mm.occupations) / (2 * h)
        np.testing.assert_allclose(dn, -g * m.occupations + gp, rtol=1e-6)
        dc = (mp_.coherence(0, 1) - mm.coherence(0, 1)) / (2 * h)
        rate = 1j * (w[0] - w[1]) - red.pair_damping[0, 1]
        assert abs(dc - rate * m.coherence(0, 1)) <= 1e-6 * abs(rate * m.coherence(0, 1))
        dk = (mp_.correlation[0, 1] - mm.correlation[0, 1]) / (2 * h)
        n = m.occupations
        ode = -(g[0] + g[1]) * m.correlation[0, 1] + gp[0] * n[1] + gp[1] * n[0]
        assert dk == pytest.approx(ode, rel=1e-6)


def test_closed_forms_against_reduced_master_equation(red):
    """Oracle: sparse expm of the two-oscillator master equation at cutoff 10 (rotating frame)."""
    sp = pytest.importorskip("scipy.sparse")
    from scipy.sparse.linalg import expm_multiply

    lay = SpaceLayout.uniform(2, mech_cutoff=10, cavity_cutoff=None)
    a = [sp.csr_matrix(fock.mech_op(lay, j)) for j in range(2)]
    detune = red.shifted_frequency - red.mean_trap_frequency
    H = sum(d * (x.getH() @ x) for d, x in zip(detune, a))
    eye = sp.identity(lay.dim, format="csr")
    # row-major vec: vec(X rho Y) = kron(X, Y^T) vec(rho)
    L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    for j in range(2):
        for r, c in ((red.cooling_rate[j], a[j]), (red.heating_rate[j], a[j].getH())):
            cdc = c.getH() @ c
            L = L + r * (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T))
    rho0 = fock.single_excitation_state(lay)
    m0 = moments_from_state(rho0, lay)
    for t in (5e-5, 3e-4, 1e-3):
        rho = expm_multiply(L.tocsr() * t, rho0.ravel()).reshape(lay.dim, lay.dim)
        ref = moments_from_state(rho, lay)
        got = evolve_moments(m0, red, t)
        np.testing.assert_allclose(got.second, ref.second, rtol=1e-6, atol=1e-10)
        assert got.correlation[0, 1] == pytest.approx(ref.correlation[0, 1], rel=1e-6, abs=1e-10)


# -- conditioning ----------------------------------------------------------------

def test_conditioning_vacuum_gives_psi0(blue, cfg):
    wbar = mean_trap_frequency(cfg)
    B = conditioning_operator(blue, wbar, MECH)
    vac = fock.thermal_product_state(MECH, [0, 0])
    rho = condition_state(vac, B)
    np.testing.assert_allclose(rho, fock.single_excitation_state(MECH), atol=1e-15)
    norm = np.trace(B @ vac @ fock.dag(B)).real
    assert norm == pytest.approx(2 * blue.mean_coupling ** 2 / cfg.cavity_linewidth ** 2, rel=1e-14)


def test_conditioning_cavity_layout_is_reduced(blue, cfg):
    wbar = mean_trap_frequency(cfg)
    np.testing.assert_array_equal(conditioning_operator(blue, wbar, SpaceLayout.uniform(2, 2)),
                                  conditioning_operator(blue, wbar, MECH))


def test_identity_conditioning():
    rho = fock.thermal_product_state(MECH, [0.2, 0.1])
    np.testing.assert_allclose(condition_state(rho, np.eye(MECH.dim)), rho)


def test_zero_probability_conditioning():
    with pytest.raises(ConditioningError):
        condition_state(fock.thermal_product_state(MECH, [0, 0]), np.zeros((9, 9)))


def test_thermal_conditioning_regression(blue, cfg):
    B = conditioning_operator(blue, mean_trap_frequency(cfg), MECH)
    rho = condition_state(fock.thermal_product_state(MECH, [1 / 19, 1 / 19]), B)
    fock.check_density_matrix(rho)
    assert rho[0, 0].real == pytest.approx(GROUND_WEIGHT_095, rel=1e-10)


def test_w_state_for_three_particles(cfg):
    lay = SpaceLayout.uniform(3, cavity_cutoff=None)
    cfg3 = cfg.replace(tweezer_power=(1.5,) * 3, tweezer_waist=(720e-9,) * 3,
                       particle_radius=(1e-8,) * 3, ground_state_population=1.0)
    wbar = mean_trap_frequency(cfg3)
    rho = condition_state(fock.thermal_product_state(lay, [0] * 3),
                          conditioning_operator(derive(cfg3, wbar), wbar, lay))
    m = moments_from_state(rho, lay)
    np.testing.assert_allclose(m.second, np.full((3, 3), 1 / 3), atol=1e-15)


# -- flux and bound ----------------------------------------------------------------

def test_flux_values(red):
    scale = 2 * red.mean_coupling ** 2 / red.cavity_linewidth
    assert flux(psi0_moments(), red) == pytest.approx(2 * scale, rel=1e-14)
    assert flux(psi0_moments(), red) == pytest.approx(7431.2888977597051, rel=1e-12)
    mix = 0.5 * (np.diag(np.eye(9)[MECH.basis_index((1, 0))])
                 + np.diag(np.eye(9)[MECH.basis_index((0, 1))]))
    assert flux(moments_from_state(mix.astype(complex), MECH), red) == pytest.approx(scale)
    assert flux(moments_from_state(fock.thermal_product_state(MECH, [0, 0]), MECH), red) == 0
    assert flux(psi0_moments(), red, 0.5) == pytest.approx(scale, rel=1e-14)


def test_bound_collapses_without_correlation(red):
    lo, hi = separability_bound(psi0_moments(), red)
    assert lo == hi == pytest.approx(red.flux_scale())


def test_bound_width_at_long_times(red):
    m = evolve_moments(psi0_moments().with_zero_correlation(), red, 1.0)
    lo, hi = separability_bound(m, red)
    assert hi - lo == pytest.approx(
        red.flux_scale() * 4 * math.sqrt(np.prod(red.steady_occupation)), rel=1e-12)


def test_psi0_exceeds_bound_at_first_coherence_maximum(red):
    t = np.array([2 * math.pi / abs(red.effective_detuning)])
    tr = analytic_trace(psi0_moments(), red, t)
    assert tr.flux[0] > tr.bound_upper[0]


def test_moment_check():
    good = psi0_moments()
    good.check()
    bad = MomentSet(np.array([[0.1, 0.5], [0.5, 0.1]], complex), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        bad.check()


def _random_local_state(rng, cutoff=3):
    """Mixture of Fock and coherent states of one mode on {0..cutoff}."""
    d = cutoff + 1
    rho = np.zeros((d, d), complex)
    weights = rng.dirichlet(np.ones(3))
    for w in weights:
        if rng.random() < 0.5:
            v = np.zeros(d, complex)
            v[rng.integers(d)] = 1
        else:
            alpha = rng.normal(scale=0.8) + 1j * rng.normal(scale=0.8)
            k = np.arange(d)
            fact = np.array([math.factorial(int(x)) for x in k], float)
            v = np.exp(-abs(alpha) ** 2 / 2) * alpha ** k / np.sqrt(fact)
            v /= np.linalg.norm(v)
        rho += w * np.outer(v, v.conj())
    return rho


def random_separable(rng, cutoff=3):
    """Classical mixture of product states at the given cutoff."""
    terms = rng.integers(1, 4)
    weights = rng.dirichlet(np.ones(terms))
    return sum(w * np.kron(_random_local_state(rng, cutoff), _random_local_state(rng, cutoff))
               for w in weights)


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_separable_states_never_exit_bounds(seed):
    red = derive(fig2_config())
    lay = SpaceLayout.uniform(2, mech_cutoff=3, cavity_cutoff=None)
    rho = random_separable(np.random.default_rng(seed))
    m0 = moments_from_state(rho, lay)
    m = evolve_moments(m0, red, np.array([0.0, 3e-5, 1e-4, 4e-4]))
    lo, hi = separability_bound(m, red)
    f = flux(m, red)
    tol = 1e-9 * red.flux_scale()
    assert np.all(f <= hi + tol) and np.all(f >= lo - tol)


def test_flux_oscillates_at_effective_detuning(red):
    # default protocol grid: 1 ms at 20 points per beat period
    dt = 2 * math.pi / (20 * abs(red.effective_detuning))
    t = np.arange(0, 1e-3, dt)
    m = evolve_moments(psi0_moments(), red, t)
    incoherent = red.flux_scale() * m.occupations.sum(axis=1)
    signal = flux(m, red) - incoherent
    freqs = np.fft.rfftfreq(len(t), dt)
    peak = freqs[np.argmax(np.abs(np.fft.rfft(signal))[1:]) + 1]
    assert abs(peak - abs(red.effective_detuning) / (2 * math.pi)) <= freqs[1]


# -- windows ---------------------------------------------------------------------------

def test_no_windows_inside_bounds():
    t = np.linspace(0, 1, 11)
    assert find_verification_windows(t, np.ones(11), np.zeros(11), 2 * np.ones(11)) == []


def test_single_window_spanning_grid():
    t = np.linspace(0, 1, 11)
    w = find_verification_windows(t, 3 * np.ones(11), np.zeros(11), 2 * np.ones(11))
    assert w == [Window(0.0, 1.0, "above")]


def test_window_crossings_are_interpolated():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    f = np.array([0.0, 2.0, 2.0, -2.0])
    w = find_verification_windows(t, f, -np.ones(4), np.ones(4))
    assert w == [Window(0.5, 2.25, "above"), Window(2.75, 3.0, "below")]


def test_reference_windows(red, cfg, blue):
    B = conditioning_operator(blue, mean_trap_frequency(cfg), MECH)
    rho = condition_state(fock.thermal_product_state(MECH, [1 / 19, 1 / 19]), B)
    t_dec = red.verification_time
    times = np.linspace(0, 10 * t_dec, 4001)
    tr = analytic_trace(moments_from_state(rho, MECH), red, times)
    assert len(tr.windows) >= 2
    assert all(w.end < t_dec for w in tr.windows)
    assert not [w for w in tr.windows if w.end > 3 * t_dec]
    assert np.all(tr.bound_upper >= tr.bound_lower) and np.all(tr.flux >= 0)


def test_trace_computes_windows():
    tr = FluxTrace(np.array([0.0, 1.0]), np.array([3.0, 3.0]), np.zeros(2), np.ones(2), "x")
    assert tr.windows == [Window(0.0, 1.0, "above")]
    np.testing.assert_array_equal(tr.width, np.ones(2))
