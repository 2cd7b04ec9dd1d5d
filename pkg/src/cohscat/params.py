"""Laboratory parameters and the rates derived from them.

Every frequency returned here is angular (rad/s); every rate is in 1/s.
Particle indices are zero-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class DomainError(ValueError):
    """An input lies outside the physical domain of a formula."""


class DegenerateConfigError(ValueError):
    """The configuration has no cooling steady state (net damping <= 0)."""


def _tuple(values, name: str) -> tuple[float, ...]:
    if np.ndim(values) == 0:
        values = [values]
    out = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in out):
        raise DomainError(f"{name} must be finite")
    return out


def _positive(value: float, name: str) -> float:
    if not value > 0:
        raise DomainError(f"{name} must be strictly positive, got {value!r}")
    return value


@dataclass(frozen=True)
class PhysicalConfig:
    """Lab-level inputs for N particles sharing one cavity mode.

    Per-particle sequences (``tweezer_power``, ``tweezer_waist``,
    ``particle_radius``, ``ground_state_population``) must have equal
    length; a scalar population is broadcast to all particles.  The
    susceptibility and mass density are shared by all particles.
    """

    tweezer_power: Sequence[float]
    tweezer_waist: Sequence[float]
    particle_radius: Sequence[float]
    susceptibility: float
    mass_density: float
    wavelength: float
    cavity_length: float
    cavity_waist: float
    cavity_linewidth: float
    detuning: float = 0.0
    ground_state_population: Sequence[float] | float = 1.0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        set_ = object.__setattr__
        power = _tuple(self.tweezer_power, "tweezer_power")
        waist = _tuple(self.tweezer_waist, "tweezer_waist")
        radius = _tuple(self.particle_radius, "particle_radius")
        n = len(power)
        if n < 1:
            raise DomainError("at least one particle is required")
        if len(waist) != n or len(radius) != n:
            raise DomainError(
                "tweezer_power, tweezer_waist and particle_radius must have equal length")
        for name, values in (("tweezer_power", power), ("tweezer_waist", waist),
                             ("particle_radius", radius)):
            for v in values:
                _positive(v, name)
        pop = _tuple(self.ground_state_population, "ground_state_population")
        if len(pop) == 1:
            pop = pop * n
        if len(pop) != n:
            raise DomainError("ground_state_population needs one entry per particle")
        if not all(0 < p <= 1 for p in pop):
            raise DomainError("ground_state_population must lie in (0, 1]")
        for name in ("susceptibility", "mass_density", "wavelength", "cavity_length",
                     "cavity_waist", "cavity_linewidth"):
            _positive(float(getattr(self, name)), name)
            set_(self, name, float(getattr(self, name)))
        if not 0 < self.detector_efficiency <= 1:
            raise DomainError("detector_efficiency must lie in (0, 1]")
        if not math.isfinite(self.detuning):
            raise DomainError("detuning must be finite")
        set_(self, "tweezer_power", power)
        set_(self, "tweezer_waist", waist)
        set_(self, "particle_radius", radius)
        set_(self, "ground_state_population", pop)
        set_(self, "detuning", float(self.detuning))
        set_(self, "detector_efficiency", float(self.detector_efficiency))

    @property
    def n_particles(self) -> int:
        return len(self.tweezer_power)

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def cavity_frequency(self) -> float:
        return SPEED_OF_LIGHT * self.wavenumber

    def particle_volume(self, j: int) -> float:
        return 4 * math.pi * self.particle_radius[j] ** 3 / 3

    def replace(self, **changes) -> "PhysicalConfig":
        return replace(self, **changes)

    def with_frequency_offsets(self, offsets: Sequence[float]) -> "PhysicalConfig":
        """Rescale tweezer powers so that ``omega_j`` moves by ``offsets[j]`` (rad/s).

        Trap frequencies scale as the square root of the power, so the
        offsets are realised exactly while waists stay fixed.
        """
        offsets = _tuple(offsets, "offsets")
        if len(offsets) != self.n_particles:
            raise DomainError("one frequency offset per particle is required")
        powers = []
        for j, off in enumerate(offsets):
            w0 = derive_trap_frequency(self, j)
            if w0 + off <= 0:
                raise DomainError("frequency offset drives a trap frequency nonpositive")
            powers.append(self.tweezer_power[j] * ((w0 + off) / w0) ** 2)
        return replace(self, tweezer_power=tuple(powers))

    def with_mechanical_detuning(self, delta: float) -> "PhysicalConfig":
        """Two particles only: split trap frequencies symmetrically by ``delta``."""
        if self.n_particles != 2:
            raise DomainError("mechanical_detuning shorthand needs exactly two particles")
        return self.with_frequency_offsets((-delta / 2, delta / 2))


def fig2_config(**changes) -> PhysicalConfig:
    """Two 10 nm silicon spheres in the reference cavity, red-detuned read-out.

    Tweezer powers start at 1.5 W each and are split to produce a
    32e3 rad/s mechanical detuning around the common trap frequency.
    """
    base = PhysicalConfig(
        tweezer_power=(1.5, 1.5),
        tweezer_waist=(720e-9, 720e-9),
        particle_radius=(10e-9, 10e-9),
        susceptibility=2.4,
        mass_density=2336.0,
        wavelength=1560e-9,
        cavity_length=12e-3,
        cavity_waist=30e-6,
        cavity_linewidth=2 * math.pi * 318e3,
        ground_state_population=0.95,
        detector_efficiency=1.0,
    )
    cfg = base.with_mechanical_detuning(32e3)
    cfg = cfg.replace(detuning=-mean_trap_frequency(cfg))
    return cfg.replace(**changes) if changes else cfg


# -- closed-form rate formulas -------------------------------------------------

def trap_frequency(power, waist, susceptibility, mass_density):
    """omega = 2 sqrt(chi P) / (w^2 sqrt(pi c rho)); zero power gives zero."""
    if np.any(np.asarray(power) < 0):
        raise DomainError("tweezer power must be nonnegative")
    for name, v in (("waist", waist), ("susceptibility", susceptibility),
                    ("mass_density", mass_density)):
        if np.any(np.asarray(v) <= 0):
            raise DomainError(f"{name} must be strictly positive")
    return (2 * np.sqrt(susceptibility * power)
            / (np.asarray(waist) ** 2 * np.sqrt(math.pi * SPEED_OF_LIGHT * mass_density)))


def coupling_rate(power, waist, particle_volume, susceptibility, mass_density,
                  wavenumber, mode_volume, omega):
    r"""Linear coherent-scattering coupling g = (chi/2w) sqrt(P k^3 V / (pi V_c rho omega))."""
    return (susceptibility / (2 * waist)
            * np.sqrt(power * wavenumber ** 3 * particle_volume
                      / (math.pi * mode_volume * mass_density * omega)))


def scattering_rate(power, waist, particle_volume, susceptibility, mass_density,
                    wavenumber, omega):
    """Rayleigh-scattering recoil rate near the tweezer focus."""
    if power == 0:
        return 0.0
    return (power * susceptibility ** 2 * particle_volume * wavenumber ** 5
            / (15 * math.pi ** 2 * SPEED_OF_LIGHT * mass_density * omega * waist ** 2))


def optical_spring(g, omega, detuning, kappa):
    """Coupling-induced mechanical frequency shift; odd in the detuning."""
    plus = detuning + omega
    minus = detuning - omega
    return g ** 2 * (plus / (kappa ** 2 + plus ** 2) + minus / (kappa ** 2 + minus ** 2))


def sideband_rates(g, omega, detuning, kappa, gamma_sc):
    """Return (heating, cooling) rates ``gamma^+``, ``gamma^-``."""
    heating = gamma_sc + 2 * g ** 2 * kappa / (kappa ** 2 + (detuning - omega) ** 2)
    cooling = gamma_sc + 2 * g ** 2 * kappa / (kappa ** 2 + (detuning + omega) ** 2)
    return heating, cooling


def verification_time(mean_damping: float, mean_occupation: float) -> float:
    """Time over which a ground-state-seeded signal can still exceed the bound."""
    if not mean_damping > 0:
        raise DegenerateConfigError("verification time needs positive net damping")
    if mean_occupation == 0:
        return math.inf
    n = mean_occupation
    return math.log((2 * n + math.sqrt(2) - 1) / (2 * n)) / mean_damping


# -- config-level derivations -------------------------------------------------

def derive_trap_frequency(cfg: PhysicalConfig, j: int) -> float:
    return float(trap_frequency(cfg.tweezer_power[j], cfg.tweezer_waist[j],
                                cfg.susceptibility, cfg.mass_density))


def mean_trap_frequency(cfg: PhysicalConfig) -> float:
    return float(np.mean([derive_trap_frequency(cfg, j) for j in range(cfg.n_particles)]))


def derive_mode_volume(cfg: PhysicalConfig) -> float:
    """Standing-wave Gaussian mode volume pi w^2 l / 4."""
    _positive(cfg.cavity_waist, "cavity_waist")
    _positive(cfg.cavity_length, "cavity_length")
    return math.pi * cfg.cavity_waist ** 2 * cfg.cavity_length / 4


def derive_coupling(cfg: PhysicalConfig, j: int) -> float:
    return float(coupling_rate(cfg.tweezer_power[j], cfg.tweezer_waist[j],
                               cfg.particle_volume(j), cfg.susceptibility, cfg.mass_density,
                               cfg.wavenumber, derive_mode_volume(cfg),
                               derive_trap_frequency(cfg, j)))


def derive_scattering_rate(cfg: PhysicalConfig, j: int) -> float:
    return float(scattering_rate(cfg.tweezer_power[j], cfg.tweezer_waist[j],
                                 cfg.particle_volume(j), cfg.susceptibility,
                                 cfg.mass_density, cfg.wavenumber,
                                 derive_trap_frequency(cfg, j)))


def derive_optical_spring(cfg: PhysicalConfig, j: int) -> float:
    return float(optical_spring(derive_coupling(cfg, j), derive_trap_frequency(cfg, j),
                                cfg.detuning, cfg.cavity_linewidth))


def derive_sideband_rates(cfg: PhysicalConfig, j: int) -> tuple[float, float, float, float]:
    """Return ``(gamma_plus, gamma_minus, gamma, n)`` for particle ``j``.

    Raises
    ------
    DegenerateConfigError
        If heating balances or dominates cooling, so that no steady
        occupation exists.
    """
    heating, cooling = sideband_rates(derive_coupling(cfg, j), derive_trap_frequency(cfg, j),
                                      cfg.detuning, cfg.cavity_linewidth,
                                      derive_scattering_rate(cfg, j))
    net = cooling - heating
    if not net > 0:
        raise DegenerateConfigError(
            f"particle {j}: net damping {net:.6g} 1/s is not positive (heating-dominated)")
    return float(heating), float(cooling), float(net), float(heating / net)


def derive_verification_time(cfg: PhysicalConfig) -> float:
    rates = [derive_sideband_rates(cfg, j) for j in range(cfg.n_particles)]
    gamma = float(np.mean([r[2] for r in rates]))
    n = float(np.mean([r[3] for r in rates]))
    return verification_time(gamma, n)


@dataclass(frozen=True)
class DerivedParams:
    """All model frequencies and rates at one detuning.

    Steady occupations and the verification time are NaN when the
    detuning does not produce net cooling.  Pair matrices are indexed
    ``[i, j]`` with ``effective_detuning_pairs[i, j] = w~_i - w~_j`` where
    ``w~`` is the spring-shifted trap frequency.
    """

    detuning: float
    cavity_linewidth: float
    mode_volume: float
    trap_frequency: np.ndarray
    coupling: np.ndarray
    scattering_rate: np.ndarray
    optical_spring: np.ndarray
    heating_rate: np.ndarray
    cooling_rate: np.ndarray
    net_damping: np.ndarray = field(init=False)
    steady_occupation: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("trap_frequency", "coupling", "scattering_rate", "optical_spring",
                     "heating_rate", "cooling_rate"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        net = self.cooling_rate - self.heating_rate
        with np.errstate(divide="ignore", invalid="ignore"):
            n = np.where(net > 0, self.heating_rate / net, np.nan)
        net.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "net_damping", net)
        object.__setattr__(self, "steady_occupation", n)

    @property
    def n_particles(self) -> int:
        return len(self.trap_frequency)

    @property
    def mean_trap_frequency(self) -> float:
        return float(np.mean(self.trap_frequency))

    @property
    def mean_coupling(self) -> float:
        return float(np.mean(self.coupling))

    @property
    def mean_damping(self) -> float:
        return float(np.mean(self.net_damping))

    @property
    def shifted_frequency(self) -> np.ndarray:
        return self.trap_frequency + self.optical_spring

    @property
    def mechanical_detuning(self) -> float:
        """omega_2 - omega_1 (NaN for a single particle)."""
        if self.n_particles < 2:
            return math.nan
        return float(self.trap_frequency[1] - self.trap_frequency[0])

    @property
    def effective_detuning(self) -> float:
        """Spring-shifted beat frequency between particles 2 and 1."""
        if self.n_particles < 2:
            return math.nan
        return float(self.shifted_frequency[1] - self.shifted_frequency[0])

    @property
    def mechanical_detuning_pairs(self) -> np.ndarray:
        return self.trap_frequency[:, None] - self.trap_frequency[None, :]

    @property
    def effective_detuning_pairs(self) -> np.ndarray:
        w = self.shifted_frequency
        return w[:, None] - w[None, :]

    @property
    def pair_damping(self) -> np.ndarray:
        return (self.net_damping[:, None] + self.net_damping[None, :]) / 2

    @property
    def verification_time(self) -> float:
        if not np.all(self.net_damping > 0):
            return math.nan
        return verification_time(self.mean_damping, float(np.mean(self.steady_occupation)))

    def flux_scale(self) -> float:
        """Prefactor 2 g^2 / kappa converting <A^dag A> into a photon flux."""
        return 2 * self.mean_coupling ** 2 / self.cavity_linewidth

    def at_detuning(self, detuning: float) -> "DerivedParams":
        """Same particles and cavity, rates recomputed for another detuning."""
        return _rates_at(self.trap_frequency, self.coupling, self.scattering_rate,
                         detuning, self.cavity_linewidth, self.mode_volume)

    def as_dict(self) -> dict:
        out = {
            "detuning": self.detuning,
            "cavity_linewidth": self.cavity_linewidth,
            "mode_volume": self.mode_volume,
            "mean_trap_frequency": self.mean_trap_frequency,
            "mean_coupling": self.mean_coupling,
            "mean_damping": self.mean_damping,
            "mechanical_detuning": self.mechanical_detuning,
            "effective_detuning": self.effective_detuning,
            "verification_time": self.verification_time,
        }
        for name in ("trap_frequency", "coupling", "scattering_rate", "optical_spring",
                     "heating_rate", "cooling_rate", "net_damping", "steady_occupation"):
            out[name] = getattr(self, name).tolist()
        out["pair_damping"] = self.pair_damping.tolist()
        out["effective_detuning_pairs"] = self.effective_detuning_pairs.tolist()
        return out


def _rates_at(omega, g, gamma_sc, detuning, kappa, mode_volume) -> DerivedParams:
    omega = np.asarray(omega, dtype=float)
    g = np.asarray(g, dtype=float)
    gamma_sc = np.asarray(gamma_sc, dtype=float)
    heating, cooling = sideband_rates(g, omega, detuning, kappa, gamma_sc)
    return DerivedParams(
        detuning=float(detuning),
        cavity_linewidth=float(kappa),
        mode_volume=float(mode_volume),
        trap_frequency=omega,
        coupling=g,
        scattering_rate=gamma_sc,
        optical_spring=optical_spring(g, omega, detuning, kappa),
        heating_rate=heating,
        cooling_rate=cooling,
    )


def derive(cfg: PhysicalConfig, detuning: float | None = None) -> DerivedParams:
    """Derive every model rate from ``cfg`` (at ``detuning`` if given)."""
    n = cfg.n_particles
    omega = [derive_trap_frequency(cfg, j) for j in range(n)]
    g = [derive_coupling(cfg, j) for j in range(n)]
    gamma_sc = [derive_scattering_rate(cfg, j) for j in range(n)]
    delta = cfg.detuning if detuning is None else float(detuning)
    return _rates_at(omega, g, gamma_sc, delta, cfg.cavity_linewidth, derive_mode_volume(cfg))
