r"""
From lab inputs to rates
========================

Two silica nanospheres sit in separate optical tweezers inside one high-finesse
cavity.  Light scattered by each particle drives the cavity mode directly, so
the tweezer itself sets the trap frequency, the optomechanical coupling and the
recoil heating.  This script walks the bundled reference configuration through
the ``params`` pipeline and prints the numbers every later demo depends on.

Run with ``python3 demos/01_parameters.py``.
"""

import math

from cohscat import derive, fig2_config
from cohscat.params import mean_trap_frequency

######################################################################
# The reference configuration
# ---------------------------
#
# ``fig2_config`` returns the bundled parameter set.  Tweezer powers differ
# slightly between the two particles; that split is what produces the
# mechanical detuning of 32e3 rad/s.

cfg = fig2_config()
print("tweezer powers (W):", cfg.tweezer_power)
print("cavity linewidth kappa (rad/s): %.4g" % cfg.cavity_linewidth)

######################################################################
# Derived quantities at the read-out detuning
# -------------------------------------------
#
# ``derive`` defaults to the red-detuned read-out, Delta = -mean(omega).  All
# rates are angular (rad/s) or inverse seconds.

red = derive(cfg)
wbar = mean_trap_frequency(cfg)
print("mean trap frequency: %.1f kHz" % (wbar / (2 * math.pi) / 1e3))
for j in range(red.n_particles):
    print(f"particle {j}: g = {red.coupling[j]:.0f} rad/s, "
          f"gamma_sc = {red.scattering_rate[j]:.1f} 1/s, "
          f"n = {red.steady_occupation[j]:.4f}")
print("effective detuning: %.1f rad/s" % red.effective_detuning)
print("verification time t_dec: %.1f us" % (red.verification_time * 1e6))

######################################################################
# The herald segment
# ------------------
#
# Blue detuning turns the roles of the sidebands around: Stokes scattering
# now dominates, and a detected photon announces that one phonon was added
# to one of the two particles, without saying which.

blue = derive(cfg, wbar)
print("blue detuning heating rates gamma+ (1/s):", blue.heating_rate.round(1))
