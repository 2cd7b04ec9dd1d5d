r"""
Three particles and a W state
=============================

With three particles in the cavity a single herald prepares the W state
(|100> + |010> + |001>)/sqrt(3).  The read-out flux then carries one beat
per particle pair.  Picking trap-frequency offsets with distinct
differences makes all three beats visible in the spectrum.

Run with ``python3 demos/04_three_particles.py``.
"""

import math

import numpy as np

from cohscat import fig2_config, run_nparticle

base = fig2_config().replace(tweezer_power=(1.5,) * 3, tweezer_waist=(720e-9,) * 3,
                             particle_radius=(1e-8,) * 3, ground_state_population=1.0)
cfg = base.with_frequency_offsets((-40e3, -8e3, 40e3))
res, beats = run_nparticle(cfg, horizon=2e-3)
trace = res.traces["analytic"]
print("W-state fidelity: %.6f" % res.summaries["analytic"].conditioned_fidelity)

######################################################################
# Spectrum of the coherent part of the flux
# -----------------------------------------
#
# The midpoint of the separable band carries the occupations only, so
# subtracting it leaves the pair correlations.

signal = trace.flux - 0.5 * (trace.bound_lower + trace.bound_upper)
dt = trace.times[1] - trace.times[0]
spec = np.abs(np.fft.rfft(signal - signal.mean()))
freqs = np.fft.rfftfreq(len(signal), dt)
for b in beats:
    f = abs(b.effective_detuning) / (2 * math.pi)
    k = int(round(f / freqs[1]))
    print(f"pair ({b.i},{b.j}): beat {f / 1e3:6.2f} kHz, damping {b.damping:.0f} 1/s, "
          f"spectral weight {spec[k] / spec.max():.2f}")
