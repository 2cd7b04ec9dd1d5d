r"""
Heralded flux and the separability bound
========================================

After a Stokes photon is detected on the blue sideband, the laser is switched
to the red sideband and the anti-Stokes photon flux is recorded.  For a
separable two-particle state this flux must stay between two bounds built
from the particle occupations.  The heralded state leaves that band whenever
the two particles beat in phase, and the band widens as the motion rethermalises.

Run with ``python3 demos/02_heralded_flux.py``.  If matplotlib is installed,
the flux and its bounds are also saved to ``heralded_flux.png``.
"""

import numpy as np

from cohscat import fig2_config, run_protocol

######################################################################
# Running the closed-form engine
# ------------------------------
#
# The analytic engine conditions the initial thermal state on one click and
# propagates the second moments in closed form.  It is fast enough to run
# over a millisecond on a grid of twenty points per beat period.

res = run_protocol(fig2_config(), engine="analytic", horizon=1e-3)
trace = res.traces["analytic"]
summary = res.summaries["analytic"]
print("conditioned fidelity with (|10> + |01>)/sqrt(2): %.3f" % summary.conditioned_fidelity)

######################################################################
# Verification windows
# --------------------
#
# A window is an interval where the flux lies outside the separable band.
# They recur once per beat period and stop near the verification time.

for w in trace.windows:
    print(f"  {w.start * 1e6:7.1f} - {w.end * 1e6:7.1f} us  ({w.side} the band)")
print("beat period %.1f us, t_dec %.1f us" % (summary.beat_period * 1e6,
                                              summary.verification_time * 1e6))

######################################################################
# Plot
# ----

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    t_us = trace.times * 1e6
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.fill_between(t_us, trace.bound_lower, trace.bound_upper, color="0.85", label="separable")
    ax.plot(t_us, trace.flux, lw=1, label="heralded flux")
    ax.axvline(summary.verification_time * 1e6, ls="--", c="k", lw=0.8)
    ax.set_xlabel("time after click (us)")
    ax.set_ylabel("photon flux (1/s)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig("heralded_flux.png", dpi=150)
    print("wrote heralded_flux.png")
else:
    print("peak flux %.3g 1/s, final band width %.3g 1/s" % (np.max(trace.flux), trace.width[-1]))
