r"""
Checking the closed forms against the full master equation
==========================================================

The closed-form moments eliminate the cavity adiabatically and drop the
cross terms that the cavity induces between the particles.  Here both particles
and the cavity mode are kept in a truncated Fock space and the Lindblad equation
is integrated directly: first the blue herald, up to the first click, and then
the red read-out.

The full engine needs a few seconds to half a minute for the first 200 us.  Run with
``python3 demos/03_full_master_equation.py``.
"""

import numpy as np

from cohscat import SpaceLayout, fig2_config, run_protocol

######################################################################
# One photon and two phonons per particle
# ---------------------------------------
#
# ``SpaceLayout`` takes the mechanical cutoffs first and the cavity cutoff
# second.  The coupling is weak (g/kappa ~ 0.03), so one cavity photon is enough.

layout = SpaceLayout((2, 2), 1)
res = run_protocol(fig2_config(), layout, engine="both", horizon=2e-4)
full, ana = res.traces["full"], res.traces["analytic"]

######################################################################
# Comparing the two engines
# -------------------------
#
# Early points are excluded: the full engine starts with an empty cavity that
# needs a few 1/kappa to fill.  What remains at the reference beat frequency
# is mostly the collective, cavity-mediated damping, of order 2 g^2/kappa,
# which the closed forms leave out.

settled = full.times * res.red.cavity_linewidth >= 10
dev = np.abs(full.flux - ana.flux)[settled].max() / ana.flux.max()
print("largest flux difference: %.1f %% of the peak flux" % (100 * dev))
stats = full.extras["stats"]
print(f"{stats.accepted} accepted steps, {stats.rejected} rejected, "
      f"Hermiticity drift {stats.max_hermiticity_drift:.1e}")
print("full-engine herald fidelity %.4f" % res.summaries["full"].conditioned_fidelity)
print("windows (full):    ", [(round(w.start * 1e6, 1), round(w.end * 1e6, 1)) for w in full.windows])
print("windows (analytic):", [(round(w.start * 1e6, 1), round(w.end * 1e6, 1)) for w in ana.windows])
