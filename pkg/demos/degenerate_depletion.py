"""
Degenerate down-conversion with a depleted pump
===============================================

A coherent pump (mean photon number 20) drives an empty signal mode
through the interaction a1^2 a2^dag + h.c.  We follow both photon numbers,
find where the exchange first turns around and look at the quadrature
squeezing there.
"""

import math
import warnings

import numpy as np

from chi2sim import InitialSpec, ModeSpec, Scenario, extremum_scan, observable_record, simulate

# the pump cutoff of 50 leaves ~5e-9 of the Poisson tail outside the box
warnings.simplefilter("ignore")

modes = (ModeSpec("1", 100), ModeSpec("2", 50))
initial = (InitialSpec(), InitialSpec("coherent", mean_photons=20.0, phase=math.pi / 2))
taus = tuple(np.round(np.arange(0, 0.61, 0.01), 12))
scenario = Scenario("degenerate", modes, initial, (0.0, 0.0), taus)

records = [observable_record(state, tau) for tau, state in simulate(scenario)]

print(" tau     N1       N2     N1+2N2")
for r in records[::5]:
    n1, n2 = r.mean_photons
    print(f"{r.tau:5.2f} {n1:8.4f} {n2:8.4f} {n1 + 2 * n2:9.5f}")

###############################################################################
# The signal peaks and the pump bottoms out at the same interaction length.

peak = extremum_scan(records, "1", "max")
dip = extremum_scan(records, "2", "min")
print(f"\nN1 max at tau={peak.tau:.2f} ({peak.value:.3f}); N2 min at tau={dip.tau:.2f} ({dip.value:.3f})")

at = records[taus.index(0.38)]
print(f"pump depletion at 0.38: {1 - at.mean_photons[1] / records[0].mean_photons[1]:.4f}")

###############################################################################
# Squeezing shows up in p for the signal and in x for the pump.

print(f"var p1 = {at.var_p[0]:.4f} ({at.squeezing_db_p[0]:.2f} dB)")
print(f"var x2 = {at.var_x[1]:.4f} ({at.squeezing_db_x[1]:.2f} dB)")
print(f"Fano factors: {at.fano[0]:.3f}, {at.fano[1]:.3f}; Schmidt number {at.schmidt_K:.3f}")
