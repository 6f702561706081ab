"""
Signal, idler and pump entanglement
===================================

Non-degenerate down-conversion (a_s a_i a_p^dag + h.c.) from a coherent
pump.  The Schmidt number of the signal against the rest grows as photons
are exchanged; the signal and idler stay equally populated.
"""

import math
import warnings

import numpy as np

from chi2sim import InitialSpec, ModeSpec, Scenario, observable_record, simulate

warnings.simplefilter("ignore")

modes = (ModeSpec("s", 40), ModeSpec("i", 40), ModeSpec("p", 40))
initial = (InitialSpec(), InitialSpec(), InitialSpec("coherent", mean_photons=20.0, phase=math.pi / 2))
scenario = Scenario("nondegenerate", modes, initial, (0.0, 0.0, 0.0), tuple(np.linspace(0, 1, 11)))

print(" tau     Ns       Ni       Np       K")
for tau, state in simulate(scenario):
    r = observable_record(state, tau, partition=(0,))
    ns, ni, npump = r.mean_photons
    print(f"{tau:4.1f} {ns:8.4f} {ni:8.4f} {npump:8.4f} {r.schmidt_K:8.4f}")
