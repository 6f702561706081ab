"""
Wigner functions at the turning point
=====================================

Reduce the joint state at tau = 0.38 to each mode and map its Wigner
function.  The signal develops strong interference fringes; both modes go
negative.  Pass a directory to save the grids as CSV.
"""

import math
import sys
import warnings

from chi2sim import InitialSpec, ModeSpec, Scenario, negativity_volume, simulate, wigner_of_mode
from chi2sim.io import write_wigner

warnings.simplefilter("ignore")

modes = (ModeSpec("1", 100), ModeSpec("2", 50))
initial = (InitialSpec(), InitialSpec("coherent", mean_photons=20.0, phase=math.pi / 2))
scenario = Scenario("degenerate", modes, initial, (0.0, 0.0), (0.0, 0.38))
_, state = list(simulate(scenario))[-1]

for mode in ("1", "2"):
    grid = wigner_of_mode(state, mode, tau=0.38)
    print(
        f"mode {mode}: min W = {grid.min():+.4f}, negative volume = {negativity_volume(grid):.4f}, "
        f"grid integral = {grid.integral():.4f}, <p> = {grid.mean_p():+.3f}"
    )
    if len(sys.argv) > 1:
        write_wigner(grid, f"{sys.argv[1]}/wigner_{mode}.csv")

###############################################################################
# The same snapshot with loss on both modes (gamma/g = 0.15) needs the
# master equation.  That run takes a few minutes, so it is left opt-in.

if "--lossy" in sys.argv:
    lossy = scenario.with_losses([0.15, 0.15])
    _, rho = list(simulate(lossy))[-1]
    for mode in ("1", "2"):
        grid = wigner_of_mode(rho, mode, tau=0.38)
        print(f"lossy mode {mode}: min W = {grid.min():+.4f}")
