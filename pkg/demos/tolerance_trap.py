# %% [markdown]
# Why tight tolerances stall the adaptive step search.
#
# Deviations are measured against the initial state. Along a fixed-step run
# they drift one way for a while, so once a greedy step uses up the slack
# every later admissible step shrinks towards zero.

# %%
import math

import numpy as np

from effham.ada import AdaConfig, StepNotFound, fixed_step_run, run
from effham.simulator import ChainParams, energy_and_variance_density, initial_state

L = 8
p = ChainParams(L)
psi0 = initial_state(L, math.pi / 3)
E0, v0 = energy_and_variance_density(psi0, p)

# %%
for tol in [(0.02, 0.01), (0.002, 0.01), (0.1, 0.1), (0.5, 0.5)]:
    try:
        tr = run(psi0, AdaConfig(*tol, M=50), p)
        print(tol, "complete, mean tau", round(tr.mean_tau(), 4))
    except StepNotFound as exc:
        print(tol, "stuck at step", exc.step_index, "taus", np.round(exc.trajectory.taus, 5))

# %%
# drift of the conserved densities under fixed steps
for tau in (0.05, 0.1, 0.2):
    tr = fixed_step_run(psi0, tau, int(round(2.0 / tau)), p)
    dE = np.array([s.E for s in tr.steps]) - E0
    dv = np.array([s.dE2 for s in tr.steps]) - v0
    print(f"tau {tau}: max |dE| {np.abs(dE).max():.4f}  max |dvar| {np.abs(dv).max():.4f}")
