# %% [markdown]
# Learning effective Hamiltonians along a Trotter trajectory at L=8.
#
# A fixed-step run and a loose-tolerance adaptive run are learned on the
# 207-element basis; we then look at loss growth, coupling deviations and
# the importance ranking.

# %%
import math

import numpy as np

from effham.ada import AdaConfig, fixed_step_run, run
from effham.analysis import deviation_stats, fit_slope, rank_basis, rdm_error_series, truncate_basis
from effham.basis import build_basis
from effham.bch import fixed_step_comparison, learned_centroid
from effham.learner import AdamConfig, learn_trajectory
from effham.simulator import ChainParams, initial_state

L = 8
p = ChainParams(L)
psi0 = initial_state(L, math.pi / 3)
basis = build_basis(5, parity_filter=False, interior_identity=False)
print("basis size", basis.N)

# %%
trajs = {
    "fixed 0.2": fixed_step_run(psi0, 0.2, 50, p),
    "ada (0.5, 0.5)": run(psi0, AdaConfig(0.5, 0.5, M=50), p),
}
for name, tr in trajs.items():
    print(f"{name:15s} mean tau {tr.mean_tau():.4f}  final t {tr.times[-1]:.3f}")

# %%
records = {name: learn_trajectory(tr, basis, AdamConfig()) for name, tr in trajs.items()}
for name, recs in records.items():
    fit = fit_slope(recs)
    print(f"{name:15s} max loss {max(r.loss_final for r in recs):.2e}  slope {fit.gamma:.2e}  "
          f"epochs {sum(r.epochs_used for r in recs)}")

# %%
stats = [deviation_stats(recs, basis, p) for recs in records.values()]
ranking = rank_basis(stats)
print("top ranked terms:")
for label, mean, std in ranking[:10]:
    print(f"  {label:10s} {mean:.4f} +- {std:.4f}")

# %%
# learned centroid next to the closed form at the mean step
tr = trajs["fixed 0.2"]
cen = learned_centroid(records["fixed 0.2"], basis)
bch = fixed_step_comparison(tr).as_dict()
for k in bch:
    print(f"{k:6s} closed {bch[k]: .5f}   learned {cen[k]: .5f}")

# %%
# relearn on a truncated basis and compare 3-site reduced density matrix errors
small = truncate_basis(basis, ranking, 16)
tr = trajs["ada (0.5, 0.5)"]
_, e_full = rdm_error_series(tr, records["ada (0.5, 0.5)"], basis)
_, e_small = rdm_error_series(tr, learn_trajectory(tr, small, AdamConfig()), small)
print("N=16 labels:", small.labels)
print(f"mean rdm error: full {np.mean(e_full):.3e}   truncated {np.mean(e_small):.3e}")
