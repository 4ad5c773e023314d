# %% [markdown]
# Second-order couplings of a fixed symmetric Trotter step, three ways:
# closed form, exact commutator algebra, and the logarithm of the dense step.

# %%
from fractions import Fraction

import numpy as np

from effham.bch import bch_coefficients, extract_effective_couplings, six_term_basis, symbolic_bch_coefficients
from effham.simulator import ChainParams

p = ChainParams(8)
b = six_term_basis()

# %%
# exact algebra at tau = 1/5
sym = symbolic_bch_coefficients(Fraction(1, 5), Fraction(-1), Fraction(1, 2), Fraction(-17, 10))
for label, c in sym.items():
    print(f"{label:6s} {str(c):>14s}  {float(c): .6f}")

# %%
# matrix log vs closed form; the gap is fourth order in tau
# (at L=8 the principal branch is unambiguous only for tau < 0.198)
print(" tau     max|log - closed|")
for tau in (0.15, 0.1, 0.05, 0.025):
    gap = np.abs(extract_effective_couplings(tau, p, b) - bch_coefficients(tau, p).vector(b)).max()
    print(f"{tau:5.3f}   {gap:.3e}")

# %%
# the YY coupling picked up by the step is positive for these couplings
tau = 0.1
print("matrix log C_YY:", extract_effective_couplings(tau, p, b)[b.index("YY")])
print("closed form C_YY:", bch_coefficients(tau, p).C_YY)
