import math

import numpy as np
import pytest

from effham.basis import realize
from effham.simulator import ChainParams, hamiltonian_matrix, initial_state, trotter_step
from effham.symmetry import symmetric_sector


@pytest.mark.parametrize("L,dim", [(4, 6), (6, 13), (8, 30), (10, 78)])
def test_sector_dimension(L, dim):
    S = symmetric_sector(L)
    assert S.dim == dim
    Q = S.Q.toarray()
    assert np.allclose(Q.T @ Q, np.eye(dim))


def test_states_stay_in_sector():
    L = 8
    p = ChainParams(L)
    S = symmetric_sector(L)
    psi = initial_state(L, math.pi / 3)
    assert S.leakage(psi) < 1e-12
    for tau in (0.1, 0.37, 0.9):
        psi = trotter_step(psi, tau, p)
        assert S.leakage(psi) < 1e-12
    assert np.allclose(S.lift(S.project(psi)), psi)


def test_restriction_commutes_with_projection():
    L = 6
    S = symmetric_sector(L)
    psi = trotter_step(initial_state(L, 0.4), 0.3, ChainParams(L))
    for op in ("X", "ZXZ", "XZ+ZX", "YY"):
        O = realize(op, L).matrix
        assert np.allclose(S.restrict(O) @ S.project(psi), S.project(O @ psi))
    H = hamiltonian_matrix(ChainParams(L))
    assert np.allclose(S.restrict(H), S.restrict(hamiltonian_matrix(ChainParams(L), sparse=True)))


def test_leakage_detects_asymmetric_state():
    S = symmetric_sector(4)
    psi = np.zeros(16, dtype=complex)
    psi[1] = 1.0
    assert S.leakage(psi) > 0.5
