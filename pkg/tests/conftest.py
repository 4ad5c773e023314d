"""Dense brute-force oracles shared by the tests.

These use explicit Kronecker products and scipy's expm, and deliberately
share no code with the package. Basis ordering: site j is bit j, bit 0 is a
down spin, so in the single-site basis (down, up) Z = diag(-1, 1).
"""
import numpy as np
import pytest
import scipy.linalg as la

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
# standard Pauli Y written in the (down, up) ordering
Y2 = np.array([[0, 1j], [-1j, 0]], dtype=complex)
Z2 = np.diag([-1.0, 1.0]).astype(complex)
PAULI = {"I": I2, "X": X2, "Y": Y2, "Z": Z2}


def dense_string(sites: dict, L: int) -> np.ndarray:
    """Kronecker product with site ``L-1`` leftmost (most significant bit)."""
    out = np.ones((1, 1), dtype=complex)
    for j in reversed(range(L)):
        out = np.kron(out, PAULI[sites.get(j, "I")])
    return out


def dense_translation_sum(letters: str, L: int) -> np.ndarray:
    return sum(dense_string({(j + k) % L: c for k, c in enumerate(letters)}, L) for j in range(L))


def dense_symmetrized(letters: str, L: int) -> np.ndarray:
    H = dense_translation_sum(letters, L)
    if letters[::-1] != letters:
        H = H + dense_translation_sum(letters[::-1], L)
    return H


def dense_hamiltonian(L, J_z=-1.0, h_z=0.5, h_x=-1.7) -> np.ndarray:
    return J_z * dense_translation_sum("ZZ", L) + h_z * dense_translation_sum("Z", L) + h_x * dense_translation_sum("X", L)


def dense_trotter(L, tau, J_z=-1.0, h_z=0.5, h_x=-1.7) -> np.ndarray:
    Hx = h_x * dense_translation_sum("X", L)
    Hz = J_z * dense_translation_sum("ZZ", L) + h_z * dense_translation_sum("Z", L)
    half = la.expm(-0.5j * tau * Hx)
    return half @ la.expm(-1j * tau * Hz) @ half


def dense_partial_trace(psi: np.ndarray, keep, L: int) -> np.ndarray:
    """Element-by-element partial trace; bit k of the result index is site ``keep[k]``."""
    rest = [j for j in range(L) if j not in keep]
    k = len(keep)
    rho = np.zeros((1 << k, 1 << k), dtype=complex)
    for a in range(1 << k):
        for b in range(1 << k):
            acc = 0j
            for r in range(1 << len(rest)):
                ia = ib = 0
                for n, s in enumerate(keep):
                    ia |= ((a >> n) & 1) << s
                    ib |= ((b >> n) & 1) << s
                for n, s in enumerate(rest):
                    ia |= ((r >> n) & 1) << s
                    ib |= ((r >> n) & 1) << s
                acc += psi[ia] * np.conj(psi[ib])
            rho[a, b] = acc
    return rho


def random_state(rng, L) -> np.ndarray:
    psi = rng.standard_normal(1 << L) + 1j * rng.standard_normal(1 << L)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
