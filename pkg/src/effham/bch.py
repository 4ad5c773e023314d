"""Fixed-step reference couplings.

A symmetric Trotter step of size ``tau`` is generated, through second order,
by ``H_* + tau**2 * (...)`` whose correction lives on six symmetrized classes:
``X, Z, ZZ, YY, XZ+ZX, ZXZ``. This module evaluates those coefficients in
closed form, recovers them exactly from the Pauli algebra, and extracts the
full effective generator numerically from the logarithm of the dense step.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
import scipy.linalg as la

from .basis import OperatorBasis, build_basis, project_onto_basis
from .pauli import PauliSum, Qi, bulk_coefficients, symmetric_bch_order2, translation_sum
from .simulator import ChainParams, hamiltonian_matrix, trotter_unitary

__all__ = [
    "BCH_LABELS",
    "BchCoefficients",
    "BranchAmbiguity",
    "bch_coefficients",
    "symbolic_bch_coefficients",
    "six_term_basis",
    "effective_generator",
    "extract_effective_couplings",
    "fixed_step_comparison",
    "learned_centroid",
    "comparison_dict",
    "write_comparison",
]

# coefficient name -> basis label
BCH_LABELS = {
    "C_X": "X",
    "C_Z": "Z",
    "C_ZZ": "ZZ",
    "C_YY": "YY",
    "C_ZX": "XZ+ZX",
    "C_ZXZ": "ZXZ",
}


class BranchAmbiguity(ArithmeticError):
    """The step is too large for the principal matrix logarithm to be unambiguous."""


@dataclass(frozen=True)
class BchCoefficients:
    C_X: float
    C_Z: float
    C_ZZ: float
    C_YY: float
    C_ZX: float
    C_ZXZ: float
    tau: float

    def as_dict(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("tau")
        return d

    def by_label(self) -> dict[str, float]:
        return {BCH_LABELS[k]: v for k, v in self.as_dict().items()}

    def vector(self, basis: OperatorBasis) -> np.ndarray:
        """Coefficients laid out on ``basis`` (zeros for the other elements)."""
        out = np.zeros(len(basis))
        for label, v in self.by_label().items():
            if label in basis:
                out[basis.index(label)] = v
        return out


def bch_coefficients(tau: float, p: ChainParams) -> BchCoefficients:
    """Second-order effective couplings of a fixed symmetric step ``tau``.

    ``C_YY = -(tau^2/3) J_z h_x^2``: this is the sign produced by the exact
    commutator algebra and by the matrix logarithm of the step.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    J, hz, hx = p.J_z, p.h_z, p.h_x
    t2 = tau * tau
    return BchCoefficients(
        C_X=hx - (2 * t2 / 3) * J * J * hx - (t2 / 3) * hz * hz * hx,
        C_Z=hz + (t2 / 6) * hx * hx * hz,
        C_ZZ=J + (t2 / 3) * J * hx * hx,
        C_YY=-(t2 / 3) * J * hx * hx,
        C_ZX=-(2 * t2 / 3) * J * hx * hz,
        C_ZXZ=-(2 * t2 / 3) * J * J * hx,
        tau=tau,
    )


def _exact(x) -> Any:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return x


def _split_hamiltonian(J_z, h_z, h_x, n_sites: int) -> tuple[PauliSum, PauliSum]:
    hx = translation_sum("X", h_x, n_sites)
    hz = translation_sum("ZZ", J_z, n_sites) + translation_sum("Z", h_z, n_sites)
    return hx, hz


def symbolic_bch_coefficients(tau, J_z, h_z, h_x, n_sites: int = 12) -> dict[str, Any]:
    """Bulk couplings of the order-two symmetric BCH generator, by exact algebra.

    Arguments may be ints, Fractions or sympy expressions. The chain is an open
    segment long enough for the centre site to see no boundary. Returns every
    nonzero bulk class keyed by its symmetrized label; the values are exact.
    """
    from .basis import SymmetrizedOperator

    tau, J_z, h_z, h_x = (_exact(v) for v in (tau, J_z, h_z, h_x))
    hx, hz = _split_hamiltonian(J_z, h_z, h_x, n_sites)
    gen = symmetric_bch_order2(hx, hz, tau)
    anchor = n_sites // 2 - 1
    out: dict[str, Any] = {}
    for letters, c in sorted(bulk_coefficients(gen, anchor).items()):
        op = SymmetrizedOperator.from_string(letters)
        if op.label in out:
            if out[op.label] != c:
                raise AssertionError(f"mirror images of {op.label} carry different coefficients")
            continue
        out[op.label] = c
    for label, c in out.items():
        if isinstance(c, Qi):
            if c.im != 0:
                raise AssertionError(f"{label} has an imaginary coefficient")
            out[label] = c.re
    return out


def six_term_basis() -> OperatorBasis:
    return build_basis(3, parity_filter=False, interior_identity=False).subset(BCH_LABELS.values())


def effective_generator(tau: float, p: ChainParams) -> np.ndarray:
    """``H_eff = i log U(tau) / tau`` on the branch centred on the spectrum of ``H_*``.

    The step is diagonalized through its complex Schur form, which for a normal
    matrix is diagonal with a unitary Schur basis, including inside degenerate
    eigenspaces.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    w = la.eigvalsh(hamiltonian_matrix(p))
    spread = w[-1] - w[0]
    if tau * spread >= 2 * math.pi:
        raise BranchAmbiguity(
            f"tau={tau} times spectral spread {spread:.3f} reaches 2*pi; "
            f"use tau < {2 * math.pi / spread:.4f}"
        )
    centre = 0.5 * (w[0] + w[-1])
    U = trotter_unitary(tau, p)
    T, Z = la.schur(U, output="complex")
    phases = np.angle(np.diag(T) * np.exp(1j * tau * centre))
    lam = centre - phases / tau
    if np.any(np.abs(phases) > math.pi * (1 - 1e-9)):
        raise BranchAmbiguity("step spectrum wraps around the branch cut")
    H = (Z * lam) @ Z.conj().T
    return 0.5 * (H + H.conj().T)


def extract_effective_couplings(tau: float, p: ChainParams, basis: OperatorBasis) -> np.ndarray:
    """Project the numerically exact effective generator of one step onto ``basis``."""
    if p.L > 12:
        raise ValueError("dense extraction is limited to L <= 12")
    if tau == 0:
        return project_onto_basis(hamiltonian_matrix(p), basis, p.L)
    return project_onto_basis(effective_generator(tau, p), basis, p.L)


def fixed_step_comparison(traj, p: ChainParams | None = None) -> BchCoefficients:
    """Closed-form couplings at the arithmetic mean step of a trajectory."""
    if not traj.steps:
        raise ValueError("trajectory is empty")
    p = p or traj.params
    return bch_coefficients(traj.mean_tau(), p)


def learned_centroid(records: Sequence, basis: OperatorBasis) -> dict[str, float]:
    """Mean learned coefficient over checkpoints, for each of the six classes present."""
    C = np.array([r.C_final for r in records])
    out = {}
    for name, label in BCH_LABELS.items():
        if label in basis:
            out[name] = float(C[:, basis.index(label)].mean())
    return out


def comparison_dict(tau_mean: float, bch: BchCoefficients, centroid: dict | None = None) -> dict:
    return {
        "tau_mean": tau_mean,
        "tau_averaging": "arithmetic",
        "bch": bch.as_dict(),
        "learned_cluster_centroid": centroid or {},
    }


def write_comparison(path, tau_mean: float, bch: BchCoefficients, centroid: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(comparison_dict(tau_mean, bch, centroid), fh, indent=2, sort_keys=True)
        fh.write("\n")
