"""Statevector simulation of the periodic transverse/longitudinal-field Ising chain

    H = J_z sum_j Z_j Z_{j+1} + h_z sum_j Z_j + h_x sum_j X_j.

States are plain complex numpy arrays of length ``2**L``. Site ``j`` is bit
``j`` of the basis index and a down spin is bit 0, so ``Z_j`` acts as
``2*b_j - 1``.
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

__all__ = [
    "ChainParams",
    "NonHermitianError",
    "EigensolverError",
    "num_sites",
    "basis_state",
    "initial_state",
    "z_diagonal",
    "ising_diagonal",
    "hamiltonian_matrix",
    "apply_hamiltonian",
    "trotter_step",
    "trotter_unitary",
    "evolve_exact",
    "expectation",
    "energy_and_variance_density",
    "fidelity",
    "reduced_density_matrix",
    "magnetization_density",
    "write_state",
    "read_state",
]

NORM_TOL = 1e-10
IMAG_TOL = 1e-9


class NonHermitianError(ValueError):
    pass


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainParams:
    L: int
    J_z: float = -1.0
    h_z: float = 0.5
    h_x: float = -1.7

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("chain needs at least 2 sites")
        if not all(math.isfinite(v) for v in (self.J_z, self.h_z, self.h_x)):
            raise ValueError("couplings must be finite")

    @property
    def dim(self) -> int:
        return 1 << self.L

    def target_couplings(self) -> dict[str, float]:
        return {"X": self.h_x, "Z": self.h_z, "ZZ": self.J_z}


def num_sites(psi: np.ndarray) -> int:
    L = int(psi.shape[0]).bit_length() - 1
    if psi.ndim != 1 or psi.shape[0] != 1 << L:
        raise ValueError(f"state length {psi.shape} is not a power of two")
    return L


def basis_state(L: int, bits: int = 0) -> np.ndarray:
    psi = np.zeros(1 << L, dtype=complex)
    psi[bits] = 1.0
    return psi


def initial_state(L: int, theta_y: float) -> np.ndarray:
    """``exp(-i theta_y sum_j Y_j)`` applied to the all-down state."""
    # e^{-i theta Y}|down> = cos(theta)|down> - sin(theta)|up>
    site = np.array([math.cos(theta_y), -math.sin(theta_y)], dtype=complex)
    psi = np.ones(1, dtype=complex)
    for _ in range(L):
        psi = np.kron(site, psi)
    return psi


@functools.lru_cache(maxsize=64)
def _z_values(L: int) -> np.ndarray:
    idx = np.arange(1 << L)
    return np.stack([2 * ((idx >> j) & 1) - 1 for j in range(L)]).astype(float)


def z_diagonal(L: int) -> np.ndarray:
    """Diagonal of ``sum_j Z_j``."""
    return _z_values(L).sum(axis=0)


@functools.lru_cache(maxsize=64)
def _ising_diagonal(L: int, J_z: float, h_z: float) -> np.ndarray:
    z = _z_values(L)
    zz = (z * np.roll(z, -1, axis=0)).sum(axis=0)
    d = J_z * zz + h_z * z.sum(axis=0)
    d.setflags(write=False)
    return d


def ising_diagonal(p: ChainParams) -> np.ndarray:
    """Diagonal of ``H_z = J_z sum Z_j Z_{j+1} + h_z sum Z_j`` (periodic)."""
    return _ising_diagonal(p.L, p.J_z, p.h_z)


def _sum_x(psi: np.ndarray, L: int) -> np.ndarray:
    idx = np.arange(1 << L)
    out = np.zeros_like(psi)
    for j in range(L):
        out += psi[idx ^ (1 << j)]
    return out


def apply_hamiltonian(psi: np.ndarray, p: ChainParams) -> np.ndarray:
    """Matrix-free ``H psi``."""
    return ising_diagonal(p) * psi + p.h_x * _sum_x(psi, p.L)


def hamiltonian_matrix(p: ChainParams, sparse: bool = False):
    """``H`` as a sparse CSR or dense array."""
    L, dim = p.L, p.dim
    idx = np.arange(dim)
    rows = [idx] + [idx ^ (1 << j) for j in range(L)]
    cols = [idx] * (L + 1)
    data = [ising_diagonal(p)] + [np.full(dim, p.h_x)] * L
    H = sp.csr_matrix(
        (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return H if sparse else H.toarray()


def _rotate_x(psi: np.ndarray, L: int, angle: float) -> np.ndarray:
    """``prod_j exp(-i angle X_j)``, one site at a time."""
    c, s = math.cos(angle), -1j * math.sin(angle)
    psi = psi.reshape((2,) * L)
    for axis in range(L):
        a = np.take(psi, 0, axis=axis)
        b = np.take(psi, 1, axis=axis)
        psi = np.stack([c * a + s * b, s * a + c * b], axis=axis)
    return psi.reshape(-1)


def trotter_step(psi: np.ndarray, tau: float, p: ChainParams) -> np.ndarray:
    """One symmetric second-order step ``e^{-i tau Hx/2} e^{-i tau Hz} e^{-i tau Hx/2}``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    L = num_sites(psi)
    if L != p.L:
        raise ValueError(f"state has {L} sites, params expect {p.L}")
    half = 0.5 * tau * p.h_x
    out = _rotate_x(psi, L, half)
    out = np.exp(-1j * tau * ising_diagonal(p)) * out
    return _rotate_x(out, L, half)


def trotter_unitary(tau: float, p: ChainParams) -> np.ndarray:
    """Dense ``U(tau)``, built column-by-column from :func:`trotter_step`."""
    dim = p.dim
    eye = np.eye(dim, dtype=complex)
    return np.stack([trotter_step(eye[:, k], tau, p) for k in range(dim)], axis=1)


def _eigh(H: np.ndarray):
    try:
        return la.eigh(H)
    except (la.LinAlgError, ValueError) as exc:
        raise EigensolverError(
            f"eigendecomposition failed for {H.shape} matrix "
            f"(finite={np.all(np.isfinite(H))}, max|H|={np.max(np.abs(H)):.3e})"
        ) from exc


def evolve_exact(psi: np.ndarray, H, t: float) -> np.ndarray:
    """``exp(-i t H) psi`` via the Hermitian eigendecomposition of ``H``."""
    if sp.issparse(H):
        H = H.toarray()
    H = np.asarray(H)
    if np.max(np.abs(H - H.conj().T)) > NORM_TOL:
        raise NonHermitianError("evolve_exact needs a Hermitian generator")
    if t == 0:
        return psi.copy()
    w, V = _eigh(H)
    return V @ (np.exp(-1j * t * w) * (V.conj().T @ psi))


def expectation(psi: np.ndarray, A) -> float:
    """``<psi|A|psi>`` for a Hermitian ``A`` (matrix, sparse matrix, or callable)."""
    Apsi = A(psi) if callable(A) else A @ psi
    val = np.vdot(psi, Apsi)
    if abs(val.imag) >= IMAG_TOL:
        raise NonHermitianError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def energy_and_variance_density(psi: np.ndarray, p: ChainParams) -> tuple[float, float]:
    """Energy density ``<H>/L`` and fluctuation density ``(<H^2> - <H>^2)/L``."""
    Hpsi = apply_hamiltonian(psi, p)
    e = np.vdot(psi, Hpsi)
    if abs(e.imag) >= IMAG_TOL:
        raise NonHermitianError(f"energy has imaginary part {e.imag:.3e}")
    E = e.real / p.L
    # <H^2> = ||H psi||^2 for Hermitian H
    h2 = np.vdot(Hpsi, Hpsi).real
    return float(E), float(h2 / p.L - p.L * E * E)


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    if psi.shape != phi.shape:
        raise ValueError(f"dimension mismatch: {psi.shape} vs {phi.shape}")
    return float(min(1.0, abs(np.vdot(psi, phi)) ** 2))


def reduced_density_matrix(psi: np.ndarray, sites=(0, 1, 2)) -> np.ndarray:
    """Partial trace onto ``sites`` (taken modulo ``L``).

    Bit ``k`` of the returned matrix index corresponds to ``sites[k]``.
    """
    L = num_sites(psi)
    sites = [s % L for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError("window sites must be distinct")
    # reshape in C order puts site j on axis L-1-j
    tensor = psi.reshape((2,) * L)
    keep_axes = [L - 1 - s for s in reversed(sites)]
    rest = [a for a in range(L) if a not in keep_axes]
    m = np.transpose(tensor, keep_axes + rest).reshape(1 << len(sites), -1)
    return m @ m.conj().T


def magnetization_density(psi: np.ndarray) -> float:
    L = num_sites(psi)
    return float(np.dot(np.abs(psi) ** 2, z_diagonal(L)) / L)


_HEADER = struct.Struct("<IQ")


def write_state(psi: np.ndarray, path) -> None:
    """Binary snapshot: ``u32 L``, ``u64 dim``, then little-endian f64 (re, im) pairs."""
    L = num_sites(psi)
    body = np.empty(2 * psi.shape[0], dtype="<f8")
    body[0::2] = psi.real
    body[1::2] = psi.imag
    Path(path).write_bytes(_HEADER.pack(L, psi.shape[0]) + body.tobytes())


def read_state(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    L, dim = _HEADER.unpack_from(raw)
    if dim != 1 << L:
        raise ValueError(f"corrupt snapshot header: L={L}, dim={dim}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * dim:
        raise ValueError("snapshot payload length does not match header")
    return body[0::2] + 1j * body[1::2]
