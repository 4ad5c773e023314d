"""Hamiltonian learning by state reconstruction.

For a checkpoint state ``phi`` reached at time ``t`` the coefficients ``C``
of ``H(C) = sum_a C_a O_a`` are fitted by Adam on the infidelity

    l(C) = 1 - |<phi| exp(-i t H(C)) |psi0>|^2.

The gradient is exact: with ``H = V diag(w) V^dag``,

    d exp(-itH) / dC_a = V (Gamma o (V^dag O_a V)) V^dag,

where ``Gamma`` holds the first divided differences of ``exp(-i t w)``.
They are evaluated as ``-i t exp(-i t m) sinc(t d)`` with ``m, d`` the
midpoint and half-gap of each eigenvalue pair, which is the confluent limit
``-i t exp(-i t w)`` at ``d = 0`` and does not cancel catastrophically near it.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .basis import OperatorBasis, realize
from .simulator import ChainParams, EigensolverError
from .symmetry import symmetric_sector

__all__ = [
    "AdamConfig",
    "Adam",
    "LearnRecord",
    "EffectiveHamiltonian",
    "HamiltonianModel",
    "OptimizerError",
    "target_vector",
    "optimize",
    "learn_trajectory",
    "write_learn_records",
    "read_learn_records",
]

log = logging.getLogger(__name__)

SECTOR_LEAKAGE_TOL = 1e-8


class OptimizerError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None, checkpoint: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    l_min: float = 1e-4
    max_epochs: int = 5000
    degeneracy_gap: float = 1e-12
    jitter_scale: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not (self.lr > 0 and self.eps > 0 and self.l_min > 0):
            raise ValueError("lr, eps and l_min must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")


class Adam:
    """Bias-corrected Adam on a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class LearnRecord:
    t_label: float
    C_final: np.ndarray
    loss_final: float
    epochs_used: int
    terminated_by: str
    loss_start: float = math.nan
    loss_last: float = math.nan


@dataclass
class EffectiveHamiltonian:
    basis: OperatorBasis
    C: np.ndarray
    t_label: float = 0.0

    def matrix(self, L: int) -> np.ndarray:
        return HamiltonianModel(self.basis, L, sector=False).assemble(self.C)

    def as_dict(self) -> dict[str, float]:
        return {label: float(c) for label, c in zip(self.basis.labels, self.C)}


class HamiltonianModel:
    """Realized basis operators for one chain length, with loss and gradient evaluation.

    With ``sector=True`` everything is restricted to the translation- and
    reflection-invariant subspace, which is exact for symmetric states and
    makes ``L = 8..12`` cheap. Use ``sector=False`` for arbitrary states.
    """

    def __init__(self, basis: OperatorBasis, L: int, sector: bool = True):
        self.basis = basis
        self.labels = basis.labels
        self.L = L
        self.sector = symmetric_sector(L) if sector else None
        self._stack([realize(op, L).matrix for op in basis])

    @classmethod
    def from_operators(cls, matrices, labels, L: int, sector: bool = False) -> "HamiltonianModel":
        """Model over arbitrary Hermitian operators (sparse or dense ``2**L`` matrices)."""
        if len(matrices) != len(labels):
            raise ValueError("one label per operator")
        self = cls.__new__(cls)
        self.basis = None
        self.labels = list(labels)
        self.L = L
        self.sector = symmetric_sector(L) if sector else None
        self._stack([sp.csr_matrix(m) for m in matrices])
        return self

    def _stack(self, mats) -> None:
        if self.sector is not None:
            dense = [self.sector.restrict(O) for O in mats]
            self.dim = self.sector.dim
            self._vec = np.stack([m.ravel() for m in dense]) if dense else np.zeros((0, self.dim**2))
        else:
            self.dim = 1 << self.L
            self._vec = sp.vstack([O.reshape(1, -1) for O in mats]).tocsr() if mats else None

    @property
    def N(self) -> int:
        return len(self.labels)

    def reduce_state(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if self.sector is None:
            return psi
        if psi.shape[0] == self.dim:
            return psi
        leak = self.sector.leakage(psi)
        if leak > SECTOR_LEAKAGE_TOL:
            raise ValueError(f"state leaves the symmetric sector (leakage {leak:.2e}); use sector=False")
        return self.sector.project(psi)

    def assemble(self, C: np.ndarray) -> np.ndarray:
        """Dense ``sum_a C_a O_a`` in the working space."""
        C = np.asarray(C, dtype=float)
        if C.shape != (self.N,):
            raise ValueError(f"expected {self.N} coefficients, got {C.shape}")
        if self.sector is not None:
            H = (C @ self._vec).reshape(self.dim, self.dim)
        else:
            H = (self._vec.T @ C).reshape(self.dim, self.dim)
        return 0.5 * (H + H.conj().T)

    def _traces(self, G: np.ndarray) -> np.ndarray:
        """``Tr(O_a G)`` for every basis element."""
        return self._vec @ G.T.ravel()

    def _eigh(self, C: np.ndarray, rng: np.random.Generator | None, jitter: float):
        try:
            return la.eigh(self.assemble(C))
        except (la.LinAlgError, ValueError) as exc:
            if rng is None:
                raise EigensolverError(f"eigensolver failed (max|C|={np.max(np.abs(C)):.3e})") from exc
            log.warning("eigensolver failed, retrying with jitter %.1e", jitter)
            try:
                return la.eigh(self.assemble(C + jitter * rng.standard_normal(C.shape)))
            except (la.LinAlgError, ValueError) as exc2:
                raise EigensolverError("eigensolver failed after jitter retry") from exc2

    def evolve(self, C: np.ndarray, psi0: np.ndarray, t: float) -> np.ndarray:
        """``exp(-i t H(C)) psi0`` in the full ``2**L`` space."""
        x = self.reduce_state(psi0)
        w, V = self._eigh(np.asarray(C, float), None, 0.0)
        out = V @ (np.exp(-1j * t * w) * (V.conj().T @ x))
        return self.sector.lift(out) if self.sector is not None else out

    def loss(self, C, psi0, phi, t) -> float:
        return self.loss_and_gradient(C, psi0, phi, t, with_gradient=False)[0]

    def loss_gradient(self, C, psi0, phi, t, degeneracy_gap: float = 1e-12) -> np.ndarray:
        return self.loss_and_gradient(C, psi0, phi, t, degeneracy_gap=degeneracy_gap)[1]

    def loss_and_gradient(
        self,
        C,
        psi0,
        phi,
        t: float,
        degeneracy_gap: float = 1e-12,
        with_gradient: bool = True,
        rng: np.random.Generator | None = None,
        jitter: float = 1e-10,
    ):
        if t < 0:
            raise ValueError("t must be non-negative")
        C = np.asarray(C, dtype=float)
        x0 = self.reduce_state(psi0)
        y0 = self.reduce_state(phi)
        w, V = self._eigh(C, rng, jitter)
        x = V.conj().T @ x0
        y = V.conj().T @ y0
        phase = np.exp(-1j * t * w)
        amp = np.vdot(y, phase * x)
        loss = 1.0 - abs(amp) ** 2
        if math.isfinite(loss):
            loss = min(1.0, max(0.0, loss))
        if not with_gradient:
            return loss, None
        mid = 0.5 * (w[:, None] + w[None, :])
        half = 0.5 * (w[:, None] - w[None, :])
        scale = np.max(np.abs(w)) if w.size else 0.0
        half = np.where(np.abs(2 * half) < degeneracy_gap * scale, 0.0, half)
        gamma = -1j * t * np.exp(-1j * t * mid) * np.sinc(t * half / np.pi)
        W = np.conj(y)[:, None] * gamma * x[None, :]
        G = V @ W.T @ V.conj().T
        grad = -2.0 * np.real(np.conj(amp) * self._traces(G))
        if not np.all(np.isfinite(grad)):
            bad = int(np.flatnonzero(~np.isfinite(grad))[0])
            raise OptimizerError(f"non-finite gradient for {self.labels[bad]}")
        return loss, grad


def target_vector(basis: OperatorBasis, p: ChainParams) -> np.ndarray:
    """Target couplings on ``X, Z, ZZ`` and zeros elsewhere."""
    C = np.zeros(len(basis))
    for label, value in p.target_couplings().items():
        C[basis.index(label)] = value
    return C


def optimize(
    model: HamiltonianModel,
    C_start: np.ndarray,
    psi0: np.ndarray,
    phi: np.ndarray,
    t: float,
    cfg: AdamConfig = AdamConfig(),
) -> LearnRecord:
    """Adam from ``C_start`` until the loss drops below ``l_min`` or ``max_epochs`` updates.

    The returned record holds the lowest-loss iterate seen.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    psi0 = model.reduce_state(psi0)
    phi = model.reduce_state(phi)
    C = np.array(C_start, dtype=float)
    opt = Adam(len(C), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    best_C, best_loss = C.copy(), math.inf
    loss_start = math.nan
    terminated = "epoch_limit"
    epoch = 0
    loss = math.nan
    while True:
        if not np.all(np.isfinite(C)):
            raise OptimizerError(f"non-finite coefficients at epoch {epoch}", epoch=epoch)
        loss, grad = model.loss_and_gradient(
            C, psi0, phi, t, cfg.degeneracy_gap, rng=rng, jitter=cfg.jitter_scale
        )
        if not math.isfinite(loss):
            raise OptimizerError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        if epoch == 0:
            loss_start = loss
        if loss < best_loss:
            best_loss, best_C = loss, C.copy()
        if loss < cfg.l_min:
            terminated = "cutoff"
            break
        if epoch >= cfg.max_epochs:
            break
        C = opt.step(C, grad)
        epoch += 1
    return LearnRecord(t, best_C, best_loss, epoch, terminated, loss_start, loss)


def learn_trajectory(
    traj,
    basis: OperatorBasis,
    cfg: AdamConfig = AdamConfig(),
    warm_start: bool = True,
    stride: int = 1,
    sector: bool = True,
    model: HamiltonianModel | None = None,
    progress=None,
) -> list[LearnRecord]:
    """Fit one coefficient vector per checkpoint, in time order.

    The first fit starts from the target couplings; later ones start from the
    previous solution unless ``warm_start`` is off.
    """
    if not traj.checkpoints:
        raise ValueError("trajectory has no checkpoints")
    p = traj.params
    model = model or HamiltonianModel(basis, p.L, sector=sector)
    C0 = target_vector(basis, p)
    C_start = C0
    records = []
    for k in range(0, len(traj.steps), stride):
        step, phi = traj.steps[k], traj.checkpoints[k]
        try:
            rec = optimize(model, C_start, traj.psi0, phi, step.t, cfg)
        except OptimizerError as exc:
            exc.checkpoint = k
            raise
        records.append(rec)
        if progress is not None:
            progress(k, rec)
        C_start = rec.C_final if warm_start else C0
    return records


def write_learn_records(records: Sequence[LearnRecord], basis: OperatorBasis, path) -> None:
    """CSV ``t,loss,epochs,terminated_by,C_<label>...`` in basis order."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "loss", "epochs", "terminated_by"] + [f"C_{l}" for l in basis.labels])
        for r in records:
            w.writerow(
                [repr(float(r.t_label)), repr(float(r.loss_final)), r.epochs_used, r.terminated_by]
                + [repr(float(c)) for c in r.C_final]
            )


def read_learn_records(path) -> tuple[list[str], list[LearnRecord]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels = [h[2:] for h in header[4:]]
        records = [
            LearnRecord(float(row[0]), np.array([float(c) for c in row[4:]]), float(row[1]), int(row[2]), row[3])
            for row in reader
        ]
    return labels, records
