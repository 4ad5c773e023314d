"""Adaptive step-size Trotter driver.

Each step takes the largest ``tau`` for which the state after one symmetric
Trotter step keeps its energy density and fluctuation density strictly within
``d_E`` and ``d_var`` of the initial-state values.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace, asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .simulator import (
    ChainParams,
    energy_and_variance_density,
    fidelity,
    read_state,
    trotter_step,
    write_state,
)

__all__ = [
    "AdaConfig",
    "AdaStep",
    "AdaTrajectory",
    "StepNotFound",
    "select_step",
    "run",
    "fixed_step_run",
    "replay",
    "sweep",
]


@dataclass(frozen=True)
class AdaConfig:
    d_E: float = 0.02
    d_var: float = 0.01
    M: int = 50
    tau_min: float = 1e-4
    tau_max: float = 1.0
    search_resolution: float = 1e-3

    def __post_init__(self):
        if not (self.d_E > 0 and self.d_var > 0):
            raise ValueError("tolerances d_E and d_var must be positive")
        if not (0 < self.tau_min < self.tau_max):
            raise ValueError("need 0 < tau_min < tau_max")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not (0 < self.search_resolution < 1):
            raise ValueError("search_resolution must lie in (0, 1)")


@dataclass(frozen=True)
class AdaStep:
    """Step ``m`` of size ``tau`` ending at time ``t``, with the densities of the state there."""

    m: int
    t: float
    tau: float
    E: float
    dE2: float


@dataclass
class AdaTrajectory:
    params: ChainParams
    config: AdaConfig | None
    psi0: np.ndarray
    reference: tuple[float, float]
    steps: list[AdaStep] = field(default_factory=list)
    checkpoints: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.steps])

    def mean_tau(self) -> float:
        return math.fsum(self.taus) / len(self.steps)

    def head(self, n: int) -> "AdaTrajectory":
        """The first ``n`` steps as a new trajectory (shares the state arrays)."""
        return replace(self, steps=self.steps[:n], checkpoints=self.checkpoints[:n])

    def write(self, directory, checkpoints: bool = True) -> None:
        """``trajectory.csv`` (``m,t,tau,E,dE2``) plus ``ckpt_{m:04}.state`` snapshots."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "trajectory.csv", "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "t", "tau", "E", "dE2"])
            for s in self.steps:
                w.writerow([s.m, repr(s.t), repr(s.tau), repr(s.E), repr(s.dE2)])
        if checkpoints:
            write_state(self.psi0, d / "initial.state")
            for s, psi in zip(self.steps, self.checkpoints):
                write_state(psi, d / f"ckpt_{s.m:04d}.state")

    @classmethod
    def read(cls, directory, params: ChainParams, config: AdaConfig | None = None) -> "AdaTrajectory":
        d = Path(directory)
        psi0 = read_state(d / "initial.state")
        steps = []
        with open(d / "trajectory.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                steps.append(
                    AdaStep(int(row["m"]), float(row["t"]), float(row["tau"]), float(row["E"]), float(row["dE2"]))
                )
        missing = [s.m for s in steps if not (d / f"ckpt_{s.m:04d}.state").exists()]
        if missing:
            raise FileNotFoundError(f"missing checkpoints for steps {missing}")
        checkpoints = [read_state(d / f"ckpt_{s.m:04d}.state") for s in steps]
        ref = energy_and_variance_density(psi0, params)
        return cls(params, config, psi0, ref, steps, checkpoints)

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "config": asdict(self.config) if self.config is not None else None,
            "reference": {"E": self.reference[0], "dE2": self.reference[1]},
            "steps": len(self.steps),
            "t_final": self.steps[-1].t if self.steps else 0.0,
            "tau_mean": self.mean_tau() if self.steps else None,
        }


class StepNotFound(RuntimeError):
    def __init__(self, step_index: int, trajectory: AdaTrajectory | None = None):
        super().__init__(f"no admissible Trotter step >= tau_min at step {step_index}")
        self.step_index = step_index
        self.trajectory = trajectory


def _within(E: float, var: float, ref: tuple[float, float], cfg: AdaConfig) -> bool:
    return abs(E - ref[0]) < cfg.d_E and abs(var - ref[1]) < cfg.d_var


def select_step(
    psi: np.ndarray,
    ref: tuple[float, float],
    cfg: AdaConfig,
    p: ChainParams,
    tau_prev: float | None = None,
    step_index: int = 0,
):
    """Largest admissible step from ``psi``.

    Returns ``(tau, new_state, E, dE2)``. The search probes geometrically from
    ``2 * tau_prev`` to bracket the admissibility boundary, bisects to relative
    width ``search_resolution`` and then confirms that ``tau * (1 + 2 res)`` is
    rejected, resuming the search upward if it is not.
    """
    res = cfg.search_resolution
    cache: dict[float, tuple] = {}

    def probe(tau):
        if tau not in cache:
            phi = trotter_step(psi, tau, p)
            E, var = energy_and_variance_density(phi, p)
            cache[tau] = (_within(E, var, ref, cfg), phi, E, var)
        return cache[tau]

    def accept(tau):
        ok, phi, E, var = probe(tau)
        return tau, phi, E, var

    if probe(cfg.tau_max)[0]:
        return accept(cfg.tau_max)

    start = cfg.tau_max / 2 if tau_prev is None else 2 * tau_prev
    start = min(max(start, cfg.tau_min), cfg.tau_max)

    if probe(start)[0]:
        lo = start
        hi = min(2 * lo, cfg.tau_max)
        while probe(hi)[0]:
            lo, hi = hi, min(2 * hi, cfg.tau_max)
    else:
        hi = start
        while True:
            lo = max(hi / 2, cfg.tau_min)
            if probe(lo)[0]:
                break
            if lo <= cfg.tau_min:
                raise StepNotFound(step_index)
            hi = lo

    while True:
        while hi - lo > res * lo:
            mid = 0.5 * (lo + hi)
            if probe(mid)[0]:
                lo = mid
            else:
                hi = mid
        up = lo * (1 + 2 * res)
        if up >= cfg.tau_max or not probe(up)[0]:
            return accept(lo)
        # admissible set is not an interval here: continue above ``up``
        lo = up
        hi = min(2 * lo, cfg.tau_max)
        while probe(hi)[0]:
            if hi >= cfg.tau_max:
                return accept(hi)
            lo, hi = hi, min(2 * hi, cfg.tau_max)


def run(psi0: np.ndarray, cfg: AdaConfig, p: ChainParams) -> AdaTrajectory:
    """Take ``cfg.M`` adaptive steps from ``psi0``, keeping a checkpoint after each."""
    psi0 = np.asarray(psi0, dtype=complex)
    ref = energy_and_variance_density(psi0, p)
    traj = AdaTrajectory(p, cfg, psi0.copy(), ref)
    psi = psi0
    taus: list[float] = []
    tau_prev = None
    for m in range(cfg.M):
        try:
            tau, psi, E, var = select_step(psi, ref, cfg, p, tau_prev, step_index=m)
        except StepNotFound as exc:
            exc.trajectory = traj
            raise
        taus.append(tau)
        traj.steps.append(AdaStep(m, math.fsum(taus), tau, E, var))
        traj.checkpoints.append(psi)
        tau_prev = tau
    return traj


def fixed_step_run(psi0: np.ndarray, tau: float, M: int, p: ChainParams) -> AdaTrajectory:
    """``M`` plain Trotter steps of size ``tau``, stored like an adaptive run (``config`` is None)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    psi0 = np.asarray(psi0, dtype=complex)
    traj = AdaTrajectory(p, None, psi0.copy(), energy_and_variance_density(psi0, p))
    psi = psi0
    for m in range(M):
        psi = trotter_step(psi, tau, p)
        E, var = energy_and_variance_density(psi, p)
        traj.steps.append(AdaStep(m, math.fsum([tau] * (m + 1)), tau, E, var))
        traj.checkpoints.append(psi)
    return traj


def replay(traj: AdaTrajectory) -> list[float]:
    """Re-apply the recorded steps from ``psi0``; fidelity with each stored checkpoint."""
    psi = traj.psi0
    out = []
    for s, ckpt in zip(traj.steps, traj.checkpoints):
        psi = trotter_step(psi, s.tau, traj.params)
        out.append(fidelity(psi, ckpt))
    return out


def _run_one(args):
    psi0, cfg, p = args
    return run(psi0, cfg, p)


def default_workers() -> int:
    env = os.environ.get("EFFHAM_THREADS")
    if env:
        return max(1, int(env))
    return 1


def sweep(
    psi0: np.ndarray,
    configs: Sequence[AdaConfig],
    p: ChainParams,
    workers: int | None = None,
) -> list[AdaTrajectory]:
    """Independent runs for several tolerance settings, in input order."""
    workers = default_workers() if workers is None else workers
    jobs = [(psi0, cfg, p) for cfg in configs]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
