"""Post-processing of learning runs.

Deviation statistics of learned coefficients from the target couplings,
importance ranking over tolerance settings, basis truncation, slope fits of
the optimized loss, reduced-density-matrix errors and kernel density exports.
Everything here is plain numpy on already-computed records.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import OperatorBasis
from .learner import HamiltonianModel, LearnRecord
from .simulator import ChainParams, reduced_density_matrix

__all__ = [
    "TARGET_LABELS",
    "SKIP_STEPS",
    "DeviationStats",
    "SlopeFit",
    "KdeCurve",
    "target_values",
    "deviation_stats",
    "rank_basis",
    "truncate_basis",
    "fit_slope",
    "rdm_error_series",
    "silverman_bandwidth",
    "kde_curve",
    "distribution_export",
    "write_deviation_csv",
    "write_ranking",
    "read_ranking",
    "write_distribution_csv",
    "write_manifest",
    "plot_series",
]

TARGET_LABELS = ("X", "Z", "ZZ")
# the first few steps are an initial transient and are left out of post-window statistics
SKIP_STEPS = 5


def target_values(basis: OperatorBasis, p: ChainParams) -> np.ndarray:
    C = np.zeros(len(basis))
    for label, v in p.target_couplings().items():
        if label in basis:
            C[basis.index(label)] = v
    return C


@dataclass
class DeviationStats:
    """``|C_a(t) - C_a*|`` per checkpoint (rows) and basis element (columns)."""

    labels: list[str]
    times: np.ndarray
    deviations: np.ndarray
    mean: np.ndarray = field(init=False)
    mean_post: np.ndarray = field(init=False)
    max: np.ndarray = field(init=False)
    min: np.ndarray = field(init=False)

    def __post_init__(self):
        d = self.deviations
        self.mean = d.mean(axis=0)
        post = d[SKIP_STEPS:] if d.shape[0] > SKIP_STEPS else d[:0]
        self.mean_post = post.mean(axis=0) if post.shape[0] else np.full(d.shape[1], np.nan)
        self.max = d.max(axis=0)
        self.min = d.min(axis=0)

    def samples(self, label: str) -> np.ndarray:
        return self.deviations[:, self.labels.index(label)]

    def summary(self) -> dict[str, dict[str, float]]:
        return {
            l: {"mean": float(a), "mean_post": float(b), "max": float(c)}
            for l, a, b, c in zip(self.labels, self.mean, self.mean_post, self.max)
        }


def deviation_stats(records: Sequence[LearnRecord], basis: OperatorBasis, p: ChainParams) -> DeviationStats:
    if not records:
        raise ValueError("no records")
    for r in records:
        if len(r.C_final) != len(basis):
            raise ValueError(f"record at t={r.t_label} has {len(r.C_final)} coefficients, basis has {len(basis)}")
    C = np.array([r.C_final for r in records])
    dev = np.abs(C - target_values(basis, p))
    return DeviationStats(basis.labels, np.array([r.t_label for r in records]), dev)


def rank_basis(stats: Sequence[DeviationStats], window: str = "full") -> list[tuple[str, float, float]]:
    """``(label, mean over settings, std over settings)`` sorted by decreasing mean.

    ``window`` picks the per-setting time average: ``"full"`` or ``"post"``
    (checkpoints after the first five). Ties keep basis order.
    """
    if not stats:
        raise ValueError("no stats to rank")
    labels = stats[0].labels
    if any(s.labels != labels for s in stats):
        raise ValueError("stats were computed on different bases")
    if window not in ("full", "post"):
        raise ValueError("window must be 'full' or 'post'")
    per = np.array([s.mean if window == "full" else s.mean_post for s in stats])
    mean, std = per.mean(axis=0), per.std(axis=0)
    order = sorted(range(len(labels)), key=lambda i: (-mean[i], i))
    return [(labels[i], float(mean[i]), float(std[i])) for i in order]


def truncate_basis(basis: OperatorBasis, ranking: Iterable, N: int) -> OperatorBasis:
    """Keep the ``N`` highest-ranked elements, always including ``X, Z, ZZ``.

    ``ranking`` is a sequence of labels or of ``(label, ...)`` tuples. The
    result keeps the ordering of ``basis``.
    """
    if N < len(TARGET_LABELS):
        raise ValueError(f"N={N} cannot hold the target couplings {TARGET_LABELS}")
    if N > len(basis):
        raise ValueError(f"N={N} exceeds basis size {len(basis)}")
    names = [r if isinstance(r, str) else r[0] for r in ranking]
    keep = [basis[basis.index(t)].label for t in TARGET_LABELS]
    for name in names:
        if len(keep) >= N:
            break
        if name not in basis:
            continue
        label = basis[basis.index(name)].label
        if label not in keep:
            keep.append(label)
    if len(keep) < N:
        raise ValueError(f"ranking names only {len(keep)} distinct basis elements, need {N}")
    return basis.subset(keep)


@dataclass(frozen=True)
class SlopeFit:
    gamma: float
    intercept: float
    residual_norm: float
    start: int = SKIP_STEPS


def fit_slope(records: Sequence[LearnRecord], start: int = SKIP_STEPS) -> SlopeFit:
    """Least-squares line through ``(t, loss_final)`` for records ``start`` onward."""
    if len(records) < start + 3:
        raise ValueError(f"need at least {start + 3} records, got {len(records)}")
    t = np.array([r.t_label for r in records[start:]], dtype=float)
    y = np.array([r.loss_final for r in records[start:]], dtype=float)
    tc = t - t.mean()
    denom = np.dot(tc, tc)
    if denom == 0:
        raise ValueError("all fit points share one time")
    gamma = float(np.dot(tc, y - y.mean()) / denom)
    intercept = float(y.mean() - gamma * t.mean())
    resid = float(np.linalg.norm(y - (intercept + gamma * t)))
    return SlopeFit(gamma, intercept, resid, start)


def rdm_error_series(
    traj,
    records: Sequence[LearnRecord],
    basis: OperatorBasis,
    window=(0, 1, 2),
    model: HamiltonianModel | None = None,
    include_initial: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """``||rho_ADA(t) - rho_L(t)||_F`` on a window of sites, for every record.

    Records are matched to checkpoints by time, so strided learning runs work.
    Returns ``(times, errors)``; with ``include_initial`` the series starts at
    ``t = 0`` where both states equal ``psi0``.
    """
    model = model or HamiltonianModel(basis, traj.params.L)
    if model.N != len(basis):
        raise ValueError("model and basis disagree")
    times_traj = traj.times
    ts, errs = [], []
    if include_initial:
        ts.append(0.0)
        errs.append(0.0)
    for r in records:
        k = int(np.argmin(np.abs(times_traj - r.t_label))) if len(times_traj) else -1
        if k < 0 or not math.isclose(times_traj[k], r.t_label, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"no checkpoint at t={r.t_label}")
        psi_l = model.evolve(r.C_final, traj.psi0, r.t_label)
        diff = reduced_density_matrix(traj.checkpoints[k], window) - reduced_density_matrix(psi_l, window)
        ts.append(r.t_label)
        errs.append(float(np.linalg.norm(diff)))
    return np.array(ts), np.array(errs)


@dataclass
class KdeCurve:
    samples: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool


def silverman_bandwidth(samples: np.ndarray) -> float:
    s = np.asarray(samples, dtype=float)
    sigma = s.std(ddof=1) if s.size > 1 else 0.0
    return 1.06 * sigma * s.size ** (-0.2)


def kde_curve(samples, bandwidth: float | None = None, points: int = 256) -> KdeCurve:
    """Gaussian kernel density on ``points`` nodes spanning ``[0, 1.1 max]``.

    The curve is renormalized to unit trapezoid integral over the grid, so mass
    the kernels put below zero or above the grid is redistributed. All-equal
    samples give a flagged spike: a single grid node carrying unit mass.
    """
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise ValueError("need at least two samples")
    top = 1.1 * s.max()
    grid = np.linspace(0.0, top if top > 0 else 1.0, points)
    if np.all(s == s[0]):
        dens = np.zeros(points)
        k = int(np.argmin(np.abs(grid - s[0])))
        h = grid[1] - grid[0]
        dens[k] = (2.0 if k in (0, points - 1) else 1.0) / h
        return KdeCurve(s, grid, dens, 0.0, True)
    bw = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise ValueError("bandwidth must be positive")
    z = (grid[:, None] - s[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1)
    dens /= np.trapezoid(dens, grid)
    return KdeCurve(s, grid, dens, bw, False)


def distribution_export(stats: DeviationStats, bandwidth: float | None = None, points: int = 256) -> dict[str, KdeCurve]:
    return {l: kde_curve(stats.samples(l), bandwidth, points) for l in stats.labels}


def _f(x) -> str:
    return repr(float(x))


def write_deviation_csv(stats: DeviationStats, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"dC_{l}" for l in stats.labels])
        for t, row in zip(stats.times, stats.deviations):
            w.writerow([_f(t)] + [_f(x) for x in row])


def write_ranking(ranking, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "mean_deviation", "std_deviation"])
        for label, m, s in ranking:
            w.writerow([label, _f(m), _f(s)])


def read_ranking(path) -> list[tuple[str, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            (row["label"], float(row["mean_deviation"]), float(row["std_deviation"]))
            for row in csv.DictReader(fh)
        ]


def write_distribution_csv(curves: dict[str, KdeCurve], directory) -> None:
    """One ``kde_<label>.csv`` per element with ``x,density`` and a ``samples_<label>.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for label, c in curves.items():
        safe = label.replace("+", "_")
        with open(d / f"kde_{safe}.csv", "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "density"])
            w.writerows([_f(x), _f(y)] for x, y in zip(c.grid, c.density))
        with open(d / f"samples_{safe}.csv", "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dC"])
            w.writerows([_f(x)] for x in c.samples)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_series(path, x, series: dict[str, np.ndarray], xlabel: str = "t", ylabel: str = "", logy: bool = False) -> None:
    """Static SVG line plot. Output is byte-stable for identical input."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "effham", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, y in series.items():
            ax.plot(x, y, label=name, lw=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if len(series) > 1:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
