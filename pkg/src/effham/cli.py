"""Command-line front end.

    effham run-ada --config exp.ini --out runs/a
    effham learn   --config exp.ini --out runs/a/learn --trajectory runs/a
    effham bch     --config exp.ini --out runs/a/bch
    effham rank    --config exp.ini --out runs/rank
    effham report  --config exp.ini --out runs/a/report

The config is an INI file; every key is optional and unknown sections or
keys are rejected. See README.md for the full key list.

Exit codes: 0 success, 2 config/usage error, 3 no admissible ADA step,
4 optimizer failure, 5 numerical guard (branch ambiguity, non-Hermiticity).
"""
from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .ada import AdaConfig, AdaTrajectory, StepNotFound, default_workers, fixed_step_run, run
from .analysis import (
    deviation_stats,
    distribution_export,
    fit_slope,
    plot_series,
    rank_basis,
    rdm_error_series,
    read_ranking,
    truncate_basis,
    write_deviation_csv,
    write_distribution_csv,
    write_manifest,
    write_ranking,
)
from .basis import build_basis, read_basis, write_basis
from .bch import (
    BranchAmbiguity,
    bch_coefficients,
    extract_effective_couplings,
    learned_centroid,
    six_term_basis,
    write_comparison,
)
from .learner import AdamConfig, HamiltonianModel, OptimizerError, learn_trajectory, read_learn_records, write_learn_records
from .simulator import ChainParams, EigensolverError, NonHermitianError, initial_state, magnetization_density

log = logging.getLogger("effham")

EXIT_OK, EXIT_CONFIG, EXIT_STEP, EXIT_OPTIMIZER, EXIT_NUMERIC = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _opt_str(s: str):
    return None if s.strip().lower() in ("", "none") else s.strip()


def _pairs(s: str) -> list[tuple[float, float]]:
    """``"0.02:0.01, 0.002:0.01"`` -> list of tolerance pairs."""
    out = []
    for item in s.split(","):
        if item.strip():
            a, b = item.split(":")
            out.append((float(a), float(b)))
    return out


def _paths(s: str) -> list[str]:
    return [x.strip() for x in s.replace("\n", ",").split(",") if x.strip()]


# section -> key -> (parser, default)
SCHEMA = {
    "chain": {
        "L": (int, 8),
        "J_z": (float, -1.0),
        "h_z": (float, 0.5),
        "h_x": (float, -1.7),
        "theta_y": (float, math.pi / 3),
    },
    "ada": {
        "d_E": (float, 0.02),
        "d_var": (float, 0.01),
        "M": (int, 50),
        "tau_min": (float, 1e-4),
        "tau_max": (float, 1.0),
        "search_resolution": (float, 1e-3),
        "fixed_tau": (_opt_float, None),
        "sweep": (_pairs, []),
    },
    "adam": {
        "lr": (float, 1e-5),
        "beta1": (float, 0.9),
        "beta2": (float, 0.99),
        "eps": (float, 1e-8),
        "l_min": (float, 1e-4),
        "max_epochs": (int, 5000),
        "degeneracy_gap": (float, 1e-12),
        "jitter_scale": (float, 1e-10),
    },
    "basis": {
        "R": (int, 5),
        "parity_filter": (_bool, False),
        "interior_identity": (_bool, False),
        "truncate_N": (_opt_int, None),
        "ranking_file": (_opt_str, None),
    },
    "learn": {
        "trajectory": (_opt_str, None),
        "warm_start": (_bool, True),
        "stride": (int, 1),
        "sector": (_bool, True),
        "bandwidth": (_opt_float, None),
    },
    "bch": {
        "tau": (_opt_float, None),
        "trajectory": (_opt_str, None),
        "learn": (_opt_str, None),
        "extract": (_bool, False),
    },
    "rank": {
        "runs": (_paths, []),
        "window": (str, "full"),
    },
    "report": {
        "learn": (_opt_str, None),
    },
    "run": {
        "seed": (int, 0),
    },
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, section):
        return self.values[section]

    @property
    def chain(self) -> ChainParams:
        c = self.values["chain"]
        return ChainParams(c["L"], c["J_z"], c["h_z"], c["h_x"])

    @property
    def ada(self) -> AdaConfig:
        a = self.values["ada"]
        return AdaConfig(a["d_E"], a["d_var"], a["M"], a["tau_min"], a["tau_max"], a["search_resolution"])

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(**self.values["adam"], rng_seed=self.values["run"]["seed"])

    def psi0(self) -> np.ndarray:
        return initial_state(self.values["chain"]["L"], self.values["chain"]["theta_y"])

    def as_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def load_config(path: str | None, seed: int | None = None) -> ExperimentConfig:
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                parser = SCHEMA[section][key][0]
                try:
                    values[section][key] = parser(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    if seed is not None:
        values["run"]["seed"] = seed
    cfg = ExperimentConfig(values, path)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    try:
        p = cfg.chain
        cfg.ada
        cfg.adam
        if cfg["ada"]["fixed_tau"] is not None and not cfg["ada"]["fixed_tau"] > 0:
            raise ValueError("fixed_tau must be positive")
        for dE, dv in cfg["ada"]["sweep"]:
            AdaConfig(dE, dv)
        if cfg["basis"]["R"] > p.L:
            raise ValueError(f"basis R={cfg['basis']['R']} exceeds L={p.L}")
        if cfg["basis"]["truncate_N"] is not None and cfg["basis"]["truncate_N"] < 3:
            raise ValueError("truncate_N must be at least 3")
        if cfg["learn"]["stride"] < 1:
            raise ValueError("stride must be at least 1")
        if cfg["rank"]["window"] not in ("full", "post"):
            raise ValueError("rank window must be 'full' or 'post'")
        if cfg["bch"]["tau"] is not None and cfg["bch"]["tau"] < 0:
            raise ValueError("bch tau must be non-negative")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _basis(cfg: ExperimentConfig):
    b = cfg["basis"]
    basis = build_basis(b["R"], b["parity_filter"], b["interior_identity"], L=cfg.chain.L)
    if b["truncate_N"] is not None:
        if b["ranking_file"] is None:
            raise ConfigError("truncate_N needs ranking_file")
        basis = truncate_basis(basis, read_ranking(b["ranking_file"]), b["truncate_N"])
    return basis


def _base_manifest(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "config": cfg.as_dict()}


def _trajectory_manifest(traj: AdaTrajectory, status: str) -> dict:
    d = traj.to_dict()
    d["status"] = status
    return d


# ----------------------------------------------------------------------------- commands


def cmd_run_ada(cfg: ExperimentConfig, out: Path) -> int:
    p, psi0 = cfg.chain, cfg.psi0()
    fixed = cfg["ada"]["fixed_tau"]
    pairs = cfg["ada"]["sweep"]
    if pairs and fixed is None:
        jobs = [
            (cfg, out / f"run_{i:02d}", psi0, p, replace(cfg.ada, d_E=dE, d_var=dv))
            for i, (dE, dv) in enumerate(pairs)
        ]
        workers = min(default_workers(), len(jobs))
        if workers <= 1:
            codes = [_single_ada(*j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                codes = list(pool.map(_single_ada, *zip(*jobs)))
        return max(codes)
    return _single_ada(cfg, out, psi0, p, None if fixed else cfg.ada)


def _single_ada(cfg, out: Path, psi0, p, ada_cfg) -> int:
    out.mkdir(parents=True, exist_ok=True)
    manifest = _base_manifest(cfg, "run-ada")
    try:
        if ada_cfg is None:
            traj = fixed_step_run(psi0, cfg["ada"]["fixed_tau"], cfg["ada"]["M"], p)
        else:
            traj = run(psi0, ada_cfg, p)
    except StepNotFound as exc:
        traj = exc.trajectory
        traj.write(out)
        manifest["trajectory"] = _trajectory_manifest(traj, f"step_not_found at step {exc.step_index}")
        write_manifest(out / "manifest.json", manifest)
        log.error("%s (partial trajectory of %d steps kept in %s)", exc, len(traj), out)
        return EXIT_STEP
    traj.write(out)
    manifest["trajectory"] = _trajectory_manifest(traj, "complete")
    write_manifest(out / "manifest.json", manifest)
    log.info("wrote %d steps to %s (mean tau %.6g)", len(traj), out, traj.mean_tau())
    return EXIT_OK


def _load_trajectory(cfg: ExperimentConfig, directory) -> AdaTrajectory:
    if directory is None:
        raise ConfigError("no trajectory directory given (--trajectory or [learn] trajectory)")
    d = Path(directory)
    if not (d / "trajectory.csv").exists():
        raise ConfigError(f"{d} holds no trajectory.csv")
    traj = AdaTrajectory.read(d, cfg.chain, cfg.ada if cfg["ada"]["fixed_tau"] is None else None)
    if traj.psi0.shape[0] != cfg.chain.dim:
        raise ConfigError(f"trajectory in {d} does not match L={cfg.chain.L}")
    return traj


def cmd_learn(cfg: ExperimentConfig, out: Path, trajectory=None) -> int:
    trajectory = trajectory or cfg["learn"]["trajectory"]
    traj = _load_trajectory(cfg, trajectory)
    basis = _basis(cfg)
    p = cfg.chain
    out.mkdir(parents=True, exist_ok=True)
    model = HamiltonianModel(basis, p.L, sector=cfg["learn"]["sector"])
    progress = lambda k, r: log.info(
        "checkpoint %d t=%.4f loss=%.3e epochs=%d (%s)", k, r.t_label, r.loss_final, r.epochs_used, r.terminated_by
    )
    records = learn_trajectory(
        traj, basis, cfg.adam, cfg["learn"]["warm_start"], cfg["learn"]["stride"], model=model, progress=progress
    )
    write_basis(basis, out / "basis.txt")
    write_learn_records(records, basis, out / "learn.csv")
    stats = deviation_stats(records, basis, p)
    write_deviation_csv(stats, out / "deviations.csv")
    ts, errs = rdm_error_series(traj, records, basis, model=model)
    with open(out / "rdm_error.csv", "w", newline="\n", encoding="utf-8") as fh:
        fh.write("t,rdm_error\n")
        fh.writelines(f"{t!r},{e!r}\n" for t, e in zip(ts.tolist(), errs.tolist()))
    if len(records) >= 2:
        write_distribution_csv(distribution_export(stats, cfg["learn"]["bandwidth"]), out / "distributions")
    try:
        slope = asdict(fit_slope(records))
    except ValueError as exc:
        slope = {"error": str(exc)}
    manifest = _base_manifest(cfg, "learn")
    manifest.update(
        {
            "trajectory_dir": str(trajectory),
            "basis_labels": basis.labels,
            "N": len(basis),
            "tau_mean": traj.mean_tau(),
            "slope": slope,
            "loss_max": max(r.loss_final for r in records),
            "epochs_total": sum(r.epochs_used for r in records),
            "deviation_mean": dict(zip(stats.labels, stats.mean)),
            "deviation_mean_post": dict(zip(stats.labels, stats.mean_post)),
            "kde_bandwidth": "silverman" if cfg["learn"]["bandwidth"] is None else cfg["learn"]["bandwidth"],
            "loss_reported": "best_seen",
        }
    )
    write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def _read_learn_dir(d):
    d = Path(d)
    basis = read_basis(d / "basis.txt")
    labels, records = read_learn_records(d / "learn.csv")
    if labels != basis.labels:
        raise ConfigError(f"{d}: learn.csv columns do not match basis.txt")
    return basis, records


def cmd_bch(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg.chain
    b = cfg["bch"]
    if b["tau"] is not None:
        tau = b["tau"]
    elif b["trajectory"] is not None:
        tau = _load_trajectory(cfg, b["trajectory"]).mean_tau()
    else:
        raise ConfigError("[bch] needs tau or trajectory")
    coeffs = bch_coefficients(tau, p)
    centroid = None
    if b["learn"] is not None:
        basis, records = _read_learn_dir(b["learn"])
        centroid = learned_centroid(records, basis)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison(out / "comparison.json", tau, coeffs, centroid)
    manifest = _base_manifest(cfg, "bch")
    manifest["tau"] = tau
    if b["extract"]:
        six = six_term_basis()
        c = extract_effective_couplings(tau, p, six)
        manifest["matrix_log"] = dict(zip(six.labels, c))
    write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_rank(cfg: ExperimentConfig, out: Path) -> int:
    runs = cfg["rank"]["runs"]
    if not runs:
        raise ConfigError("[rank] runs is empty")
    stats = []
    labels = None
    for d in runs:
        basis, records = _read_learn_dir(d)
        if labels is not None and basis.labels != labels:
            raise ConfigError(f"{d} uses a different basis")
        labels = basis.labels
        stats.append(deviation_stats(records, basis, cfg.chain))
    ranking = rank_basis(stats, cfg["rank"]["window"])
    out.mkdir(parents=True, exist_ok=True)
    write_ranking(ranking, out / "ranking.csv")
    manifest = _base_manifest(cfg, "rank")
    manifest["runs"] = runs
    write_manifest(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig, out: Path) -> int:
    learn_dir = cfg["report"]["learn"]
    if learn_dir is None:
        raise ConfigError("[report] learn is not set")
    basis, records = _read_learn_dir(learn_dir)
    import json

    traj_dir = json.loads((Path(learn_dir) / "manifest.json").read_text())["trajectory_dir"]
    traj = _load_trajectory(cfg, traj_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = np.concatenate([[0.0], traj.times])
    mz = [magnetization_density(traj.psi0)] + [magnetization_density(s) for s in traj.checkpoints]
    plot_series(out / "magnetization.svg", t, {"M_z/L": np.array(mz)}, ylabel="M_z / L")
    tl = np.array([r.t_label for r in records])
    plot_series(out / "loss.svg", tl, {"loss": np.array([r.loss_final for r in records])}, ylabel="loss", logy=True)
    stats = deviation_stats(records, basis, cfg.chain)
    plot_series(
        out / "deviations.svg", tl, {l: stats.samples(l) for l in ("X", "Z", "ZZ")}, ylabel="|C - C*|"
    )
    return EXIT_OK


COMMANDS = {
    "run-ada": cmd_run_ada,
    "learn": cmd_learn,
    "bch": cmd_bch,
    "rank": cmd_rank,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="effham", description="Effective Hamiltonians of adaptive Trotter evolution")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--threads", type=int, help="worker cap (sets EFFHAM_THREADS)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "learn":
            sp.add_argument("--trajectory", help="trajectory directory written by run-ada")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            log.error("--threads must be at least 1")
            return EXIT_CONFIG
        os.environ["EFFHAM_THREADS"] = str(args.threads)
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.seed)
        if args.command == "learn":
            return cmd_learn(cfg, out, args.trajectory)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OptimizerError, EigensolverError) as exc:
        where = f" (checkpoint {exc.checkpoint})" if getattr(exc, "checkpoint", None) is not None else ""
        log.error("optimizer failure%s: %s", where, exc)
        return EXIT_OPTIMIZER
    except (BranchAmbiguity, NonHermitianError) as exc:
        log.error("numerical guard: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
