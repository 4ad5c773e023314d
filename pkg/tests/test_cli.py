import json
import subprocess
import sys
import time

import pytest

from effham.cli import main

SMOKE = """
[chain]
L = 4
[ada]
d_E = 0.5
d_var = 0.5
M = 5
[basis]
R = 2
[adam]
lr = 1e-3
max_epochs = 200
"""


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def smoke(tmp_path):
    return write_cfg(tmp_path / "smoke.ini", SMOKE)


def run_pipeline(tmp_path, cfg, tag):
    traj, learn = tmp_path / f"traj_{tag}", tmp_path / f"learn_{tag}"
    assert main(["run-ada", "--config", cfg, "--out", str(traj)]) == 0
    assert main(["learn", "--config", cfg, "--out", str(learn), "--trajectory", str(traj)]) == 0
    return traj, learn


def test_smoke_pipeline_is_fast_and_complete(tmp_path, smoke):
    t0 = time.perf_counter()
    traj, learn = run_pipeline(tmp_path, smoke, "a")
    assert time.perf_counter() - t0 < 10
    rows = (traj / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "m,t,tau,E,dE2" and len(rows) == 6
    for name in ("basis.txt", "learn.csv", "deviations.csv", "rdm_error.csv", "manifest.json"):
        assert (learn / name).exists(), name
    man = json.loads((learn / "manifest.json").read_text())
    assert man["loss_reported"] == "best_seen" and man["N"] == len((learn / "basis.txt").read_text().split())


def test_reruns_are_byte_identical(tmp_path, smoke):
    _, a = run_pipeline(tmp_path, smoke, "a")
    _, b = run_pipeline(tmp_path, smoke, "b")
    for name in ("learn.csv", "deviations.csv", "rdm_error.csv", "basis.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_rank_then_truncate(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", SMOKE.replace("R = 2", "R = 3"))
    _, learn = run_pipeline(tmp_path, cfg, "a")
    rank_cfg = write_cfg(tmp_path / "r.ini", SMOKE + f"[rank]\nruns = {learn}\n")
    assert main(["rank", "--config", rank_cfg, "--out", str(tmp_path / "rank")]) == 0
    ranking = tmp_path / "rank" / "ranking.csv"
    assert ranking.read_text().splitlines()[0] == "label,mean_deviation,std_deviation"
    trunc = SMOKE.replace("R = 2", f"R = 3\ntruncate_N = 16\nranking_file = {ranking}")
    cfg2 = write_cfg(tmp_path / "t.ini", trunc)
    assert main(["learn", "--config", cfg2, "--out", str(tmp_path / "lt"), "--trajectory", str(tmp_path / "traj_a")]) == 0
    header = (tmp_path / "lt" / "learn.csv").read_text().splitlines()[0].split(",")
    assert sum(h.startswith("C_") for h in header) == 16


def test_single_step_run(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", SMOKE.replace("M = 5", "M = 1"))
    assert main(["run-ada", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "trajectory.csv").read_text().splitlines()) == 2


def test_fixed_step_mode(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", SMOKE.replace("M = 5", "M = 3\nfixed_tau = 0.1"))
    assert main(["run-ada", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["trajectory"]["tau_mean"] == pytest.approx(0.1)


def test_bad_config_exits_2(tmp_path):
    bad = write_cfg(tmp_path / "b.ini", "[chain]\nL = 4\ncolour = blue\n")
    assert main(["run-ada", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    bad2 = write_cfg(tmp_path / "b2.ini", "[nonsense]\n")
    assert main(["run-ada", "--config", bad2, "--out", str(tmp_path / "o")]) == 2
    bad3 = write_cfg(tmp_path / "b3.ini", "[ada]\nd_E = -1\n")
    assert main(["run-ada", "--config", bad3, "--out", str(tmp_path / "o")]) == 2
    assert main(["run-ada"]) == 2


def test_empty_rank_exits_2(tmp_path, smoke):
    assert main(["rank", "--config", smoke, "--out", str(tmp_path / "o")]) == 2


def test_step_not_found_exits_3_and_keeps_partial(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", "[chain]\nL = 6\n[ada]\nM = 10\n")
    out = tmp_path / "o"
    assert main(["run-ada", "--config", cfg, "--out", str(out)]) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["trajectory"]["status"].startswith("step_not_found")
    assert (out / "trajectory.csv").exists()


def test_branch_ambiguity_exits_5(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", "[chain]\nL = 4\n[basis]\nR = 2\n[bch]\ntau = 3.0\nextract = true\n")
    assert main(["bch", "--config", cfg, "--out", str(tmp_path / "o")]) == 5


def test_bch_at_zero_step(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", "[chain]\nL = 4\n[basis]\nR = 2\n[bch]\ntau = 0.0\n")
    assert main(["bch", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    data = json.loads((tmp_path / "o" / "comparison.json").read_text())
    assert data["bch"]["C_X"] == -1.7 and data["bch"]["C_YY"] == 0


def test_report_writes_svgs(tmp_path, smoke):
    _, learn = run_pipeline(tmp_path, smoke, "a")
    cfg = write_cfg(tmp_path / "r.ini", SMOKE + f"[report]\nlearn = {learn}\n")
    assert main(["report", "--config", cfg, "--out", str(tmp_path / "rep")]) == 0
    for name in ("magnetization.svg", "loss.svg", "deviations.svg"):
        assert (tmp_path / "rep" / name).read_text().lstrip().startswith("<?xml")


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "effham.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "0.1.0"
