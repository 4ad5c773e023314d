import math

import numpy as np
import pytest
import scipy.linalg as la

from conftest import dense_hamiltonian, dense_translation_sum, random_state
from effham.ada import AdaConfig, fixed_step_run, run
from effham.basis import build_basis, project_onto_basis
from effham.learner import (
    Adam,
    AdamConfig,
    EffectiveHamiltonian,
    HamiltonianModel,
    OptimizerError,
    learn_trajectory,
    optimize,
    read_learn_records,
    target_vector,
    write_learn_records,
)
from effham.simulator import ChainParams, basis_state, evolve_exact, fidelity, initial_state

THETA = math.pi / 3
B3 = build_basis(3, parity_filter=False, interior_identity=False)


def central_fd(model, C, psi0, phi, t, h=1e-3):
    """Fourth-order central differences; the two-point rule at h=1e-6 has a
    rounding floor near 1e-10 that swamps relative checks on small entries."""
    out = np.empty(len(C))
    for a in range(len(C)):
        e = np.zeros(len(C))
        e[a] = h
        f = lambda s: model.loss(C + s * e, psi0, phi, t)
        out[a] = (8 * f(1) - 8 * f(-1) - f(2) + f(-2)) / (12 * h)
    return out


def two_point_fd(model, C, psi0, phi, t, h=1e-6):
    out = np.empty(len(C))
    for a in range(len(C)):
        e = np.zeros(len(C))
        e[a] = h
        out[a] = (model.loss(C + e, psi0, phi, t) - model.loss(C - e, psi0, phi, t)) / (2 * h)
    return out


def assert_fd(g, fd, rtol=1e-6):
    mask = np.abs(g) > 1e-12
    assert np.all(np.abs(g - fd)[mask] <= rtol * np.abs(g)[mask]), np.max(np.abs(g - fd)[mask] / np.abs(g)[mask])
    assert np.all(np.abs(fd[~mask]) < 1e-9)


def test_adam_matches_reference_formula():
    opt = Adam(2, lr=0.1, beta1=0.9, beta2=0.99, eps=1e-8)
    x = np.array([1.0, -2.0])
    g = np.array([0.5, -0.25])
    x1 = opt.step(x, g)
    # first bias-corrected step moves each coordinate by lr * sign(g)
    assert np.allclose(x1, x - 0.1 * np.sign(g), atol=1e-6)
    x2 = opt.step(x1, 2 * g)
    m = 0.9 * 0.1 * g + 0.1 * 2 * g
    v = 0.99 * 0.01 * g**2 + 0.01 * 4 * g**2
    expected = x1 - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.99**2)) + 1e-8)
    assert np.allclose(x2, expected)


def test_adam_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)
    with pytest.raises(ValueError):
        AdamConfig(lr=0)


@pytest.mark.parametrize("sector", [True, False])
def test_assemble(sector):
    L = 6
    m = HamiltonianModel(B3, L, sector=sector)
    assert np.allclose(m.assemble(np.zeros(B3.N)), 0)
    H = m.assemble(target_vector(B3, ChainParams(L)))
    if sector:
        assert np.allclose(H, m.sector.restrict(dense_hamiltonian(L)))
    else:
        assert np.allclose(H, dense_hamiltonian(L))
        C = np.random.default_rng(0).standard_normal(B3.N)
        H = m.assemble(C)
        assert np.allclose(H, H.conj().T, atol=1e-12)
        assert np.allclose(project_onto_basis(H, B3, L), C)
    with pytest.raises(ValueError):
        m.assemble(np.zeros(3))


def test_loss_examples():
    L = 6
    p = ChainParams(L)
    m = HamiltonianModel(B3, L, sector=False)
    psi0 = initial_state(L, THETA)
    C = target_vector(B3, p)
    assert m.loss(C, psi0, psi0, 0.0) == pytest.approx(0.0, abs=1e-14)
    phi = evolve_exact(psi0, dense_hamiltonian(L), 1.7)
    assert m.loss(C, psi0, phi, 1.7) < 1e-12
    # a state orthogonal to the evolved one
    u = m.evolve(C, psi0, 0.8)
    r = random_state(np.random.default_rng(1), L)
    r -= np.vdot(u, r) * u
    r /= np.linalg.norm(r)
    assert m.loss(C, psi0, r, 0.8) == pytest.approx(1.0, abs=1e-12)


def test_sector_and_full_agree():
    L = 6
    p = ChainParams(L)
    psi0 = initial_state(L, THETA)
    traj = fixed_step_run(psi0, 0.2, 4, p)
    C = target_vector(B3, p) + 0.02 * np.random.default_rng(5).standard_normal(B3.N)
    full = HamiltonianModel(B3, L, sector=False)
    sec = HamiltonianModel(B3, L, sector=True)
    lf, gf = full.loss_and_gradient(C, psi0, traj.checkpoints[-1], traj.steps[-1].t)
    ls, gs = sec.loss_and_gradient(C, psi0, traj.checkpoints[-1], traj.steps[-1].t)
    assert ls == pytest.approx(lf, abs=1e-12)
    assert np.allclose(gs, gf, atol=1e-12)
    assert np.allclose(sec.evolve(C, psi0, 0.7), full.evolve(C, psi0, 0.7))


def test_sector_rejects_asymmetric_state():
    m = HamiltonianModel(B3, 4, sector=True)
    with pytest.raises(ValueError):
        m.loss(np.zeros(B3.N), basis_state(4, 1), basis_state(4, 1), 1.0)


def test_gradient_zero_at_t0():
    m = HamiltonianModel(B3, 6, sector=False)
    rng = np.random.default_rng(2)
    _, g = m.loss_and_gradient(rng.standard_normal(B3.N), random_state(rng, 6), random_state(rng, 6), 0.0)
    assert np.all(g == 0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    L = 6
    b = build_basis(3, parity_filter=True)
    m = HamiltonianModel(b, L, sector=False)
    C = rng.standard_normal(b.N)
    t = rng.uniform(0.1, 2.0)
    psi0 = random_state(rng, L)
    phi = m.evolve(C + 0.05 * rng.standard_normal(b.N), psi0, t)
    _, g = m.loss_and_gradient(C, psi0, phi, t)
    assert_fd(g, central_fd(m, C, psi0, phi, t))
    assert np.allclose(g, two_point_fd(m, C, psi0, phi, t), rtol=0, atol=1e-8)


def test_gradient_degenerate_spectrum():
    L = 6
    b = build_basis(2, parity_filter=True)
    m = HamiltonianModel(b, L, sector=False)
    C = np.zeros(b.N)
    C[b.index("Z")], C[b.index("ZZ")] = 0.5, -1.0
    w = la.eigvalsh(m.assemble(C))
    assert len(np.unique(w)) < len(w) // 4  # exact ties in floating point
    rng = np.random.default_rng(3)
    psi0, phi = random_state(rng, L), random_state(rng, L)
    _, g = m.loss_and_gradient(C, psi0, phi, 1.3)
    assert np.all(np.isfinite(g))
    assert_fd(g, central_fd(m, C, psi0, phi, 1.3))


def test_gradient_near_degenerate_pairs():
    # translation symmetry makes momentum +-k levels coincide up to rounding
    L = 6
    m = HamiltonianModel(B3, L, sector=False)
    C = target_vector(B3, ChainParams(L))
    rng = np.random.default_rng(4)
    psi0, phi = random_state(rng, L), random_state(rng, L)
    _, g = m.loss_and_gradient(C, psi0, phi, 0.9)
    assert_fd(g, central_fd(m, C, psi0, phi, 0.9))


def test_gauge_invariance():
    L = 6
    m = HamiltonianModel(B3, L, sector=False)
    rng = np.random.default_rng(6)
    C, psi0, phi = rng.standard_normal(B3.N), random_state(rng, L), random_state(rng, L)
    l1, g1 = m.loss_and_gradient(C, psi0, phi, 1.1)
    l2, g2 = m.loss_and_gradient(C, psi0, np.exp(0.77j) * phi, 1.1)
    assert l1 == pytest.approx(l2, abs=1e-14)
    assert np.allclose(g1, g2, atol=1e-14)


def test_optimize_terminates_immediately_when_optimal():
    L = 6
    p = ChainParams(L)
    m = HamiltonianModel(B3, L)
    psi0 = initial_state(L, THETA)
    C = target_vector(B3, p)
    phi = m.evolve(C, psi0, 2.0)
    rec = optimize(m, C, psi0, phi, 2.0)
    assert rec.epochs_used == 0 and rec.terminated_by == "cutoff" and rec.loss_final < 1e-4


def test_optimize_best_seen_and_determinism():
    L = 6
    p = ChainParams(L)
    m = HamiltonianModel(B3, L)
    psi0 = initial_state(L, THETA)
    traj = fixed_step_run(psi0, 0.3, 8, p)
    cfg = AdamConfig(lr=1e-3, max_epochs=40, l_min=1e-9)
    C0 = target_vector(B3, p)
    rec = optimize(m, C0, psi0, traj.checkpoints[-1], traj.steps[-1].t, cfg)
    assert rec.terminated_by == "epoch_limit" and rec.epochs_used == 40
    assert rec.loss_final <= rec.loss_start
    assert rec.loss_final <= rec.loss_last
    assert 0 <= rec.loss_final <= 1
    # re-evaluating the loss at the stored coefficients reproduces it
    assert m.loss(rec.C_final, psi0, traj.checkpoints[-1], rec.t_label) == pytest.approx(rec.loss_final, abs=1e-12)
    again = optimize(m, C0, psi0, traj.checkpoints[-1], traj.steps[-1].t, cfg)
    assert np.array_equal(again.C_final, rec.C_final)


def test_optimize_reports_non_finite_start():
    m = HamiltonianModel(B3, 4)
    C = target_vector(B3, ChainParams(4))
    C[0] = np.nan
    psi0 = initial_state(4, THETA)
    with pytest.raises(OptimizerError) as info:
        optimize(m, C, psi0, psi0, 1.0)
    assert info.value.epoch == 0


def test_zero_weight_term_leaves_loss_unchanged():
    # sum_j (X_j X_{j+1} + Y_j Y_{j+1}) annihilates the all-down state, so the
    # evolution of that state never sees its coefficient
    L = 4
    ops = [dense_translation_sum("Z", L), dense_translation_sum("ZZ", L)]
    hop = dense_translation_sum("XX", L) + dense_translation_sum("YY", L)
    psi0 = basis_state(L, 0)
    assert np.allclose(hop @ psi0, 0)
    phi = initial_state(L, 0.3)
    cfg = AdamConfig(lr=1e-2, max_epochs=30)
    small = HamiltonianModel.from_operators(ops, ["Z", "ZZ"], L)
    big = HamiltonianModel.from_operators(ops + [hop], ["Z", "ZZ", "XX+YY"], L)
    r1 = optimize(small, np.array([0.5, -1.0]), psi0, phi, 1.2, cfg)
    r2 = optimize(big, np.array([0.5, -1.0, 0.0]), psi0, phi, 1.2, cfg)
    assert r2.loss_final == pytest.approx(r1.loss_final, abs=1e-14)
    assert r2.C_final[2] == 0.0
    _, g = big.loss_and_gradient(np.array([0.3, 0.2, 0.7]), psi0, phi, 1.2)
    assert abs(g[2]) < 1e-14


def test_learn_trajectory_single_checkpoint():
    L = 6
    p = ChainParams(L)
    psi0 = initial_state(L, THETA)
    traj = fixed_step_run(psi0, 0.2, 1, p)
    cfg = AdamConfig(max_epochs=50)
    recs = learn_trajectory(traj, B3, cfg)
    direct = optimize(HamiltonianModel(B3, L), target_vector(B3, p), psi0, traj.checkpoints[0], traj.steps[0].t, cfg)
    assert len(recs) == 1
    assert np.array_equal(recs[0].C_final, direct.C_final)


def test_warm_start_saves_epochs():
    L = 8
    p = ChainParams(L)
    traj = fixed_step_run(initial_state(L, THETA), 0.1, 12, p)
    warm = learn_trajectory(traj, B3, AdamConfig())
    cold = learn_trajectory(traj, B3, AdamConfig(), warm_start=False)
    assert sum(r.epochs_used for r in cold) > sum(r.epochs_used for r in warm)
    assert all(r.terminated_by == "cutoff" for r in warm)


def test_learning_on_adaptive_trajectory():
    L = 8
    p = ChainParams(L)
    traj = run(initial_state(L, THETA), AdaConfig(0.5, 0.5, M=6), p)
    recs = learn_trajectory(traj, build_basis(5, parity_filter=False, interior_identity=False), AdamConfig())
    assert len(recs) == 6
    assert all(0 <= r.loss_final < 0.05 for r in recs)


def test_stride_and_export(tmp_path):
    L = 6
    p = ChainParams(L)
    traj = fixed_step_run(initial_state(L, THETA), 0.2, 6, p)
    recs = learn_trajectory(traj, B3, AdamConfig(max_epochs=20), stride=2)
    assert [r.t_label for r in recs] == [traj.steps[k].t for k in (0, 2, 4)]
    write_learn_records(recs, B3, tmp_path / "learn.csv")
    header = (tmp_path / "learn.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "loss", "epochs", "terminated_by"]
    assert header[4:] == [f"C_{l}" for l in B3.labels]
    labels, back = read_learn_records(tmp_path / "learn.csv")
    assert labels == B3.labels
    for a, b in zip(recs, back):
        assert np.array_equal(a.C_final, b.C_final) and a.loss_final == b.loss_final


def test_learn_trajectory_requires_checkpoints():
    traj = fixed_step_run(initial_state(4, THETA), 0.1, 1, ChainParams(4))
    traj.steps.clear()
    traj.checkpoints.clear()
    with pytest.raises(ValueError):
        learn_trajectory(traj, build_basis(2), AdamConfig())


def test_effective_hamiltonian():
    p = ChainParams(4)
    b = build_basis(2, parity_filter=True)
    eff = EffectiveHamiltonian(b, target_vector(b, p), 0.0)
    assert np.allclose(eff.matrix(4), dense_hamiltonian(4))
    assert eff.as_dict()["ZZ"] == -1.0
