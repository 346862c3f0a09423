"""Acceptance checks: one test per release gate, each with its time budget.

These run the real workloads (no mocks); the module is slow but bounded.
"""

import math
import time

import numpy as np
import pytest

from conftest import TRAINED_WEIGHTS

from stripfold import sim
from stripfold.cmaes import CMAES
from stripfold.harness import (
    ExperimentConfig,
    envelope_by_stiffness,
    displacement_envelope,
    evaluate_policy,
)
from stripfold.params import desk_scale_params, min_damping
from stripfold.paths import circular_path, run_path, triangular_path
from stripfold.policy import PolicyWeights, n_weights
from stripfold.reward import EpisodeConfig, intermediate_reward, run_episode
from stripfold.trainer import (
    MaterialPrior,
    TrainerConfig,
    fold_height_envelope,
    replay_ledger,
    sample_prior,
    train,
)


def test_baseline_sign_structure_over_prior_grid():
    """Triangular folds land short (d < 0) and circular folds land past
    (d > 0) on a 5x5 grid spanning the whole material prior. Budget: 5 min."""
    start = time.monotonic()
    prior = MaterialPrior()
    bad = []
    for k, b in prior.grid(5, 5):
        params = desk_scale_params(k, b)
        L = params.strip_length
        tri = run_path(triangular_path(L), params)
        cir = run_path(circular_path(L), params)
        if not (tri.touched and tri.d < 0):
            bad.append(("triangular", k, b, tri.touched, tri.d))
        if not (cir.touched and cir.d > 0):
            bad.append(("circular", k, b, cir.touched, cir.d))
    assert not bad, f"sign violations: {bad}"
    assert time.monotonic() - start < 300


@pytest.mark.skipif(not TRAINED_WEIGHTS.exists(),
                    reason="trained weights artifact missing")
def test_trained_policy_beats_both_baselines():
    """The committed trained policy halves the displacement of the better
    baseline on 20 held-out material draws."""
    weights = PolicyWeights.load(TRAINED_WEIGHTS)
    report = evaluate_policy(weights, MaterialPrior(), 20, seed=0)
    s = report.summary()
    assert s["policy"]["n_touched"] == 20
    pol = s["policy"]["mean_abs_d"]
    tri = s["triangular"]["mean_abs_d"]
    cir = s["circular"]["mean_abs_d"]
    assert pol < tri
    assert pol < cir
    assert pol < 0.5 * min(tri, cir), (
        f"policy {pol:.4f} vs baselines tri {tri:.4f} cir {cir:.4f}")


def test_fold_height_envelope_continuity():
    """Touch-position envelopes at three gripper heights: nonzero width and
    no adjacent-grid jump above 5 mm along either material axis.
    Budget: 10 min."""
    start = time.monotonic()
    cfg = ExperimentConfig()
    prior = MaterialPrior()
    heights = cfg.heights
    assert len(heights) >= 3
    rows = fold_height_envelope(prior, heights,
                                nk=cfg.sweep_nk, nb=cfg.sweep_nb)
    assert all(not r["censored"] for r in rows), "censored envelope rows"
    worst = 0.0
    worst_at = None
    for z in heights:
        sub = [r for r in rows if r["z"] == z]
        xs = [r["x_touch"] for r in sub]
        assert max(xs) - min(xs) > 0.01, f"degenerate envelope at z={z}"
        by_ratio: dict[float, list] = {}
        by_k: dict[float, list] = {}
        for r in sub:
            by_ratio.setdefault(round(r["b"] / min_damping(r["k"]), 9),
                                []).append(r)
            by_k.setdefault(r["k"], []).append(r)
        for groups, key in ((by_ratio, "k"), (by_k, "b")):
            for g in groups.values():
                g = sorted(g, key=lambda r: r[key])
                for a, c in zip(g[:-1], g[1:]):
                    jump = abs(a["x_touch"] - c["x_touch"])
                    if jump > worst:
                        worst = jump
                        worst_at = (z, a["k"], a["b"], c["k"], c["b"])
    assert worst < 0.005, f"jump {worst * 1e3:.1f} mm at {worst_at}"
    assert time.monotonic() - start < 600


def test_simulator_invariants():
    """Link inextensibility, pin exactness, non-penetration, energy
    dissipation, mirror symmetry of the settled shape, and the pendulum
    period, all inside a 2 minute budget."""
    start = time.monotonic()
    p = desk_scale_params(0.16, min_damping(0.16) * 7.0)

    # driven fold: drift / pin / penetration at every step
    state = sim.init_flat(p)
    worst_link = worst_pin = worst_pen = 0.0
    for tgt in ((0.3, 0.3), (0.0, p.sphere_radius)):
        target = np.asarray(tgt, dtype=float)
        while float(np.hypot(*(target - state.positions[-1]))) > 1e-9:
            state, _ = sim.step(state, target, p)
            worst_link = max(worst_link, sim.link_violation(state, p))
            worst_pin = max(worst_pin, float(np.abs(state.positions[0]).max()))
            worst_pen = max(worst_pen, p.sphere_radius
                            - float(state.positions[1:, 1].min()))
    assert worst_link < 1e-6
    assert worst_pin == 0.0
    assert worst_pen < 1e-5

    # energy: pinned chain raised 45 degrees and released without desk;
    # net decrease, transient projection rises stay tiny
    state = sim.init_flat(p)
    th = math.pi / 4
    rot = np.array([[math.cos(th), -math.sin(th)],
                    [math.sin(th), math.cos(th)]])
    state.positions[:] = state.positions @ rot.T
    e0 = e_prev = sim.mechanical_energy(state, p)
    max_rise = 0.0
    for _ in range(1500):
        state, _ = sim.step(state, None, p, desk_enabled=False)
        e = sim.mechanical_energy(state, p)
        max_rise = max(max_rise, e - e_prev)
        e_prev = e
    assert e_prev < e0 - 0.1 * abs(e0)  # dissipated a real fraction
    assert max_rise < 1e-3  # projection may inject only transient crumbs

    # mirror symmetry: both ends pinned at equal height, settled shape
    # symmetric about the vertical midline (reflect and compare)
    sep = 0.35
    state = sim.init_flat(p)
    state = sim.drive_gripper_to(state, (sep, p.sphere_radius), p,
                                 settle_time=6.0)
    pos = state.positions
    mirrored = np.column_stack([sep - pos[::-1, 0], pos[::-1, 1]])
    assert np.abs(pos - mirrored).max() < 1e-4

    # x-negation equivariance of the full driven dynamics
    sA = sim.init_flat(p)
    sB = sim.StripState(sA.positions.copy(), sA.velocities.copy())
    sB.positions[:, 0] *= -1.0
    for _ in range(300):
        sA, _ = sim.step(sA, (0.4, 0.15), p)
        sB, _ = sim.step(sB, (-0.4, 0.15), p)
    assert np.abs(sB.positions[:, 0] + sA.positions[:, 0]).max() < 1e-4
    assert np.abs(sB.positions[:, 1] - sA.positions[:, 1]).max() < 1e-4

    # single-link pendulum period within 5% of 2*pi*sqrt(l/g)
    pp = desk_scale_params(0.16, min_damping(0.16), n_links=1,
                           joint_stiffness=0.0, joint_damping=0.0)
    ell = pp.link_length
    amp = 0.05
    st = sim.StripState(
        np.array([[0.0, 0.0], [ell * math.sin(amp), -ell * math.cos(amp)]]),
        np.zeros((2, 2)))
    t_theory = 2 * math.pi * math.sqrt(ell / pp.gravity)
    crossings = []
    prev_x, t = st.positions[1, 0], 0.0
    while len(crossings) < 5 and t < 30.0:
        st, _ = sim.step(st, None, pp, desk_enabled=False)
        t += pp.sim_dt
        x = st.positions[1, 0]
        if prev_x > 0 >= x:
            crossings.append(t - pp.sim_dt * x / (x - prev_x))
        prev_x = x
    assert len(crossings) >= 3
    t_meas = (crossings[-1] - crossings[0]) / (len(crossings) - 1)
    assert abs(t_meas - t_theory) / t_theory < 0.05

    assert time.monotonic() - start < 120


def test_reward_accounting_over_100_episodes():
    """total_reward equals the sum of stored per-step rewards plus the final
    reward to 1e-12, over 100 random policy/material episodes."""
    rng = np.random.default_rng(42)
    prior = MaterialPrior()
    cfg = EpisodeConfig(horizon=120)  # shorter horizon, same accounting
    for _ in range(100):
        weights = PolicyWeights(rng.normal(0.0, 0.4, n_weights()))
        params = sample_prior(prior, rng)
        res = run_episode(weights, params, cfg)
        n = max(res.steps, 1)
        resum = math.fsum(intermediate_reward(f, n, cfg.force_scale)
                          for f in res.force_trace) + res.terminal_reward
        assert abs(res.total_reward - resum) <= 1e-12


def test_cmaes_sphere_and_ledger_replay():
    """CMA-ES reaches 1e-8 on the 10-D sphere within 10k evaluations, and
    a training ledger replays bit-identically from its seed."""
    es = CMAES(np.full(10, 3.0), 2.0, popsize=16,
               rng=np.random.default_rng(0))
    evals = 0
    best = math.inf
    while evals < 10_000 and best >= 1e-8:
        cands = es.ask()
        fits = [float(np.sum(c * c)) for c in cands]
        evals += len(fits)
        es.tell(cands, fits)
        best = min(best, min(fits))
    assert best < 1e-8, f"best {best:.2e} after {evals} evals"

    cfg = TrainerConfig(popsize=4, generations=2, samples_per_eval=2,
                        select_samples=0, n_workers=1,
                        episode=EpisodeConfig(horizon=60))
    first = train(cfg, MaterialPrior(), seed=123).ledger
    again = replay_ledger(cfg, MaterialPrior(), seed=123, generations=2)
    assert first == again


def test_vision_loop_matches_oracle():
    """Rendered-and-detected contact x within one pixel-equivalent of the
    simulator oracle on >= 99% of 200 states; homography recovery exact to
    1e-6; the violating states are enumerated, not hidden."""
    from stripfold import vision
    from stripfold.harness import render_check

    rng = np.random.default_rng(0)
    h_true = vision.canonical_camera()[0]
    src = rng.uniform(0.0, 0.7, size=(12, 2))
    hom, _ = vision.estimate_homography(src, h_true.project(src))
    assert float(np.abs(hom.matrix - h_true.matrix).max()) < 1e-6

    result = render_check(MaterialPrior(), 200, seed=0)
    assert result["n_states"] == 200
    assert result["fraction_ok"] >= 0.99
    assert len(result["violations"]) == 200 - result["n_ok"]
    for state_i, oracle, detected in result["violations"]:
        assert isinstance(state_i, int) and math.isfinite(oracle)


@pytest.mark.skipif(not TRAINED_WEIGHTS.exists(),
                    reason="trained weights artifact missing")
def test_displacement_envelope_reports_zero_crossings():
    """The per-stiffness displacement envelope carries a zero-crossing flag
    per k; coverage is reported, never asserted (not every strip can reach
    zero displacement)."""
    weights = PolicyWeights.load(TRAINED_WEIGHTS)
    grid = MaterialPrior().grid(3, 3)
    rows = displacement_envelope(weights, MaterialPrior(), grid)
    env = envelope_by_stiffness(rows)
    assert len(env) == 3
    for e in env:
        assert set(e) == {"k", "d_min", "d_max", "n_touched", "crosses_zero"}
        if e["n_touched"]:
            assert e["crosses_zero"] == (e["d_min"] <= 0.0 <= e["d_max"])
