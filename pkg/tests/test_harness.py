import numpy as np
import pytest

from stripfold.harness import (
    DisplacementReport,
    ExperimentConfig,
    ReportWriter,
    envelope_by_stiffness,
    evaluate_policy,
    heldout_rng,
    write_manifest,
)
from stripfold.policy import PolicyWeights
from stripfold.reward import EpisodeConfig
from stripfold.trainer import MaterialPrior, TrainerConfig


def test_config_text_round_trip():
    cfg = ExperimentConfig(
        kind="sweep", seed=9, out_dir="x", weights_file="w.txt",
        n_samples=7, grid_nk=3, grid_nb=4, sweep_nk=11, sweep_nb=12,
        heights=(0.04, 0.09), n_states=33, trace_stiffness=0.21,
        trace_damping=0.002,
        trainer=TrainerConfig(popsize=8, sigma0=0.25, generations=10,
                              samples_per_eval=3, select_samples=16,
                              n_workers=2,
                              episode=EpisodeConfig(horizon=123)),
        prior=MaterialPrior(k_min=0.05, k_max=0.2, damping_ratio_max=10.0))
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_text("bogus = 1\n")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(kind="nope").validate()
    with pytest.raises(ValueError):
        ExperimentConfig(heights=()).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(n_samples=0).validate()


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(kind="baseline", seed=4)
    path = tmp_path / "cfg.txt"
    cfg.save(path)
    assert ExperimentConfig.load(path) == cfg


def test_manifest_contains_versions_and_config(tmp_path):
    cfg = ExperimentConfig(seed=17)
    write_manifest(tmp_path, cfg)
    text = (tmp_path / "manifest.txt").read_text()
    assert "stripfold = " in text
    assert "numpy = " in text
    assert "seed = 17" in text


def test_report_writer_flushes_each_row(tmp_path):
    path = tmp_path / "rows.csv"
    with ReportWriter(path, ("a", "b")) as w:
        w.append([1, 2])
        # readable mid-run: partial results survive interruption
        assert path.read_text().splitlines() == ["a,b", "1,2"]
        w.append([3, 4])
    assert path.read_text().splitlines() == ["a,b", "1,2", "3,4"]


def test_heldout_rng_is_stable_and_namespaced():
    a = heldout_rng(0).uniform(size=3)
    b = heldout_rng(0).uniform(size=3)
    np.testing.assert_array_equal(a, b)
    c = np.random.default_rng(0).uniform(size=3)
    assert not np.array_equal(a, c)


def test_displacement_report_summary():
    rows = [
        ("policy", 0.1, 0.01, -0.004, True),
        ("policy", 0.2, 0.01, 0.006, True),
        ("policy", 0.3, 0.01, float("nan"), False),
        ("triangular", 0.1, 0.01, -0.03, True),
    ]
    rep = DisplacementReport(rows)
    s = rep.summary()
    assert s["policy"]["n_touched"] == 2
    assert s["policy"]["mean_abs_d"] == pytest.approx(0.005)
    assert s["policy"]["max_abs_d"] == pytest.approx(0.006)
    assert s["triangular"]["mean_d"] == pytest.approx(-0.03)


def test_report_csv_contains_summary_block(tmp_path):
    rep = DisplacementReport([("policy", 0.1, 0.01, -0.004, True)])
    path = tmp_path / "rep.csv"
    rep.write_csv(path)
    text = path.read_text()
    assert "# method" in text
    assert text.startswith("method,k,b,d,touched")


def test_envelope_by_stiffness_reports_not_asserts():
    rows = [
        {"k": 0.1, "b": 1e-3, "d": -0.01, "touched": True},
        {"k": 0.1, "b": 2e-3, "d": 0.02, "touched": True},
        {"k": 0.2, "b": 1e-3, "d": 0.01, "touched": True},
        {"k": 0.2, "b": 2e-3, "d": 0.03, "touched": True},
        {"k": 0.3, "b": 1e-3, "d": float("nan"), "touched": False},
    ]
    env = envelope_by_stiffness(rows)
    by_k = {e["k"]: e for e in env}
    # a stiffness whose band straddles zero is flagged, one that does not is
    # still present with its band, and untouched rows stay visible
    assert by_k[0.1]["crosses_zero"] is True
    assert by_k[0.2]["crosses_zero"] is False
    assert by_k[0.2]["d_min"] == pytest.approx(0.01)
    assert by_k[0.3]["n_touched"] == 0


def test_evaluate_policy_rows_are_paired(medium_params):
    rep = evaluate_policy(PolicyWeights.zeros(), MaterialPrior(), 2, seed=1)
    assert len(rep.rows) == 6  # policy + two baselines per draw
    assert rep.methods() == ["policy", "triangular", "circular"]
    # same material for the three methods of a draw
    for i in (0, 3):
        trio = rep.rows[i:i + 3]
        assert len({(k, b) for _, k, b, _, _ in trio}) == 1
