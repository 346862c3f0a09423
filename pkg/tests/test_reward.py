import math

import numpy as np
import pytest

from stripfold.params import desk_scale_params, min_damping
from stripfold.policy import PolicyWeights, n_weights
from stripfold.reward import (
    EpisodeConfig,
    failure_reward,
    intermediate_reward,
    run_episode,
    terminal_reward,
)
from stripfold.sim import TouchEvent


def test_intermediate_reward_form():
    assert intermediate_reward(2.0, 4, 0.01) == pytest.approx(-0.01 * 2.0 / 4)
    assert intermediate_reward(-2.0, 4, 0.01) == intermediate_reward(2.0, 4, 0.01)
    with pytest.raises(ValueError):
        intermediate_reward(1.0, 0, 0.01)
    with pytest.raises(ValueError):
        intermediate_reward(1.0, 4, -0.01)


def test_terminal_reward_form():
    assert terminal_reward(TouchEvent(True, 5, 0.2, 0.25, 0.2, 0.05)) == -0.05
    assert terminal_reward(TouchEvent(True, 5, 0.2, 0.15, 0.2, -0.05)) == -0.05
    assert math.isnan(terminal_reward(TouchEvent(touched=False)))


def test_failure_reward_is_bounded_and_worse_than_any_fold():
    p = desk_scale_params(0.1, 0.01)
    cfg = EpisodeConfig()
    assert failure_reward(p, cfg) == -(cfg.overtime_penalty + p.strip_length)


def test_episode_runs_and_accounts(medium_params):
    res = run_episode(PolicyWeights.zeros(), medium_params)
    cfg = EpisodeConfig()
    n = max(res.steps, 1)
    resum = sum(intermediate_reward(f, n, cfg.force_scale)
                for f in res.force_trace)
    assert res.intermediate_reward_sum == pytest.approx(resum, abs=1e-15)
    assert res.total_reward == res.intermediate_reward_sum + res.terminal_reward
    if res.touched:
        assert res.terminal_reward <= -abs(res.d) - 1e-15 or \
            res.terminal_reward == pytest.approx(-abs(res.d))


def test_overtime_penalty_applied_when_horizon_exceeded(medium_params):
    # the neutral policy drifts away from the fold; with a tiny horizon the
    # episode is completed by forced horizontal motion and charged c_H
    cfg = EpisodeConfig(horizon=5)
    res = run_episode(PolicyWeights.zeros(), medium_params, cfg)
    if res.touched:
        assert res.terminal_reward == pytest.approx(
            -abs(res.d) - cfg.overtime_penalty)


def test_episode_csv_summary(tmp_path, medium_params):
    res = run_episode(PolicyWeights.zeros(), medium_params)
    out = tmp_path / "episode.csv"
    res.write_csv(out)
    lines = out.read_text().splitlines()
    assert lines[-2].startswith("# summary")
    last = lines[-1].split(",")
    assert int(last[1]) == int(res.touched)
    assert float(last[4]) == pytest.approx(res.total_reward)
