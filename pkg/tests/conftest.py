"""Shared fixtures for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from stripfold.params import desk_scale_params, min_damping

REPO_ROOT = Path(__file__).resolve().parents[1]
TRAINED_WEIGHTS = REPO_ROOT / "weights" / "policy_weights.txt"


@pytest.fixture(scope="session")
def medium_params():
    """A mid-prior material at desk scale, shared across read-only tests."""
    return desk_scale_params(0.16, min_damping(0.16) * 7.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
