from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teamprod.affinity import TeamTaskObservation


def make_observations(
    n: int,
    seed: int = 0,
    task: str = "start",
    attempt: int = 1,
    theta: float = 0.4,
    a_sigma: float = 0.3,
    noise_sd: float = 0.02,
    x_law=(1.0, 3.0),
    y_law=(1.0, 3.0),
) -> tuple[list[TeamTaskObservation], np.ndarray]:
    """One synthetic Cobb-Douglas slice plus its planted efficiencies."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(*x_law, n)
    y = rng.uniform(*y_law, n)
    a = rng.lognormal(0.0, a_sigma, n)
    h = (a * x) ** theta * y ** (1.0 - theta) + rng.normal(0.0, noise_sd, n)
    h = np.maximum(h, 1e-6)
    obs = [
        TeamTaskObservation(
            team_id=f"T{i:04d}",
            task=task,
            attempt=attempt,
            x_input=float(x[i]),
            y_input=float(y[i]),
            h_output=float(h[i]),
        )
        for i in range(n)
    ]
    return obs, a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
