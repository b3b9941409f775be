from __future__ import annotations

import math

import numpy as np
import pytest

from dfsbqc.channel import NoiseParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def moduli_grid(points=(0.0, 0.25, 0.5, 0.75, 1.0)):
    return [(a2, d2) for a2 in points for d2 in points]


PHASE_SETTINGS = [
    (0.0, 0.0, 0.0, 0.0),
    (math.pi / 3, 0.0, 0.0, 0.0),
    (0.4, 1.7, 2.9, 5.1),
    (math.pi, math.pi / 2, 3 * math.pi / 2, 0.25),
]


def delta_grid():
    return [NoiseParams.from_moduli(a2, d2, ph) for a2, d2 in moduli_grid() for ph in PHASE_SETTINGS]


def within_sigma(p_hat: float, p: float, trials: int, k: float = 3.0) -> bool:
    sigma = math.sqrt(p * (1 - p) / trials)
    if sigma == 0:
        return p_hat == p
    return abs(p_hat - p) <= k * sigma
