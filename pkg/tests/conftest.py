"""Shared test helpers."""

from __future__ import annotations

import numpy as np
import pytest


def tv_dicts(p: dict[str, float], q: dict[str, float]) -> float:
    """Total variation distance between two sparse distributions."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def counts_to_probs(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
