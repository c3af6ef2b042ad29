import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_components(nodes, edges):
    """Connected components by repeated set merging (independent of BFS)."""
    comp = {v: {v} for v in nodes}
    for i, j in edges:
        if comp[i] is not comp[j]:
            merged = comp[i] | comp[j]
            for v in merged:
                comp[v] = merged
    return {frozenset(c) for c in comp.values()}
