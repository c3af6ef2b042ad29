import numpy as np
import pytest

from ppgmm.errors import HonestSubgraphDisconnected, InsufficientSamples
from ppgmm.graph import fig1_graph
from ppgmm.privacy import (
    correlated_gaussian,
    gaussian_mi,
    ksg_mi,
    monte_carlo_leakage,
    normalized_mi,
)


def _ksg_brute_force(x, y, k):
    """Loop version of the first KSG estimator (no jitter, no trees)."""
    from scipy.special import digamma
    n = len(x)
    dx = np.abs(x[:, None] - x[None, :])
    dy = np.abs(y[:, None] - y[None, :])
    dz = np.maximum(dx, dy)
    acc = 0.0
    for i in range(n):
        eps = np.sort(np.delete(dz[i], i))[k - 1]
        nx = np.sum(np.delete(dx[i], i) < eps)
        ny = np.sum(np.delete(dy[i], i) < eps)
        acc += digamma(nx + 1) + digamma(ny + 1)
    return digamma(k) + digamma(n) - acc / n


def test_ksg_matches_brute_force():
    x, y = correlated_gaussian(0.5, 300, seed=1)
    got = ksg_mi(x, y, k=3, jitter=False).value
    assert got == pytest.approx(_ksg_brute_force(x, y, 3), abs=1e-12)


def test_independent_is_near_zero():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(10_000), rng.standard_normal(10_000)
    assert abs(ksg_mi(x, y).value) < 0.02
    assert normalized_mi(x, y).value < 0.03


def test_correlated_gaussian_close_to_closed_form():
    x, y = correlated_gaussian(0.9, 10_000, seed=2)
    assert ksg_mi(x, y).value == pytest.approx(gaussian_mi(0.9), rel=0.1)
    assert gaussian_mi(0.9) == pytest.approx(0.8304, abs=1e-4)


def test_self_information_grows_with_n():
    rng = np.random.default_rng(3)
    small, large = rng.standard_normal(1000), rng.standard_normal(10_000)
    assert ksg_mi(large, large).value > ksg_mi(small, small).value > 3


def test_nmi_of_identity_is_exactly_one():
    x = np.random.default_rng(4).standard_normal(2000)
    est = normalized_mi(x, x)
    assert est.value == 1.0 and est.raw == 1.0


def test_nmi_monotone_in_snr():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(5000)
    noise = rng.standard_normal(5000)
    vals = [normalized_mi(x, x + noise / np.sqrt(snr)).value for snr in (1, 10, 100)]
    assert 0 < vals[0] < vals[1] < vals[2] < 1


def test_sample_guard():
    with pytest.raises(InsufficientSamples):
        ksg_mi(np.arange(49.0), np.arange(49.0))
    with pytest.raises(ValueError):
        ksg_mi(np.arange(60.0), np.arange(61.0))
    with pytest.raises(ValueError):
        ksg_mi(np.r_[np.arange(59.0), np.nan], np.arange(60.0))


def test_multivariate_inputs():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3000, 2))
    y = x @ [[1.0], [1.0]] + 0.5 * rng.standard_normal((3000, 1))
    assert ksg_mi(x, y).value > 0.5
    assert ksg_mi(x, y).sample_count == 3000


def test_leakage_determinism():
    g = fig1_graph()
    a = monte_carlo_leakage("secure_sum", g, {2, 4}, 1, trials=600, em_iters=2, seed=9)
    b = monte_carlo_leakage("secure_sum", g, {2, 4}, 1, trials=600, em_iters=2, seed=9)
    assert np.array_equal(a.nmi, b.nmi) and np.array_equal(a.stderr, b.stderr)


def test_leakage_levels_small_run():
    g = fig1_graph()
    fed = monte_carlo_leakage("federated", g, {2, 4}, 1, trials=2000, em_iters=2, seed=0)
    sec = monte_carlo_leakage("secure_sum", g, {2, 4}, 1, trials=2000, em_iters=2, seed=0)
    sub = monte_carlo_leakage("subspace", g, {2, 4}, 1, trials=2000, em_iters=2, seed=0)
    assert np.all(fed.nmi >= 0.9)
    assert np.all(sub.nmi < sec.nmi) and np.all(sec.nmi < fed.nmi)
    node3 = monte_carlo_leakage("secure_sum", g, {2, 4}, 3, trials=2000, em_iters=2, seed=0)
    assert np.all(node3.nmi >= 0.9)


def test_fewer_corrupt_nodes_leak_less():
    g = fig1_graph()
    none = monte_carlo_leakage("subspace", g, set(), 1, trials=3000, em_iters=1, seed=1)
    some = monte_carlo_leakage("subspace", g, {2, 4}, 1, trials=3000, em_iters=1, seed=1)
    assert none.nmi[0] < some.nmi[0]


def test_feature_reduction_does_not_add_information():
    # dropping the scatter sums from the subspace features is a deterministic reduction
    g = fig1_graph()
    res, feats, x = monte_carlo_leakage("subspace", g, {2, 4}, 1, trials=4000, em_iters=1, seed=2,
                                        return_features=True)
    F = feats[0]
    full = normalized_mi(x[:, 0], F, seed=0)
    reduced = normalized_mi(x[:, 0], F[:, :-1], seed=0)
    assert reduced.value <= full.value + 3 * max(full.stderr, reduced.stderr)
    assert full.value == pytest.approx(res.nmi[0], abs=3 * res.stderr[0] + 0.02)


def test_raw_and_reconstructed_federated_features_agree_on_ordering():
    g = fig1_graph()
    raw = monte_carlo_leakage("federated", g, {2, 4}, 1, trials=2000, em_iters=1, seed=3, raw=True)
    assert raw.feature_dims[0] == 1  # c=1: a is fixed by normalisation, b = x
    assert raw.nmi[0] >= 0.9


def test_leakage_argument_checks():
    g = fig1_graph()
    with pytest.raises(ValueError):
        monte_carlo_leakage("subspace", g, {1}, 1, trials=100)
    with pytest.raises(InsufficientSamples):
        monte_carlo_leakage("subspace", g, {2, 4}, 1, trials=10)
    with pytest.raises(HonestSubgraphDisconnected):
        monte_carlo_leakage("subspace", g, {1, 3, 4}, 2, trials=100)
    with pytest.raises(ValueError):
        monte_carlo_leakage("carrier_pigeon", g, {2, 4}, 1, trials=100)


def test_eavesdropper_on_secure_sum_pins_target():
    g = fig1_graph()
    res = monte_carlo_leakage("secure_sum", g, set(), 1, trials=2000, em_iters=1, seed=4,
                              adversary="eavesdropper")
    assert res.nmi[0] >= 0.9
