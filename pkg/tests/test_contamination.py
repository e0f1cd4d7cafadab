import math

import numpy as np
import pytest
from scipy import stats

from robust_sco.errors import InvalidArgumentError
from robust_sco.tools.contamination import AdversarySpec, adversary_from_config, corrupt, corruption_budget
from robust_sco.tools.domain import FeasibleDomain
from robust_sco.tools.problems import (
    LinearKernel,
    SampleFunction,
    gradient_matrix,
    make_linear_loss,
    make_quadratic,
    make_spike_instance_1d,
    sample_functions,
)
from robust_sco.tools.rng import make_rng


@pytest.fixture
def gaussian_samples():
    dist = make_linear_loss([0.5, 0.0, -0.5], 1.0, FeasibleDomain.ball(3, 2.0))
    return dist, sample_functions(dist, 100, seed=21)


def test_zero_epsilon_returns_input_unchanged(gaussian_samples):
    _, clean = gaussian_samples
    out = corrupt(clean, AdversarySpec("mean_shift", magnitude=10.0), 0.0, seed=1)
    assert all(a is b for a, b in zip(out.functions, clean))
    assert out.n_corrupted == 0


def test_mean_shift_replaces_exactly_the_budget(gaussian_samples):
    dist, clean = gaussian_samples
    out = corrupt(clean, AdversarySpec("mean_shift", magnitude=10.0), 0.1, seed=1, domain=dist.domain)
    assert out.n_corrupted == 10
    for f, g, bad in zip(clean, out.functions, out.corruption_mask):
        assert (g is not f) == bad
    w = dist.domain.center
    mu_hat = gradient_matrix(clean, w).mean(axis=0)
    replaced = [g for g, bad in zip(out.functions, out.corruption_mask) if bad]
    for g in replaced:
        assert np.allclose(g.gradient(w), mu_hat + [10.0, 0.0, 0.0])
        assert np.allclose(g.gradient(w + 0.3), g.gradient(w))


def test_none_adversary_never_replaces(gaussian_samples):
    _, clean = gaussian_samples
    out = corrupt(clean, AdversarySpec("none"), 0.4, seed=3)
    assert out.n_corrupted == 0
    assert out.stripped() == tuple(clean)


def test_epsilon_at_breakdown_is_rejected(gaussian_samples):
    _, clean = gaussian_samples
    with pytest.raises(InvalidArgumentError):
        corrupt(clean, AdversarySpec("none"), 0.5, seed=1)
    with pytest.raises(InvalidArgumentError):
        corrupt(clean, AdversarySpec("none"), -0.1, seed=1)


def test_adversary_spec_validation():
    with pytest.raises(InvalidArgumentError):
        AdversarySpec("mean_shift")
    with pytest.raises(InvalidArgumentError):
        AdversarySpec("tv_swap", target="D3")
    with pytest.raises(InvalidArgumentError):
        AdversarySpec("huber_mixture")
    with pytest.raises(InvalidArgumentError):
        AdversarySpec("teleport")


@pytest.mark.parametrize("epsilon", [0.01, 0.1, 0.25, 0.49])
def test_budget_holds_for_every_adversary(epsilon):
    domain = FeasibleDomain.ball(2, 2.0)
    quad = make_quadratic([0.1, 0.1], 1.0, domain)
    clean = sample_functions(quad, 200, seed=4)
    budget = corruption_budget(200, epsilon)
    for spec in (AdversarySpec("mean_shift", magnitude=5.0), AdversarySpec("worst_direction"),
                 AdversarySpec("huber_mixture", target_distribution=make_quadratic([0.9, -0.9], 3.0, domain))):
        out = corrupt(clean, spec, epsilon, seed=8, domain=domain)
        assert out.n_corrupted <= budget
        hamming = sum(a is not b for a, b in zip(out.functions, clean))
        assert hamming == out.n_corrupted
    spikes = sample_functions(make_spike_instance_1d(1.0, 0.3, 1.0, "D1"), 200, seed=5)
    out = corrupt(spikes, AdversarySpec("tv_swap"), epsilon, seed=8)
    assert out.n_corrupted <= budget


def test_corruption_is_deterministic_in_seed(gaussian_samples):
    dist, clean = gaussian_samples
    spec = AdversarySpec("mean_shift", magnitude=3.0)
    a = corrupt(clean, spec, 0.2, seed=99, domain=dist.domain)
    b = corrupt(clean, spec, 0.2, seed=99, domain=dist.domain)
    c = corrupt(clean, spec, 0.2, seed=100, domain=dist.domain)
    assert np.array_equal(a.corruption_mask, b.corruption_mask)
    assert not np.array_equal(a.corruption_mask, c.corruption_mask)


def _spike_counts(functions, height):
    x = np.array([f.params[0] for f in functions])
    return np.array([np.sum(x == -height), np.sum(x == 0), np.sum(x == height)])


def test_tv_swap_turns_d1_into_d1prime():
    eps, n = 0.04, 100_000
    d1 = make_spike_instance_1d(1.0, eps, 1.0, "D1")
    d1p = make_spike_instance_1d(1.0, eps, 1.0, "D1prime")
    out = corrupt(sample_functions(d1, n, seed=31), AdversarySpec("tv_swap", target="D1prime"), eps, seed=32)
    height = 1.0 / math.sqrt(eps)
    counts = _spike_counts(out.functions, height)
    assert counts[0] == 0
    exact = np.array([0.0, 1.0 - eps, eps])
    assert 0.5 * np.abs(counts / n - exact).sum() <= 0.01
    # indistinguishable from a clean D1' sample
    reference = _spike_counts(sample_functions(d1p, n, seed=33), height)
    _, p_value, _, _ = stats.chi2_contingency(np.stack([counts[1:], reference[1:]]))
    assert p_value > 0.01


def test_tv_swap_toward_d1_flips_half_of_the_spikes():
    eps = 0.04
    d1p = make_spike_instance_1d(1.0, eps, 1.0, "D1prime")
    clean = sample_functions(d1p, 10_000, seed=41)
    out = corrupt(clean, AdversarySpec("tv_swap", target="D1"), eps, seed=42)
    before = _spike_counts(clean, 5.0)
    after = _spike_counts(out.functions, 5.0)
    assert after[0] == before[2] // 2
    assert after[0] + after[2] == before[2]
    assert out.n_corrupted == after[0]


def test_tv_swap_needs_spike_samples(gaussian_samples):
    _, clean = gaussian_samples
    with pytest.raises(InvalidArgumentError):
        corrupt(clean, AdversarySpec("tv_swap"), 0.1, seed=1)


def test_worst_direction_shifts_along_top_eigenvector():
    rng = make_rng(6)
    scales = np.array([3.0, 1.0, 1.0])
    kernel = LinearKernel()
    clean = [SampleFunction("linear_loss", x, kernel) for x in rng.standard_normal((2000, 3)) * scales]
    eps = 0.1
    out = corrupt(clean, AdversarySpec("worst_direction"), eps, seed=7, domain=FeasibleDomain.ball(3, 2.0))
    w = np.zeros(3)
    G = gradient_matrix(clean, w)
    mu_hat = G.mean(axis=0)
    lam = np.linalg.eigvalsh(np.cov(G, rowvar=False, bias=True))[-1]
    shift = next(g for g, bad in zip(out.functions, out.corruption_mask) if bad).gradient(w) - mu_hat
    assert np.linalg.norm(shift) == pytest.approx(math.sqrt(lam / eps))
    assert abs(shift[0]) / np.linalg.norm(shift) > 0.99
    assert out.n_corrupted == 200


def test_huber_mixture_draws_from_target():
    domain = FeasibleDomain.ball(2, 2.0)
    clean = sample_functions(make_quadratic([0.0, 0.0], 0.1, domain), 1000, seed=51)
    target = make_linear_loss([5.0, 5.0], 0.0, domain)
    out = corrupt(clean, AdversarySpec("huber_mixture", target_distribution=target), 0.2, seed=52)
    replaced = [g for g, bad in zip(out.functions, out.corruption_mask) if bad]
    assert 0 < len(replaced) <= 200
    assert all(g.family == "linear_loss" for g in replaced)
    assert all(np.allclose(g.gradient([0.0, 0.0]), [-5.0, -5.0]) for g in replaced)


def test_adversary_from_config():
    spec = adversary_from_config({"kind": "mean_shift", "magnitude": 100, "direction": [0, 1]})
    assert spec.kind == "mean_shift"
    assert spec.magnitude == 100.0
    assert spec.direction == (0.0, 1.0)
