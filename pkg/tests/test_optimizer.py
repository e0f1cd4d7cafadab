import math

import numpy as np
import pytest

from robust_sco.errors import InvalidArgumentError
from robust_sco.tools.contamination import AdversarySpec, corrupt
from robust_sco.tools.domain import FeasibleDomain
from robust_sco.tools.filtering import FilterConfig, estimate_sigma_lower_bound
from robust_sco.tools.optimizer import (
    MAX_T,
    NetConfig,
    PGDConfig,
    default_iterations,
    naive_mean_pgd,
    nearest_net_point,
    pgd_biased,
    project,
    robust_net_pgd,
    robust_pgd,
    statistical_bias_bound,
)
from robust_sco.tools.problems import (
    ProductInstanceParams,
    SampleFunction,
    gradient_matrix,
    make_abs_loss,
    make_product_instance,
    make_quadratic,
    sample_functions,
)
from robust_sco.tools.rng import make_rng


# ---------- projection ----------

def test_project_onto_ball_and_box():
    ball = FeasibleDomain.ball_of_radius(2, 1.0)
    assert np.allclose(project(ball, [3.0, 4.0]), [0.6, 0.8])
    assert np.allclose(project(ball, [0.1, -0.2]), [0.1, -0.2])
    box = FeasibleDomain.box([1.0, 0.5], center=[1.0, 0.0])
    assert np.allclose(project(box, [3.0, -2.0]), [2.0, -0.5])


@pytest.mark.parametrize("domain", [FeasibleDomain.ball(3, 2.0, center=[1.0, 0.0, -1.0]),
                                    FeasibleDomain.box([0.5, 1.0, 2.0])])
def test_projection_residual_makes_obtuse_angle(domain):
    rng = make_rng(17)
    for y in 5.0 * rng.standard_normal((50, 3)):
        p = project(domain, y)
        assert domain.contains(p)
        for w in domain.sample(rng, 10):
            assert (y - p) @ (w - p) <= 1e-9


# ---------- biased PGD core ----------

def test_single_exact_step_lands_on_minimiser():
    domain = FeasibleDomain.ball(2, 4.0)
    w_star = np.array([0.5, -0.3])
    result = pgd_biased(lambda w: w - w_star, domain, PGDConfig("constant_smooth", 1, beta=1.0))
    assert np.allclose(result.w_hat, w_star)
    assert result.T == 1


def test_infeasible_start_is_rejected():
    domain = FeasibleDomain.ball(2, 2.0)
    with pytest.raises(InvalidArgumentError):
        pgd_biased(lambda w: w, domain, PGDConfig(beta=1.0), w0=[5.0, 0.0])


def test_step_sizes():
    assert PGDConfig("constant_smooth", 10, beta=4.0).step_size(2.0) == pytest.approx(0.25)
    lip = PGDConfig("constant_lipschitz", 400, lipschitz=1.0, bias_bound=0.0)
    assert lip.step_size(2.0) == pytest.approx(0.1)
    with pytest.raises(InvalidArgumentError):
        PGDConfig("constant_smooth", 10).step_size(1.0)
    with pytest.raises(InvalidArgumentError):
        PGDConfig("adagrad")


def test_default_iterations():
    # 2 / (0.2 + sqrt(4 log 20 / 1e4)) = 8.52...
    assert default_iterations(2.0, 1.0, 1.0, 0.04, 4, 10_000, 0.05) == 9
    assert default_iterations(2.0, 1.0, 0.0, 0.0, 4, 10_000, 0.05) == 100
    with pytest.warns(RuntimeWarning):
        assert default_iterations(1e9, 1.0, 1.0, 0.01, 1, 10_000, 0.05) == MAX_T


@pytest.mark.parametrize("seed", range(100))
def test_bounded_bias_guarantee(seed):
    """f(w_hat) - f* <= beta D^2 / (2T) + B D for any oracle within B of the gradient."""
    beta, D, B, T, d = 1.0, 2.0, 0.1, 100, 3
    domain = FeasibleDomain.ball(d, D)
    rng = make_rng(seed)
    dist = make_quadratic(0.8 * domain.sample(rng, 1)[0], 0.0, domain)
    A, c = rng.standard_normal((d, d)), rng.standard_normal(d)

    def oracle(w):
        v = A @ w + c
        return dist.population_gradient(w) + B * v / max(1.0, float(np.linalg.norm(v)))

    result = pgd_biased(oracle, domain, PGDConfig("constant_smooth", T, beta=beta))
    assert domain.diameter() == D
    assert dist.excess_risk(result.w_hat) <= beta * D ** 2 / (2 * T) + B * D + 1e-9


# ---------- net ----------

def test_nearest_net_point():
    net = NetConfig(1.0, 4)
    assert net.spacing == 0.5
    assert np.allclose(nearest_net_point(net, [0.3, 0.74, -0.26, 1.0]), [0.5, 0.5, -0.5, 1.0])
    with pytest.raises(InvalidArgumentError):
        NetConfig(0.0, 4)
    with pytest.raises(InvalidArgumentError):
        nearest_net_point(net, [0.0, 0.0])


def test_net_covers_within_half_xi():
    xi, d = 0.3, 30
    net = NetConfig(xi, d)
    W = make_rng(23).uniform(-3.0, 3.0, size=(100_000, d))
    worst = max(np.linalg.norm(w - nearest_net_point(net, w)) for w in W)
    assert worst <= xi / 2 + 1e-12


# ---------- robust drivers ----------

@pytest.fixture
def point_mass():
    domain = FeasibleDomain.ball(3, 4.0)
    dist = make_quadratic([0.4, -0.2, 0.1], 0.0, domain)
    return dist, sample_functions(dist, 50, seed=1)


def test_robust_net_pgd_on_point_mass_hits_minimiser(point_mass):
    dist, samples = point_mass
    result = robust_net_pgd(samples, dist.domain, sigma=0.0, beta_bar=1.0, epsilon=0.1, T=20)
    assert np.allclose(result.w_hat, dist.params["w_star"])
    assert result.info["net"] is False


def test_robust_net_pgd_memoises_per_net_point():
    domain = FeasibleDomain.ball(2, 2.0)
    dist = make_quadratic([0.2, 0.1], 1.0, domain)
    samples = sample_functions(dist, 500, seed=3)
    result = robust_net_pgd(samples, domain, sigma=1.0, beta_bar=1.0, epsilon=0.1, T=60)
    assert result.info["net"] is True
    assert result.info["xi"] == pytest.approx(math.sqrt(0.1))
    assert 1 <= result.info["evaluations"] < 60


def test_robust_net_pgd_needs_positive_beta(point_mass):
    dist, samples = point_mass
    with pytest.raises(InvalidArgumentError):
        robust_net_pgd(samples, dist.domain, sigma=1.0, beta_bar=0.0, epsilon=0.1)


def test_robust_pgd_matches_exact_oracle_on_identical_samples(point_mass):
    dist, samples = point_mass
    T = 15
    robust = robust_pgd(samples, dist.domain, sigma=0.0, epsilon=0.1, beta_bar=1.0, T=T,
                        w0=[1.0, 1.0, 0.0])
    exact = pgd_biased(lambda w: gradient_matrix(samples[:1], w)[0], dist.domain,
                       PGDConfig("constant_smooth", T, beta=1.0), w0=[1.0, 1.0, 0.0])
    assert np.allclose(robust.iterates, exact.iterates, rtol=0.0, atol=1e-12)


def test_robust_pgd_lipschitz_schedule():
    domain = FeasibleDomain.ball(2, 2.0)
    dist = make_abs_loss([0.3, 0.0], 1.0, 0.5, domain)
    eps, n = 0.05, 2000
    clean = sample_functions(dist, n, seed=5)
    samples = corrupt(clean, AdversarySpec("mean_shift", magnitude=50.0), eps, seed=6, domain=domain)
    result = robust_pgd(samples, domain, sigma=dist.sigma, epsilon=eps, lipschitz=dist.lipschitz)
    B = result.info["bias_bound"]
    assert result.info["schedule"] == "constant_lipschitz"
    assert B == pytest.approx(statistical_bias_bound(dist.sigma, eps, 2, n, 0.05))
    assert result.T == max(1, math.ceil((dist.lipschitz / B) ** 2))
    D = domain.diameter()
    assert dist.excess_risk(result.w_hat) <= 2.0 * (D * (dist.lipschitz + B) / math.sqrt(result.T) + B * D)


def test_robust_pgd_needs_a_schedule(point_mass):
    dist, samples = point_mass
    with pytest.raises(InvalidArgumentError):
        robust_pgd(samples, dist.domain, sigma=1.0, epsilon=0.1)


def test_runs_are_deterministic():
    domain = FeasibleDomain.ball(3, 2.0)
    dist = make_quadratic([0.1, 0.2, 0.3], 1.0, domain)
    samples = corrupt(sample_functions(dist, 300, seed=7), AdversarySpec("worst_direction"), 0.1,
                      seed=8, domain=domain)
    a = robust_net_pgd(samples, domain, sigma=1.0, beta_bar=1.0, epsilon=0.1, T=30)
    b = robust_net_pgd(samples, domain, sigma=1.0, beta_bar=1.0, epsilon=0.1, T=30)
    assert np.array_equal(a.iterates, b.iterates)


def test_filtering_beats_sample_mean_under_large_shift():
    domain = FeasibleDomain.ball(5, 4.0)
    dist = make_quadratic(np.zeros(5), 0.5, domain)
    eps = 0.1
    samples = corrupt(sample_functions(dist, 2000, seed=9), AdversarySpec("mean_shift", magnitude=1e4),
                      eps, seed=10, domain=domain)
    robust = robust_pgd(samples, domain, sigma=0.5, epsilon=eps, beta_bar=1.0, T=50)
    naive = naive_mean_pgd(samples, domain, sigma=0.5, epsilon=eps, beta_bar=1.0, T=50)
    assert dist.excess_risk(naive.w_hat) >= 10.0 * dist.excess_risk(robust.w_hat)


def test_trace_frame_records_every_iteration(point_mass):
    dist, samples = point_mass
    result = robust_pgd(samples, dist.domain, sigma=0.0, epsilon=0.0, beta_bar=1.0, T=12,
                        risk_fn=dist.population_risk, w_star=dist.params["w_star"])
    frame = result.trace_frame()
    assert list(frame.columns) == ["t", "grad_norm", "risk", "dist_to_opt"]
    assert frame["t"].tolist() == list(range(1, 13))
    assert frame["dist_to_opt"].iloc[-1] == pytest.approx(0.0, abs=1e-12)


# ---------- unknown sigma ----------

def test_unknown_sigma_uses_filtered_lower_bound():
    domain = FeasibleDomain.ball(3, 2.0)
    dist = make_quadratic([0.2, -0.1, 0.0], 1.0, domain)
    eps = 0.05
    samples = corrupt(sample_functions(dist, 2000, seed=31), AdversarySpec("mean_shift", magnitude=100.0),
                      eps, seed=32, domain=domain)
    result = robust_net_pgd(samples, domain, sigma=None, beta_bar=1.0, epsilon=eps, T=20)
    expected = estimate_sigma_lower_bound(gradient_matrix(samples.stripped(), domain.center), eps, 0.05,
                                          FilterConfig())
    assert result.info["sigma"] == pytest.approx(expected)
    assert 0.0 < result.info["sigma"] <= 1.0
    assert dist.excess_risk(result.w_hat) <= 0.5


def test_unknown_sigma_iteration_count_respects_t_max(point_mass):
    dist, samples = point_mass
    result = robust_net_pgd(samples, dist.domain, sigma=None, beta_bar=1.0, epsilon=0.1, t_max=7)
    assert result.info["sigma"] == 0.0
    assert result.T == 7
    assert default_iterations(1.0, 1.0, 0.0, 0.1, 3, 50, 0.05, t_max=7) == 7


def test_robust_pgd_accepts_unknown_sigma(point_mass):
    dist, samples = point_mass
    result = robust_pgd(samples, dist.domain, sigma=None, epsilon=0.1, beta_bar=1.0, T=20)
    assert result.info["sigma"] == 0.0
    assert np.allclose(result.w_hat, dist.params["w_star"])


def test_balanced_coin_gradients_do_not_break_the_filter():
    dist = make_product_instance(ProductInstanceParams((1,), 0.0, 1.0), 2.0)
    x = np.concatenate([-np.ones(32), np.ones(32)]).reshape(-1, 1)
    samples = tuple(SampleFunction(dist.family, row, dist.kernel) for row in x)
    result = robust_net_pgd(samples, dist.domain, sigma=1.0, beta_bar=dist.smoothness_for_schedule(),
                            epsilon=0.05, T=5)
    assert np.array_equal(result.w_hat, [0.0])
    assert dist.excess_risk(result.w_hat) == 0.0
    assert result.info["filter_report"].exit_reason == "degenerate"
    assert result.info["filter_mass"] == pytest.approx(1.0)
