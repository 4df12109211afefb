# tests/unit/test_sampler.py
import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from denoising.oracle import IsotropicGaussian, PointMass, oracle_denoiser, oracle_score_fn
from denoising.precond import NoiseLevelDenoiser
from sampling.sampler import (
    MAX_CHURN_PER_STEP,
    SamplerConfig,
    SamplerMethod,
    StochasticityParams,
    churn_per_step,
    euler_maruyama_step,
    heun_edm_step,
    init_prior,
    langevin_correct,
    run_sampler,
    total_churn,
    wasserstein_to_gaussian,
)


def zero_score(x, t):
    return np.zeros_like(x)


# --- Стохастичность ---

def test_total_churn_saturates():
    params = StochasticityParams(s_churn=math.inf)
    assert total_churn(params, 64) == pytest.approx(26.51, abs=0.05)
    assert churn_per_step(params, 64) == MAX_CHURN_PER_STEP


def test_churn_below_cap():
    assert churn_per_step(StochasticityParams(s_churn=6.4), 64) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        churn_per_step(StochasticityParams(), 0)


def test_config_validation():
    with pytest.raises(ValidationError):
        SamplerConfig(t_start=0.5, t_end=0.5)
    with pytest.raises(ValidationError):
        SamplerConfig(n_steps=0)
    with pytest.raises(ValidationError):
        StochasticityParams(r=-0.1)


def test_time_grid():
    grid = SamplerConfig(n_steps=4, t_start=1.0, t_end=0.2).time_grid()
    np.testing.assert_allclose(grid, [1.0, 0.8, 0.6, 0.4, 0.2])


# --- Отдельные шаги ---

def test_init_prior_shape_and_spread(ouve):
    draws = init_prior([0.5, -0.5], ouve, 0, n=20_000)
    assert draws.shape == (20_000, 2)
    assert (draws - [0.5, -0.5]).std() == pytest.approx(ouve.sigma(1.0), rel=0.03)
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, -0.5], atol=0.02)


def test_euler_step_direction_checked(ouve):
    with pytest.raises(ValueError):
        euler_maruyama_step(np.zeros(1), 0.3, 0.5, zero_score, ouve, [0.0])


def test_probability_flow_is_deterministic(ouve):
    score = oracle_score_fn(IsotropicGaussian(mu0=[0.0], sigma0=1.0), ouve, [0.0])
    a = euler_maruyama_step(np.array([0.4]), 0.6, 0.5, score, ouve, [0.0], rng=1, probability_flow=True)
    b = euler_maruyama_step(np.array([0.4]), 0.6, 0.5, score, ouve, [0.0], rng=2, probability_flow=True)
    np.testing.assert_array_equal(a, b)


def test_langevin_guard_on_zero_score():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = langevin_correct(x, 0.5, zero_score, r=0.5, rng=0)
    np.testing.assert_array_equal(out, x)


def test_langevin_moves_towards_mode():
    score = lambda x, t: -x
    x = np.full((2000, 1), 3.0)
    out = langevin_correct(x, 0.5, score, r=0.1, n_corrector=5, rng=0)
    assert np.all(np.isfinite(out))
    assert out.mean() < 3.0


def test_heun_step_checks_sigma_order():
    denoiser = oracle_denoiser(PointMass(mu0=[0.0]))
    with pytest.raises(ValueError):
        heun_edm_step(np.zeros(1), 0.2, 0.3, denoiser, StochasticityParams(), 10)


def test_heun_churn_gated_by_noise_window():
    denoiser = oracle_denoiser(IsotropicGaussian(mu0=[0.0], sigma0=1.0))
    params = StochasticityParams(s_churn=10.0, s_min=5.0, s_max=10.0)
    a = heun_edm_step(np.array([1.0]), 1.0, 0.5, denoiser, params, 10, rng=1)
    b = heun_edm_step(np.array([1.0]), 1.0, 0.5, denoiser, params, 10, rng=2)
    np.testing.assert_array_equal(a, b)


def test_heun_churn_capped_at_denoiser_limit():
    base = oracle_denoiser(IsotropicGaussian(mu0=[0.0], sigma0=1.0))
    bounded = NoiseLevelDenoiser(base, name="bounded", sigma_hat_max=1.0)
    x = np.array([[0.8], [-1.3]])
    churned = heun_edm_step(x, 1.0, 0.5, bounded, StochasticityParams(s_churn=math.inf), 10, rng=1)
    plain = heun_edm_step(x, 1.0, 0.5, bounded, StochasticityParams(), 10, rng=1)
    np.testing.assert_array_equal(churned, plain)


def test_time_conditioned_heun_warns_when_churn_capped(ouve, caplog):
    denoiser = oracle_denoiser(IsotropicGaussian(mu0=[0.0], sigma0=1.0)).at_time(ouve)
    config = SamplerConfig(n_steps=8, stochasticity=StochasticityParams(s_churn=math.inf))
    with caplog.at_level(logging.WARNING, logger="sampling.sampler"):
        trajectory = run_sampler(config, [0.0], denoiser, ouve, rng=0, n_samples=50)
    assert np.all(np.isfinite(trajectory.final))
    assert any("capped" in record.getMessage() for record in caplog.records)


# --- Полный прогон ---

def test_pc_with_zero_r_equals_euler_maruyama(ouve):
    data = IsotropicGaussian(mu0=[0.2, -0.3], sigma0=0.7)
    y = np.array([0.1, 0.1])
    score = oracle_score_fn(data, ouve, y)
    em = run_sampler(SamplerConfig(method=SamplerMethod.EULER_MARUYAMA, n_steps=30), y, score, ouve, rng=5, n_samples=8)
    pc = run_sampler(SamplerConfig(method=SamplerMethod.PREDICTOR_CORRECTOR, n_steps=30,
                                   stochasticity=StochasticityParams(r=0.0)), y, score, ouve, rng=5, n_samples=8)
    np.testing.assert_array_equal(pc.final, em.final)


def test_point_mass_heun_single_step_is_exact(ouve):
    mu = np.array([0.7])
    trajectory = run_sampler(SamplerConfig(n_steps=1), [0.0], oracle_denoiser(PointMass(mu0=[0.7])), ouve,
                             rng=0, n_samples=100)
    np.testing.assert_allclose(trajectory.final, np.broadcast_to(mu, (100, 1)), atol=1e-12)


def test_heun_is_reproducible(ouve):
    config = SamplerConfig(n_steps=16, stochasticity=StochasticityParams(s_churn=math.inf))
    denoiser = oracle_denoiser(IsotropicGaussian(mu0=[0.0], sigma0=1.0))
    a = run_sampler(config, [0.0], denoiser, ouve, rng=3, n_samples=10)
    b = run_sampler(config, [0.0], denoiser, ouve, rng=3, n_samples=10)
    np.testing.assert_array_equal(a.final, b.final)


def test_heun_needs_denoiser(ouve):
    with pytest.raises(ValueError):
        run_sampler(SamplerConfig(), [0.0], zero_score, ouve, rng=0)


def test_trajectory_records_every_step(ouve):
    config = SamplerConfig(method=SamplerMethod.EULER_MARUYAMA, n_steps=10)
    trajectory = run_sampler(config, [0.0, 0.0], zero_score, ouve, rng=0)
    assert len(trajectory.times) == len(trajectory.states) == 11
    assert trajectory.times[0] == 1.0 and trajectory.times[-1] == pytest.approx(0.01)
    np.testing.assert_array_equal(trajectory.final, trajectory.states[-1])


def test_x_init_dimension_checked(ouve):
    with pytest.raises(ValueError):
        run_sampler(SamplerConfig(n_steps=2), [0.0], zero_score, ouve, rng=0, x_init=[0.0, 0.0])


def test_denoiser_driven_em_applies_final_denoise(ouve):
    config = SamplerConfig(method=SamplerMethod.EULER_MARUYAMA, n_steps=5)
    trajectory = run_sampler(config, [0.3], oracle_denoiser(PointMass(mu0=[1.0])), ouve, rng=0, n_samples=4)
    np.testing.assert_allclose(trajectory.final, 1.3)


# --- Сходимость на гауссовых данных ---

def quantile_prior(schedule, n=2000):
    """Детерминированный старт: квантили N(0, s²(1)(1 + σ̂²(1)))."""
    std = schedule.scaling(1.0) * math.sqrt(1.0 + schedule.sigma_hat(1.0) ** 2)
    return stats.norm.ppf((np.arange(n) + 0.5) / n).reshape(-1, 1) * std


@pytest.mark.parametrize(
    "family, method, probability_flow",
    [
        ("ve", SamplerMethod.HEUN_EDM, False),
        ("ouve", SamplerMethod.HEUN_EDM, False),
        ("ouve", SamplerMethod.EULER_MARUYAMA, True),
    ],
)
def test_wasserstein_error_shrinks_with_steps(family, method, probability_flow, request):
    schedule = request.getfixturevalue(family)
    denoiser = oracle_denoiser(IsotropicGaussian(mu0=[0.0], sigma0=1.0))
    x_init = quantile_prior(schedule)
    # финал - однократное D при t_end, поэтому эталон сжат до 1/√(1 + σ̂²(t_end))
    target_std = 1.0 / math.sqrt(1.0 + schedule.sigma_hat(0.01) ** 2)

    errors = []
    for n_steps in (4, 16, 64):
        config = SamplerConfig(method=method, n_steps=n_steps, probability_flow=probability_flow,
                               stochasticity=StochasticityParams(s_churn=0.0))
        trajectory = run_sampler(config, [0.0], denoiser, schedule, x_init=x_init)
        errors.append(wasserstein_to_gaussian(trajectory.final, 0.0, target_std))

    assert errors[0] > errors[1] > errors[2]
    if method is SamplerMethod.HEUN_EDM:
        assert errors[2] < 1e-3


def test_reverse_sde_collapses_on_point_mass(ve):
    score = oracle_score_fn(PointMass(mu0=[0.7]), ve, [0.0])
    config = SamplerConfig(method=SamplerMethod.EULER_MARUYAMA, n_steps=200)
    trajectory = run_sampler(config, [0.0], score, ve, rng=11, n_samples=2000)

    spread = [np.mean(np.abs(trajectory.states[i] - 0.7)) for i in (0, 100, 200)]
    assert spread[0] > spread[1] > spread[2]
    assert trajectory.final.mean() == pytest.approx(0.7, abs=0.005)
    assert trajectory.final.std() < 0.03


def test_probability_flow_step_matches_gaussian_flow(ouve):
    score = oracle_score_fn(IsotropicGaussian(mu0=[0.0], sigma0=1.0), ouve, [0.0])

    def marginal_std(t):
        return ouve.scaling(t) * math.sqrt(1.0 + ouve.sigma_hat(t) ** 2)

    x = np.array([1.0])
    t = 0.6
    errors = []
    for dt in (0.02, 0.01):
        step = euler_maruyama_step(x, t, t - dt, score, ouve, [0.0], probability_flow=True)
        exact = x * marginal_std(t - dt) / marginal_std(t)
        errors.append(float(np.abs(step - exact)[0]))
        assert errors[-1] < dt

    # локальная ошибка шага Эйлера O(Δt²)
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_langevin_corrector_approaches_marginal(ve):
    dim, t = 50, 0.5
    data = IsotropicGaussian(mu0=[0.5] * dim, sigma0=0.3)
    score = oracle_score_fn(data, ve, np.zeros(dim))
    target = (0.5, math.sqrt(0.3 ** 2 + ve.sigma_hat(t) ** 2))

    gen = np.random.default_rng(21)
    x = 1.5 + 0.1 * gen.standard_normal((2000, dim))
    ks = [stats.kstest(x.ravel(), "norm", args=target).statistic]
    x = langevin_correct(x, t, score, r=0.3, n_corrector=10, rng=gen)
    ks.append(stats.kstest(x.ravel(), "norm", args=target).statistic)
    x = langevin_correct(x, t, score, r=0.3, n_corrector=90, rng=gen)
    ks.append(stats.kstest(x.ravel(), "norm", args=target).statistic)

    assert ks[0] > ks[1] > ks[2]
    assert ks[2] < 0.03


# --- Расстояние Вассерштейна ---

def test_wasserstein_zero_for_matching_quantiles():
    n = 1000
    samples = stats.norm.ppf((np.arange(n) + 0.5) / n, loc=1.0, scale=2.0)
    assert wasserstein_to_gaussian(samples, 1.0, 2.0) == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_detects_shift():
    samples = np.random.default_rng(0).standard_normal(20_000) + 0.5
    assert wasserstein_to_gaussian(samples, 0.0, 1.0) == pytest.approx(0.5, abs=0.03)


def test_wasserstein_degenerate_reference():
    assert wasserstein_to_gaussian([1.0, 3.0], 2.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        wasserstein_to_gaussian([], 0.0, 1.0)
