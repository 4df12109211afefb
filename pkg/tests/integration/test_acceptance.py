# tests/integration/test_acceptance.py
"""Сквозные свойства: численные тождества и поведение сэмплеров на модельных данных."""
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from audio.spectro import N_FFT, Waveform, compress, decompress, istft, nyquist_residual, padded_for_stft, stft
from cli.commands.loss_check import loss_identity_error, score_identity_error
from cli.commands.sample_toy import PriorKind, draw_samples
from denoising.oracle import GaussianMixture, IsotropicGaussian, PointMass, oracle_denoiser, oracle_score_fn
from denoising.precond import denoiser_to_score
from sampling.sampler import (
    SamplerConfig,
    StochasticityParams,
    euler_maruyama_step,
    pc_step,
    run_sampler,
    total_churn,
)
from sde.kernel import sigma_hat_by_quadrature
from sde.schedule import consistency_check
from tests.conftest import ALL_FAMILIES, default_schedules, multitone


def test_total_churn_at_64_steps():
    assert total_churn(StochasticityParams(s_churn=math.inf), 64) == pytest.approx(26.51, abs=0.05)


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_closed_form_sigma_hat_matches_quadrature(family):
    schedule = default_schedules()[family]
    times = np.round(np.arange(1, 11) / 10.0, 1)
    np.testing.assert_allclose(sigma_hat_by_quadrature(schedule, times, 512), schedule.sigma_hat(times), rtol=1e-6)


def test_score_matching_and_denoising_losses_agree(ouve):
    assert loss_identity_error(ouve, 1000, np.random.default_rng(0)) < 1e-10


def test_denoiser_score_identity_for_gaussian_data(ouve):
    assert score_identity_error(ouve, 100, np.random.default_rng(1)) < 1e-10


def test_denoiser_score_identity_with_shift(ouve, rng):
    data = IsotropicGaussian(mu0=[1.0, -0.5, 0.2], sigma0=0.6)
    for _ in range(100):
        y = rng.standard_normal(3) + 2.0
        t = float(rng.uniform(0.01, 1.0))
        x_t = rng.standard_normal(3)
        denoiser = oracle_denoiser(data.shifted(y)).at_time(ouve)
        np.testing.assert_allclose(denoiser_to_score(denoiser, ouve, x_t, y, t),
                                   oracle_score_fn(data, ouve, y)(x_t, t), rtol=1e-10, atol=1e-12)


def test_cosine_drift_diffusion_against_finite_differences(cosine):
    times = np.linspace(0.05, 0.9, 18)
    report = consistency_check(cosine, times, h=1e-5)
    assert report.max_f_deviation < 1e-5 and report.max_g_sq_deviation < 1e-5
    s = np.asarray(cosine.scaling(times))
    sigma = np.asarray(cosine.sigma(times))
    np.testing.assert_allclose(s ** 2 + sigma ** 2, 1.0, atol=1e-12)


@pytest.mark.parametrize("family", ["ve", "ouve"])
def test_drift_does_not_change_recovered_distribution(family):
    schedule = default_schedules()[family]
    config = SamplerConfig(n_steps=64, stochasticity=StochasticityParams(s_churn=0.0))
    samples = draw_samples(config, IsotropicGaussian(mu0=[0.0], sigma0=1.0), schedule, 10_000, seed=0,
                           prior=PriorKind.EXACT)
    assert abs(samples.mean()) <= 0.03
    assert abs(samples.var() - 1.0) <= 0.05


def test_point_mass_single_heun_step_is_exact(ouve):
    trajectory = run_sampler(SamplerConfig(n_steps=1), [0.0], oracle_denoiser(PointMass(mu0=[0.7])), ouve,
                             rng=0, n_samples=1000)
    assert np.all(trajectory.final == 0.7)


def test_pc_with_zero_r_is_bit_identical_to_em(ouve, rng):
    data = GaussianMixture(weights=[0.4, 0.6], means=[[-1.0, 0.0], [1.0, 0.5]], sigma0=0.3)
    y = np.array([0.2, -0.1])
    score = oracle_score_fn(data, ouve, y)
    params = StochasticityParams(r=0.0, n_corrector=3)
    for i in range(100):
        x = rng.standard_normal(2)
        t_from = float(rng.uniform(0.2, 1.0))
        t_to = t_from - 0.05
        em = euler_maruyama_step(x, t_from, t_to, score, ouve, y, rng=i)
        pc = pc_step(x, t_from, t_to, score, ouve, y, params, rng=i)
        np.testing.assert_array_equal(pc, em)


@pytest.mark.parametrize("seed", range(10))
def test_stft_round_trip_one_second(seed):
    x = multitone(np.random.default_rng(100 + seed))
    padded, offset = padded_for_stft(x)
    spec = stft(Waveform(samples=padded))
    y = istft(spec, length=padded.shape[0]).samples[offset:offset + x.shape[0]]
    interior = slice(N_FFT, -N_FFT)
    assert np.sqrt(np.mean((y[interior] - x[interior]) ** 2)) < 1e-6
    np.testing.assert_allclose(decompress(compress(spec)).coefficients, spec.coefficients, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_stft_round_trip_on_random_signals(seed):
    x = np.random.default_rng(200 + seed).uniform(-0.5, 0.5, size=16000)
    padded, offset = padded_for_stft(x)
    wave = Waveform(samples=padded)
    spec = stft(wave)
    segment = slice(offset, offset + x.shape[0])
    y = istft(spec, length=padded.shape[0]).samples[segment]
    # ISTFT теряет ровно Nyquist-часть сигнала
    restored = y + nyquist_residual(wave).samples[segment]
    assert np.sqrt(np.mean((restored - x) ** 2)) < 1e-6
    assert np.sqrt(np.mean((y - x) ** 2)) > 1e-3


def test_mixture_oracle_against_quadrature(rng):
    data = GaussianMixture(weights=[0.35, 0.65], means=[[-1.5], [1.0]], sigma0=0.4)
    sigma_hat = 0.5
    grid = np.linspace(-10.0, 10.0, 200_001)
    prior = np.exp(data.log_density(grid[:, None], 0.0))
    for x_hat in rng.uniform(-3.0, 3.0, size=20):
        weights = prior * np.exp(-0.5 * (x_hat - grid) ** 2 / sigma_hat ** 2)
        expected = trapezoid(grid * weights, grid) / trapezoid(weights, grid)
        assert data.optimal_denoiser([x_hat], sigma_hat)[0] == pytest.approx(expected, abs=1e-6)
