# tests/conftest.py
import numpy as np
import pytest

from audio.spectro import SAMPLE_RATE
from sde.schedule import (
    CosineSchedule,
    NoiseSchedule,
    OUVE2Schedule,
    OUVESchedule,
    OUVPSchedule,
    VESchedule,
    VPSchedule,
)


def default_schedules() -> dict:
    return {
        "ouve": OUVESchedule(sigma_min=0.05, sigma_max=0.5, gamma=1.5),
        "ouve2": OUVE2Schedule(sigma_min=0.04, sigma_max=1.7, gamma=1.5),
        "ve": VESchedule(sigma_min=0.04, sigma_max=1.7),
        "ouvp": OUVPSchedule(beta_min=0.01, beta_max=1.0, gamma=1.5),
        "vp": VPSchedule(beta_min=0.01, beta_max=1.0),
        "cosine": CosineSchedule(nu=1.5, lambda_min=-12.0, beta_max_clamp=10.0),
    }


ALL_FAMILIES = sorted(default_schedules())


@pytest.fixture(params=ALL_FAMILIES)
def any_schedule(request) -> NoiseSchedule:
    return default_schedules()[request.param]


@pytest.fixture
def ouve() -> OUVESchedule:
    return default_schedules()["ouve"]


@pytest.fixture
def ve() -> VESchedule:
    return default_schedules()["ve"]


@pytest.fixture
def cosine() -> CosineSchedule:
    return default_schedules()["cosine"]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def multitone(rng: np.random.Generator, n_samples: int = SAMPLE_RATE, n_tones: int = 20, n_fft: int = 512) -> np.ndarray:
    """
    Сумма синусоид на частотах бинов k·fs/n_fft (k = 1..200).

    Такие кадры не содержат Nyquist-компоненты и не дают утечки
    для периодического окна Ханна, поэтому STFT -> ISTFT точен.
    """
    n = np.arange(n_samples)
    bins = rng.choice(np.arange(1, 201), size=n_tones, replace=False)
    amps = rng.uniform(0.01, 0.04, size=n_tones)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_tones)
    return np.sum(amps[:, None] * np.cos(2.0 * np.pi * bins[:, None] * n[None, :] / n_fft + phases[:, None]), axis=0)


@pytest.fixture
def tone_signal(rng) -> np.ndarray:
    return multitone(rng)
