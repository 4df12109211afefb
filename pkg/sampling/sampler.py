# sampling/sampler.py
"""
Сэмплеры обратного процесса: Эйлер-Маруяма, предиктор-корректор
(отжиговая динамика Ланжевена) и стохастический сэмплер Хойна 2-го порядка.

Состояния имеют форму (..., d): ведущие оси - пакет независимых сэмплов.
Score-функции имеют вид score_fn(x, t) -> ∇ log p_t(x|y) в пространстве x_t.
"""
import logging
import math
from enum import Enum
from typing import Callable, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from denoising.precond import Denoiser, NoiseLevelDenoiser, denoiser_to_score
from sde.schedule import NoiseSchedule
from utils.helpers import ArrayLike, as_state_vector, batch_norm, check_same_dimension, make_rng

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray, float], np.ndarray]
Model = Union[ScoreFn, Denoiser, NoiseLevelDenoiser]
RandomSource = Optional[Union[int, np.random.Generator]]

MAX_CHURN_PER_STEP = math.sqrt(2.0) - 1.0


class SamplerMethod(str, Enum):
    EULER_MARUYAMA = "em"
    PREDICTOR_CORRECTOR = "pc"
    HEUN_EDM = "heun"


class StochasticityParams(BaseModel):
    """Параметры стохастичности: r и n_corrector для PC; S_churn, S_noise, S_min, S_max для Хойна."""
    model_config = ConfigDict(frozen=True)

    r: float = Field(default=0.5, ge=0)
    n_corrector: int = Field(default=1, ge=0)
    s_churn: float = Field(default=0.0, ge=0)
    s_noise: float = 1.0
    s_min: float = Field(default=0.0, ge=0)
    s_max: float = math.inf


class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: SamplerMethod = SamplerMethod.HEUN_EDM
    n_steps: int = Field(default=64, ge=1)
    t_start: float = Field(default=1.0, gt=0, le=1)
    t_end: float = Field(default=0.01, ge=0, lt=1)
    stochasticity: StochasticityParams = Field(default_factory=StochasticityParams)
    probability_flow: bool = False

    @model_validator(mode="after")
    def check_interval(self) -> "SamplerConfig":
        if not self.t_end < self.t_start:
            raise ValueError(f"t_end must be < t_start, got {self.t_end} >= {self.t_start}")
        return self

    def time_grid(self) -> np.ndarray:
        """Равномерная сетка из n_steps интервалов от t_start до t_end."""
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)


class Trajectory(BaseModel):
    """Снимки (t, x) от априорного сэмпла при t_start и финальная оценка."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: List[float]
    states: List[np.ndarray]
    final: np.ndarray

    @model_validator(mode="after")
    def check_lengths(self) -> "Trajectory":
        if len(self.times) != len(self.states):
            raise ValueError(f"{len(self.times)} times for {len(self.states)} states")
        return self


# --- Стохастичность ---

def churn_per_step(params: StochasticityParams, n_steps: int) -> float:
    """γ_i = min(S_churn/n_steps, √2 - 1)."""
    if n_steps <= 0:
        raise ValueError(f"n_steps must be positive, got {n_steps}")
    return min(params.s_churn / n_steps, MAX_CHURN_PER_STEP)


def total_churn(params: StochasticityParams, n_steps: int) -> float:
    """Эффективная суммарная стохастичность n_steps·γ_i (≈ 26.5 при 64 шагах и S_churn = ∞)."""
    return n_steps * churn_per_step(params, n_steps)


# --- Шаги ---

def init_prior(y: ArrayLike, schedule: NoiseSchedule, rng: RandomSource = None, n: Optional[int] = None) -> np.ndarray:
    """y + σ(1)·z; при заданном n возвращает пакет формы (n, d)."""
    y = as_state_vector(y, "y")
    shape = y.shape if n is None else (n,) + y.shape
    return y + schedule.sigma(1.0) * make_rng(rng).standard_normal(shape)


def euler_maruyama_step(
    x: np.ndarray,
    t_from: float,
    t_to: float,
    score_fn: ScoreFn,
    schedule: NoiseSchedule,
    y: ArrayLike,
    rng: RandomSource = None,
    probability_flow: bool = False,
) -> np.ndarray:
    """
    Шаг обратной SDE: x + [f(x - y) - g²·score]·Δt + g·√|Δt|·z, Δt = t_to - t_from < 0.

    probability_flow=True дает детерминированный шаг ODE с дрейфом f(x - y) - ½g²·score.
    """
    if not t_from > t_to:
        raise ValueError(f"Reverse step needs t_from > t_to, got {t_from} <= {t_to}")
    y = as_state_vector(y, "y")
    dt = t_to - t_from
    f = schedule.drift(t_from)
    g = schedule.diffusion(t_from)
    score = score_fn(x, t_from)
    if probability_flow:
        return x + (f * (x - y) - 0.5 * g ** 2 * score) * dt
    z = make_rng(rng).standard_normal(x.shape)
    return x + (f * (x - y) - g ** 2 * score) * dt + g * math.sqrt(abs(dt)) * z


def langevin_correct(
    x: np.ndarray,
    t: float,
    score_fn: ScoreFn,
    r: float,
    n_corrector: int = 1,
    rng: RandomSource = None,
) -> np.ndarray:
    """
    Коррекция отжиговой динамикой Ланжевена:
    ε = 2·(r·‖z‖/‖score‖)², x <- x + ε·score + √(2ε)·z. При ‖score‖ = 0 шаг ε = 0.

    При r = 0 коррекция не выполняется и не расходует случайные числа,
    поэтому PC с r = 0 совпадает с Эйлером-Маруямой бит в бит.
    """
    if r == 0.0:
        return x
    gen = make_rng(rng)
    for _ in range(n_corrector):
        score = score_fn(x, t)
        z = gen.standard_normal(x.shape)
        score_norm = batch_norm(score)
        zero = score_norm == 0.0
        if np.any(zero):
            logger.debug(f"Langevin corrector at t={t:.4f}: zero score norm for {int(np.sum(zero))} state(s)")
        ratio = np.divide(r * batch_norm(z), score_norm, out=np.zeros_like(score_norm), where=~zero)
        eps = 2.0 * ratio ** 2
        x = x + eps * score + np.sqrt(2.0 * eps) * z
    return x


def pc_step(
    x: np.ndarray,
    t_from: float,
    t_to: float,
    score_fn: ScoreFn,
    schedule: NoiseSchedule,
    y: ArrayLike,
    params: StochasticityParams,
    rng: RandomSource = None,
) -> np.ndarray:
    """Предиктор (обратный шаг Эйлера-Маруямы), затем n_corrector коррекций Ланжевена при t_to."""
    gen = make_rng(rng)
    x = euler_maruyama_step(x, t_from, t_to, score_fn, schedule, y, gen)
    return langevin_correct(x, t_to, score_fn, params.r, params.n_corrector, gen)


def heun_edm_step(
    x_hat: np.ndarray,
    sigma_from: float,
    sigma_to: float,
    denoiser: NoiseLevelDenoiser,
    params: StochasticityParams,
    n_steps: int,
    rng: RandomSource = None,
) -> np.ndarray:
    """
    Шаг стохастического сэмплера Хойна в переменной x̃̂ = (x - y)/s.

    Фазы: добавление шума (churn) до σ̂⁺ = σ̂_from·(1 + γ), шаг Эйлера до σ̂_to,
    коррекция 2-го порядка (пропускается при σ̂_to = 0).

    Если у денойзера задан sigma_hat_max, σ̂⁺ не поднимается выше него.
    """
    if not sigma_from > sigma_to >= 0.0:
        raise ValueError(f"Heun step needs sigma_from > sigma_to >= 0, got {sigma_from}, {sigma_to}")
    gamma = churn_per_step(params, n_steps) if params.s_min <= sigma_from <= params.s_max else 0.0
    sigma_up = sigma_from * (1.0 + gamma)
    if denoiser.sigma_hat_max is not None and sigma_up > denoiser.sigma_hat_max:
        sigma_up = max(sigma_from, denoiser.sigma_hat_max)
    if gamma > 0.0:
        z = make_rng(rng).standard_normal(x_hat.shape)
        x_hat = x_hat + math.sqrt(sigma_up ** 2 - sigma_from ** 2) * params.s_noise * z

    d = (x_hat - denoiser(x_hat, sigma_up)) / sigma_up
    x_next = x_hat + (sigma_to - sigma_up) * d
    if sigma_to == 0.0:
        return x_next
    d_prime = (x_next - denoiser(x_next, sigma_to)) / sigma_to
    return x_hat + (sigma_to - sigma_up) * 0.5 * (d + d_prime)


# --- Полный прогон ---

def _warn_if_churn_capped(denoiser: NoiseLevelDenoiser, sigmas: np.ndarray, params: StochasticityParams,
                          n_steps: int) -> None:
    cap = denoiser.sigma_hat_max
    gamma = churn_per_step(params, n_steps)
    if cap is None or gamma == 0.0:
        return
    levels = sigmas[:-1]
    churned = (params.s_min <= levels) & (levels <= params.s_max)
    n_capped = int(np.sum(churned & (levels * (1.0 + gamma) > cap)))
    if n_capped:
        logger.warning(f"run_sampler: churned noise level capped at {cap:.6g} on {n_capped} step(s); "
                       f"{denoiser.name} is only defined up to t=1")


def _as_score_fn(model: Model, schedule: NoiseSchedule, y: np.ndarray) -> ScoreFn:
    if isinstance(model, NoiseLevelDenoiser):
        model = model.at_time(schedule)
    if isinstance(model, Denoiser):
        denoiser = model
        return lambda x, t: denoiser_to_score(denoiser, schedule, x, y, t)
    return model


def run_sampler(
    config: SamplerConfig,
    y: ArrayLike,
    model: Model,
    schedule: NoiseSchedule,
    rng: RandomSource = None,
    x_init: Optional[ArrayLike] = None,
    n_samples: Optional[int] = None,
) -> Trajectory:
    """
    Интегрирует обратный процесс по равномерной сетке от t_start до t_end.

    Args:
        config: Метод, число шагов и стохастичность.
        y: Обусловливающий вектор.
        model: score_fn(x, t) либо денойзер (D(x̃̂, t) или D(x̃̂, σ̂)).
        schedule: Расписание шума.
        rng: Источник случайности (один поток на весь пакет).
        x_init: Начальное состояние; по умолчанию init_prior (N(y, σ²(1)I)).
        n_samples: Размер пакета при сэмплировании из априорного распределения.

    Returns:
        Trajectory: n_steps + 1 снимков и финальная оценка. Для денойзеров финал -
        однократное применение D при t_end (плюс y), для score-функций - последнее состояние.
    """
    y = as_state_vector(y, "y")
    gen = make_rng(rng)
    grid = config.time_grid()
    if x_init is None:
        x = init_prior(y, schedule, gen, n_samples)
    else:
        x = as_state_vector(x_init, "x_init").copy()
        check_same_dimension(x, y, "x_init/y")

    denoiser_driven = isinstance(model, (Denoiser, NoiseLevelDenoiser))
    params = config.stochasticity
    times = [float(t) for t in grid]
    states = [x.copy()]
    logger.debug(f"run_sampler: {config.method.value}, {config.n_steps} steps, {schedule.describe()}")

    if config.method is SamplerMethod.HEUN_EDM:
        if not denoiser_driven:
            raise ValueError("Heun sampler needs a denoiser, got a score function")
        denoiser = model.at_noise_level(schedule) if isinstance(model, Denoiser) else model
        sigmas = np.asarray(schedule.sigma_hat(grid))
        _warn_if_churn_capped(denoiser, sigmas, params, config.n_steps)
        scales = np.asarray(schedule.scaling(grid))
        x_hat = (x - y) / scales[0]
        for i in range(config.n_steps):
            x_hat = heun_edm_step(x_hat, float(sigmas[i]), float(sigmas[i + 1]), denoiser, params, config.n_steps, gen)
            states.append(scales[i + 1] * x_hat + y)
        final = denoiser(x_hat, float(sigmas[-1])) + y
        return Trajectory(times=times, states=states, final=final)

    score_fn = _as_score_fn(model, schedule, y)
    for i in range(config.n_steps):
        t_from, t_to = times[i], times[i + 1]
        if config.method is SamplerMethod.PREDICTOR_CORRECTOR:
            x = pc_step(x, t_from, t_to, score_fn, schedule, y, params, gen)
        else:
            x = euler_maruyama_step(x, t_from, t_to, score_fn, schedule, y, gen, config.probability_flow)
        states.append(x.copy())

    if denoiser_driven:
        t_end = times[-1]
        x_hat = (x - y) / schedule.scaling(t_end)
        if isinstance(model, NoiseLevelDenoiser):
            final = model(x_hat, schedule.sigma_hat(t_end)) + y
        else:
            final = model(x_hat, t_end) + y
    else:
        final = x
    return Trajectory(times=times, states=states, final=final)


def wasserstein_to_gaussian(samples: ArrayLike, mean: float, std: float) -> float:
    """
    W1 между эмпирическим 1-D законом (координаты объединяются) и N(mean, std²).

    Гауссиан представлен квантилями в серединах n равных вероятностных интервалов.
    """
    values = np.ravel(np.asarray(samples, dtype=np.float64))
    if values.size == 0:
        raise ValueError("wasserstein_to_gaussian needs at least one sample")
    if std == 0.0:
        return float(np.mean(np.abs(values - mean)))
    levels = (np.arange(values.size) + 0.5) / values.size
    reference = stats.norm.ppf(levels, loc=mean, scale=std)
    return float(stats.wasserstein_distance(values, reference))
