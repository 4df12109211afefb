# sde/kernel.py
"""
Гауссово ядро возмущения сдвинутой SDE:
    p(x_t | x0, y) = N(s(t)·(x0 - y) + y, σ²(t)·I).
"""
import logging
import math
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from sde.schedule import NoiseSchedule
from utils.helpers import ArrayLike, ScalarOrArray, as_state_vector, check_same_dimension, check_time, make_rng, to_output

logger = logging.getLogger(__name__)

GL_ORDER = 16


class PerturbationKernelParams(BaseModel):
    """Параметры ядра в момент t: масштаб среднего s(t) и СКО σ(t) = s(t)·σ̂(t)."""
    model_config = ConfigDict(frozen=True)

    t: float = Field(ge=0.0, le=1.0)
    mean_scale: float
    std: float = Field(ge=0.0)

    @model_validator(mode="after")
    def check_identity_at_zero(self) -> "PerturbationKernelParams":
        if self.t == 0.0 and self.std != 0.0:
            raise ValueError(f"Kernel std must vanish at t=0, got {self.std}")
        return self


def kernel_params(schedule: NoiseSchedule, t: float) -> PerturbationKernelParams:
    t = float(check_time(t))
    return PerturbationKernelParams(t=t, mean_scale=schedule.scaling(t), std=schedule.sigma(t))


def kernel_mean(x0: ArrayLike, y: ArrayLike, params: PerturbationKernelParams) -> np.ndarray:
    """s·(x0 - y) + y поэлементно."""
    x0 = as_state_vector(x0, "x0")
    y = as_state_vector(y, "y")
    check_same_dimension(x0, y)
    return params.mean_scale * (x0 - y) + y


def sample_kernel(
    x0: ArrayLike,
    y: ArrayLike,
    params: PerturbationKernelParams,
    rng: Optional[Union[int, np.random.Generator]] = None,
    complex_valued: bool = False,
) -> np.ndarray:
    """
    Сэмпл из ядра: kernel_mean + σ·z, z ~ N(0, I) по каждой вещественной координате.

    Args:
        complex_valued: Вектор содержит чередующиеся (re, im) комплексных
            коэффициентов; тогда СКО на вещественную координату равно σ/√2,
            и комплексный коэффициент имеет дисперсию σ².
    """
    mean = kernel_mean(x0, y, params)
    if complex_valued and mean.shape[-1] % 2:
        raise ValueError(f"Complex-valued state needs an even dimension, got {mean.shape[-1]}")
    std = params.std / math.sqrt(2.0) if complex_valued else params.std
    z = make_rng(rng).standard_normal(mean.shape)
    return mean + std * z


@lru_cache(maxsize=8)
def _gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _graded_breakpoints(upper: float, n_panels: int) -> np.ndarray:
    # панели сгущаются геометрически к верхнему пределу: 0, L/2, 3L/4, ..., L
    k = np.arange(n_panels)
    points = upper * (1.0 - 2.0 ** (-k.astype(np.float64)))
    return np.append(points, upper)


def _integrate_rate(schedule: NoiseSchedule, upper: float, n_points: int) -> float:
    nodes, weights = _gauss_legendre(GL_ORDER)
    edges = _graded_breakpoints(upper, max(1, n_points // GL_ORDER))
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    xs = mid[:, None] + half[:, None] * nodes[None, :]
    values = np.asarray(schedule.sigma_hat_sq_rate(xs))
    return float(np.sum(half[:, None] * weights[None, :] * values))


def sigma_hat_by_quadrature(schedule: NoiseSchedule, t: ArrayLike, n_points: int = 512) -> ScalarOrArray:
    """
    σ̂(t) = √(∫₀ᵗ g²/s² dξ) составной квадратурой Гаусса-Лежандра.

    Используется 16-точечное правило на n_points/16 панелях. Интеграл берется
    до min(t, clamp_time) от скорости без клампов, поэтому для cosine
    результат совпадает с σ̂, ограниченным λ_min.

    Args:
        schedule: Расписание.
        t: Время в [0, 1] (скаляр или массив).
        n_points: Общее число узлов (>= 16).

    Returns:
        σ̂(t) той же формы, что t.
    """
    if n_points < GL_ORDER:
        raise ValueError(f"n_points must be >= {GL_ORDER}, got {n_points}")
    t_arr = check_time(t)
    limit = schedule.clamp_time()
    result = np.empty_like(t_arr)
    for index, value in np.ndenumerate(t_arr):
        upper = min(float(value), limit)
        result[index] = 0.0 if upper <= 0.0 else math.sqrt(max(_integrate_rate(schedule, upper, n_points), 0.0))
    return to_output(result)


def prior_mismatch_kl(x0: ArrayLike, y: ArrayLike, schedule: NoiseSchedule) -> ScalarOrArray:
    """
    KL(p_01(·|x0, y) ‖ N(y, σ²(1)·I)) = ‖s(1)·(x0 - y)‖² / (2σ²(1)).

    Оба гауссиана имеют ковариацию σ²(1)·I, поэтому расхождение
    сводится к сдвигу среднего.
    """
    x0 = as_state_vector(x0, "x0")
    y = as_state_vector(y, "y")
    check_same_dimension(x0, y)
    s1 = schedule.scaling(1.0)
    sigma1 = schedule.sigma(1.0)
    if sigma1 == 0.0:
        raise ZeroDivisionError(f"Terminal std of {schedule.describe()} is zero; prior mismatch is undefined")
    shift = s1 * (x0 - y)
    return to_output(np.sum(shift ** 2, axis=-1) / (2.0 * sigma1 ** 2))
