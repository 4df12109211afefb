# sde/schedule.py
"""
Расписания шума для сдвинутых SDE.

Каждое семейство задает согласованный набор функций на t ∈ [0, 1]:
дрейф f(t), диффузию g(t), масштаб s(t), немасштабированное СКО σ̂(t),
полное СКО σ(t) = s(t)·σ̂(t) и log-SNR λ(t) = -log σ̂²(t).
Связь (f, g) <-> (s, σ̂) задается соотношениями
    f = d log s / dt,    g² = s² · d(σ̂²)/dt.
"""
import abc
import logging
import math
from typing import ClassVar, Dict, List, Optional, Tuple, Type, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from utils.helpers import ArrayLike, ScalarOrArray, check_time, make_rng, to_output

logger = logging.getLogger(__name__)

# λ для σ̂ = 0 (t = 0): конечное значение вместо +inf
DEFAULT_LAMBDA_SENTINEL_SIGMA = 1e-300


class ScheduleDomainError(ValueError):
    """Вычисление вне области определения расписания (например, cosine при t = 0)."""


def _fmt(value: float) -> str:
    return repr(float(value))


# --- Базовый класс ---

class NoiseSchedule(BaseModel, abc.ABC):
    """
    Абстрактное расписание шума. Экземпляры неизменяемы и потокобезопасны.

    Наследники реализуют _scaling, _sigma_hat_sq, _drift, _diffusion
    и _sigma_hat_sq_rate на массивах numpy.
    """
    model_config = ConfigDict(frozen=True)

    family: ClassVar[str] = ""
    # короткий ключ строки расписания -> имя поля модели
    spec_keys: ClassVar[Dict[str, str]] = {}
    lambda_sentinel_sigma: float = Field(default=DEFAULT_LAMBDA_SENTINEL_SIGMA, gt=0, exclude=True)

    # --- Реализация семейства ---
    @abc.abstractmethod
    def _scaling(self, t: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _drift(self, t: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _diffusion(self, t: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def _sigma_hat_sq_rate(self, t: np.ndarray) -> np.ndarray: ...

    def _clamp_active(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(t, dtype=bool)

    # --- Публичные представления ---
    def scaling(self, t: ArrayLike) -> ScalarOrArray:
        """s(t)."""
        return to_output(self._scaling(check_time(t)))

    def sigma_hat_sq(self, t: ArrayLike) -> ScalarOrArray:
        """σ̂²(t)."""
        return to_output(self._sigma_hat_sq(check_time(t)))

    def sigma_hat(self, t: ArrayLike) -> ScalarOrArray:
        """σ̂(t), СКО немасштабированного процесса."""
        return to_output(np.sqrt(self._sigma_hat_sq(check_time(t))))

    def sigma(self, t: ArrayLike) -> ScalarOrArray:
        """σ(t) = s(t)·σ̂(t)."""
        t = check_time(t)
        return to_output(self._scaling(t) * np.sqrt(self._sigma_hat_sq(t)))

    def drift(self, t: ArrayLike) -> ScalarOrArray:
        """f(t)."""
        return to_output(self._drift(check_time(t)))

    def diffusion(self, t: ArrayLike) -> ScalarOrArray:
        """g(t)."""
        return to_output(self._diffusion(check_time(t)))

    def log_snr(self, t: ArrayLike) -> ScalarOrArray:
        """
        λ(t) = log(s²/σ²) = -log σ̂²(t).

        При σ̂ = 0 (t = 0) возвращается конечный sentinel -2·log(lambda_sentinel_sigma).
        """
        var = self._sigma_hat_sq(check_time(t))
        sentinel = -2.0 * math.log(self.lambda_sentinel_sigma)
        with np.errstate(divide="ignore"):
            lam = np.where(var > 0, -np.log(np.where(var > 0, var, 1.0)), sentinel)
        return to_output(lam)

    def sigma_hat_sq_rate(self, t: ArrayLike) -> ScalarOrArray:
        """Подынтегральное выражение g²/s² для σ̂² (SDE без клампов)."""
        return to_output(self._sigma_hat_sq_rate(check_time(t)))

    def clamp_active(self, t: ArrayLike) -> Union[bool, np.ndarray]:
        """Активен ли какой-либо кламп расписания в точке t."""
        active = self._clamp_active(check_time(t))
        return bool(active) if np.ndim(active) == 0 else active

    def clamp_time(self) -> float:
        """Момент, после которого σ̂ перестает расти (1 для семейств без клампа λ)."""
        return 1.0

    def describe(self) -> str:
        """Каноническая строка family:key=value,... (обратима парсером)."""
        params = ",".join(f"{key}={_fmt(getattr(self, field))}" for key, field in self.spec_keys.items())
        return f"{self.family}:{params}" if params else self.family


# --- Семейства типа VE (экспоненциальный рост σ̂) ---

class _SigmaRange(NoiseSchedule):
    sigma_min: float = Field(gt=0)
    sigma_max: float = Field(gt=0)

    @model_validator(mode="after")
    def check_order(self) -> "_SigmaRange":
        if not self.sigma_min < self.sigma_max:
            raise ValueError(f"sigma_min must be < sigma_max, got {self.sigma_min} >= {self.sigma_max}")
        return self

    @property
    def log_ratio(self) -> float:
        return math.log(self.sigma_max / self.sigma_min)

    def _sigma_hat_sq_rate(self, t: np.ndarray) -> np.ndarray:
        # одинаково для VE, OUVE2: σmin²·2·log r·r^{2t}
        return self.sigma_min ** 2 * 2.0 * self.log_ratio * np.exp(2.0 * self.log_ratio * t)


class VESchedule(_SigmaRange):
    """Variance exploding: f = 0, s ≡ 1, σ̂² = σmin²[(σmax/σmin)^{2t} - 1]."""
    family: ClassVar[str] = "ve"
    spec_keys: ClassVar[Dict[str, str]] = {"smin": "sigma_min", "smax": "sigma_max"}

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return np.ones_like(t)

    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray:
        return self.sigma_min ** 2 * np.expm1(2.0 * self.log_ratio * t)

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(t)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return self.sigma_min * np.exp(self.log_ratio * t) * math.sqrt(2.0 * self.log_ratio)


class OUVE2Schedule(_SigmaRange):
    """
    OU-дрейф f = -γ поверх дисперсии VE: σ̂(t) совпадает с VE,
    g(t) = e^{-γt}·g_VE(t). При γ = 0 совпадает с VE.
    """
    family: ClassVar[str] = "ouve2"
    spec_keys: ClassVar[Dict[str, str]] = {"smin": "sigma_min", "smax": "sigma_max", "gamma": "gamma"}
    gamma: float = Field(ge=0)

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return np.exp(-self.gamma * t)

    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray:
        return self.sigma_min ** 2 * np.expm1(2.0 * self.log_ratio * t)

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, -self.gamma)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return np.exp((self.log_ratio - self.gamma) * t) * self.sigma_min * math.sqrt(2.0 * self.log_ratio)


class OUVESchedule(_SigmaRange):
    """
    OUVE: f = -γ, g(t) = σmin·(σmax/σmin)^t·√(2 log(σmax/σmin)).

    Диффузия не затухает вместе со средним, поэтому
    σ̂²(t) = σmin²·log r/(γ + log r)·[(r·e^γ)^{2t} - 1], r = σmax/σmin.
    """
    family: ClassVar[str] = "ouve"
    spec_keys: ClassVar[Dict[str, str]] = {"smin": "sigma_min", "smax": "sigma_max", "gamma": "gamma"}
    gamma: float = Field(ge=0)

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return np.exp(-self.gamma * t)

    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray:
        log_r = self.log_ratio
        return self.sigma_min ** 2 * log_r / (self.gamma + log_r) * np.expm1(2.0 * (self.gamma + log_r) * t)

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, -self.gamma)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return self.sigma_min * np.exp(self.log_ratio * t) * math.sqrt(2.0 * self.log_ratio)

    def _sigma_hat_sq_rate(self, t: np.ndarray) -> np.ndarray:
        return self.sigma_min ** 2 * 2.0 * self.log_ratio * np.exp(2.0 * (self.log_ratio + self.gamma) * t)


# --- Семейства типа VP (линейное β) ---

class _BetaRange(NoiseSchedule):
    beta_min: float = Field(gt=0)
    beta_max: float = Field(gt=0)

    @model_validator(mode="after")
    def check_order(self) -> "_BetaRange":
        if not self.beta_min < self.beta_max:
            raise ValueError(f"beta_min must be < beta_max, got {self.beta_min} >= {self.beta_max}")
        return self

    def beta(self, t: np.ndarray) -> np.ndarray:
        return self.beta_min + (self.beta_max - self.beta_min) * t

    def beta_integral(self, t: np.ndarray) -> np.ndarray:
        """Точная первообразная ∫₀ᵗ β."""
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t ** 2

    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray:
        return np.expm1(self.beta_integral(t))

    def _sigma_hat_sq_rate(self, t: np.ndarray) -> np.ndarray:
        return self.beta(t) * np.exp(self.beta_integral(t))


class VPSchedule(_BetaRange):
    """Variance preserving: f = -β/2, g = √β, s² + σ² = 1."""
    family: ClassVar[str] = "vp"
    spec_keys: ClassVar[Dict[str, str]] = {"bmin": "beta_min", "bmax": "beta_max"}

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * self.beta_integral(t))

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return -0.5 * self.beta(t)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return np.sqrt(self.beta(t))


class OUVPSchedule(_BetaRange):
    """OUVP: f = -γ - β/2, g = e^{-γt}·√β. σ̂ совпадает с VP; при γ = 0 это VP."""
    family: ClassVar[str] = "ouvp"
    spec_keys: ClassVar[Dict[str, str]] = {"bmin": "beta_min", "bmax": "beta_max", "gamma": "gamma"}
    gamma: float = Field(ge=0)

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return np.exp(-self.gamma * t - 0.5 * self.beta_integral(t))

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return -self.gamma - 0.5 * self.beta(t)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return np.exp(-self.gamma * t) * np.sqrt(self.beta(t))


# --- Косинусное расписание ---

class CosineSchedule(NoiseSchedule):
    """
    Косинусное расписание в форме VP: λ(t) = -2·log tan(πt/2) + 2ν.

    Клампы независимы: λ(t) ≥ λ_min ограничивает σ̂ (s не меняется),
    β(t) = -2f(t) ≤ β_max ограничивает только f и g.
    """
    family: ClassVar[str] = "cosine"
    spec_keys: ClassVar[Dict[str, str]] = {"nu": "nu", "lmin": "lambda_min", "bmax": "beta_max_clamp"}
    nu: float = Field(gt=0)
    lambda_min: float
    beta_max_clamp: float = Field(gt=0)

    def _tan_sq_scaled(self, t: np.ndarray) -> np.ndarray:
        # q(t) = e^{-2ν}·tan²(πt/2) - σ̂² без клампа
        return math.exp(-2.0 * self.nu) * np.tan(0.5 * math.pi * t) ** 2

    def _unclamped_beta(self, t: np.ndarray) -> np.ndarray:
        if np.any(t == 0.0):
            raise ScheduleDomainError("Cosine drift/diffusion is singular at t=0 (csc(0))")
        q = self._tan_sq_scaled(t)
        # β = -2f = 2π·csc(πt)·q/(1+q)
        return 2.0 * math.pi / np.sin(math.pi * t) * (q / (1.0 + q))

    def _scaling(self, t: np.ndarray) -> np.ndarray:
        return 1.0 / np.sqrt(1.0 + self._tan_sq_scaled(t))

    def _sigma_hat_sq(self, t: np.ndarray) -> np.ndarray:
        return np.minimum(self._tan_sq_scaled(t), math.exp(-self.lambda_min))

    def _drift(self, t: np.ndarray) -> np.ndarray:
        return -0.5 * np.minimum(self._unclamped_beta(t), self.beta_max_clamp)

    def _diffusion(self, t: np.ndarray) -> np.ndarray:
        return np.sqrt(np.minimum(self._unclamped_beta(t), self.beta_max_clamp))

    def _sigma_hat_sq_rate(self, t: np.ndarray) -> np.ndarray:
        q = self._tan_sq_scaled(t)
        sin = np.sin(math.pi * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = 2.0 * math.pi * q / sin
        return np.where(t == 0.0, 0.0, rate)

    def _clamp_active(self, t: np.ndarray) -> np.ndarray:
        lam_clamped = t >= self.clamp_time()
        safe_t = np.where(t == 0.0, 0.5, t)
        beta_clamped = np.where(t == 0.0, False, self._unclamped_beta(safe_t) > self.beta_max_clamp)
        return lam_clamped | beta_clamped

    def clamp_time(self) -> float:
        # λ(t_c) = λ_min  <=>  tan(πt_c/2) = exp(ν - λ_min/2)
        return 2.0 / math.pi * math.atan(math.exp(self.nu - 0.5 * self.lambda_min))


# --- Реестр семейств ---

SCHEDULE_FAMILIES: Dict[str, Type[NoiseSchedule]] = {
    cls.family: cls
    for cls in (OUVESchedule, OUVE2Schedule, VESchedule, VPSchedule, OUVPSchedule, CosineSchedule)
}

# семейства, известные из литературы, но без реализации
EXTERNAL_FAMILIES: Dict[str, str] = {
    "bbed": "BBED (Brownian bridge with exploding diffusion) is defined in an external reference "
            "and is not implemented; register a NoiseSchedule subclass to add it",
}


def register_family(cls: Type[NoiseSchedule]) -> Type[NoiseSchedule]:
    """Регистрирует новое семейство расписаний (точка расширения)."""
    if not cls.family:
        raise ValueError(f"{cls.__name__} must define a non-empty 'family'")
    SCHEDULE_FAMILIES[cls.family] = cls
    EXTERNAL_FAMILIES.pop(cls.family, None)
    logger.info(f"Registered schedule family '{cls.family}' -> {cls.__name__}")
    return cls


# --- Операции ---

def eval_scaling(schedule: NoiseSchedule, t: ArrayLike) -> ScalarOrArray:
    return schedule.scaling(t)


def eval_sigma_hat(schedule: NoiseSchedule, t: ArrayLike) -> ScalarOrArray:
    return schedule.sigma_hat(t)


def eval_drift_diffusion(schedule: NoiseSchedule, t: ArrayLike) -> Tuple[ScalarOrArray, ScalarOrArray]:
    """Пара (f(t), g(t)). Для cosine при t = 0 бросает ScheduleDomainError."""
    return schedule.drift(t), schedule.diffusion(t)


def log_snr(schedule: NoiseSchedule, t: ArrayLike) -> ScalarOrArray:
    return schedule.log_snr(t)


def clamp_time(schedule: NoiseSchedule) -> float:
    return schedule.clamp_time()


def describe(schedule: NoiseSchedule) -> str:
    return schedule.describe()


class ConsistencyReport(BaseModel):
    """Максимальные отклонения замкнутых (f, g) от конечных разностей (s, σ̂²)."""
    max_f_deviation: float
    max_g_sq_deviation: float
    n_checked: int
    n_skipped: int


def consistency_check(schedule: NoiseSchedule, grid: ArrayLike, h: float = 1e-5) -> ConsistencyReport:
    """
    Сверяет f(t) с центральной разностью log s(t) и g²(t) с s²(t)·Δ_h(σ̂²)(t).

    Точки, где t ± h выходит за [0, 1] или активен кламп расписания,
    пропускаются и учитываются в n_skipped.

    Args:
        schedule: Расписание.
        grid: Узлы внутри (0, 1).
        h: Шаг конечной разности (> 0).

    Returns:
        ConsistencyReport: Отклонения и число проверенных/пропущенных точек.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    t = np.atleast_1d(check_time(grid, name="grid"))
    inside = (t - h > 0.0) & (t + h < 1.0)
    if np.any(inside):
        t_in = t[inside]
        clamped = (
            np.asarray(schedule.clamp_active(t_in - h))
            | np.asarray(schedule.clamp_active(t_in))
            | np.asarray(schedule.clamp_active(t_in + h))
        )
        keep = t_in[~clamped]
    else:
        keep = np.empty(0)
    n_skipped = int(t.size - keep.size)
    if n_skipped:
        logger.debug(f"consistency_check({schedule.describe()}): skipped {n_skipped} of {t.size} grid points")
    if keep.size == 0:
        return ConsistencyReport(max_f_deviation=0.0, max_g_sq_deviation=0.0, n_checked=0, n_skipped=n_skipped)

    log_s = lambda x: np.log(np.asarray(schedule.scaling(x)))
    var = lambda x: np.asarray(schedule.sigma_hat_sq(x))
    d_log_s = (log_s(keep + h) - log_s(keep - h)) / (2.0 * h)
    d_var = (var(keep + h) - var(keep - h)) / (2.0 * h)

    f = np.asarray(schedule.drift(keep))
    g = np.asarray(schedule.diffusion(keep))
    s = np.asarray(schedule.scaling(keep))
    return ConsistencyReport(
        max_f_deviation=float(np.max(np.abs(f - d_log_s))),
        max_g_sq_deviation=float(np.max(np.abs(g ** 2 - s ** 2 * d_var))),
        n_checked=int(keep.size),
        n_skipped=n_skipped,
    )


def inverse_sigma_hat(schedule: NoiseSchedule, sigma_hat_value: ArrayLike, xtol: float = 1e-14) -> ScalarOrArray:
    """
    Обратная к σ̂(t): время t, на котором достигается заданное σ̂.

    Значения ниже 0 дают t = 0, выше σ̂(1) дают t = 1.
    """
    target = np.asarray(sigma_hat_value, dtype=np.float64)
    upper = float(schedule.sigma_hat(schedule.clamp_time()))
    result = np.empty_like(target)
    for index, value in np.ndenumerate(target):
        if value <= 0.0:
            result[index] = 0.0
        elif value >= upper:
            result[index] = schedule.clamp_time()
        else:
            result[index] = brentq(lambda x: schedule.sigma_hat(x) - value, 0.0, schedule.clamp_time(), xtol=xtol)
    return to_output(result)


def sample_training_time(
    rng: Optional[Union[int, np.random.Generator]] = None, t_eps: float = 0.01, size: Optional[int] = None
) -> ScalarOrArray:
    """t ~ U[t_ε, 1], как при вычислении обучающей функции потерь."""
    if not 0.0 < t_eps < 1.0:
        raise ValueError(f"t_eps must lie in (0, 1), got {t_eps}")
    return to_output(make_rng(rng).uniform(t_eps, 1.0, size=size))


def dense_grid(n: int, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    """Равномерная сетка из n точек на [lower, upper]."""
    if n < 2:
        raise ValueError(f"grid needs at least 2 points, got {n}")
    return np.linspace(lower, upper, n)


__all__: List[str] = [
    "ScheduleDomainError", "NoiseSchedule", "VESchedule", "OUVE2Schedule", "OUVESchedule",
    "VPSchedule", "OUVPSchedule", "CosineSchedule", "SCHEDULE_FAMILIES", "EXTERNAL_FAMILIES",
    "register_family", "eval_scaling", "eval_sigma_hat", "eval_drift_diffusion", "log_snr",
    "clamp_time", "describe", "ConsistencyReport", "consistency_check", "inverse_sigma_hat",
    "sample_training_time", "dense_grid",
]
