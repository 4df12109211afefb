# denoising/precond.py
"""
Предобусловливание денойзера и функции потерь.

D(x, t) = c_skip(t)·x + c_out(t)·F(c_in(t)·x + c_shift, y, c_noise(t)).

Денойзеры принимают несдвинутую немасштабированную переменную
x̃̂ = (x_t - y)/s(t). Для SGMSE-варианта c_in·x̃̂ + c_shift = x_t,
т.е. сеть видит исходное зашумленное состояние.
"""
import logging
import math
from enum import Enum
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sde.schedule import NoiseSchedule, inverse_sigma_hat
from utils.helpers import ArrayLike, ScalarOrArray, as_state_vector, check_same_dimension, check_time, make_rng, to_output

logger = logging.getLogger(__name__)

# F(input, conditioner, noise_label) -> output той же размерности
RawNetwork = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
DataPair = Tuple[ArrayLike, ArrayLike]

# относительный допуск сравнения σ̂ с верхней границей адаптера
SIGMA_HAT_RTOL = 1e-9


class PrecondFlavor(str, Enum):
    SGMSE = "sgmse"
    EDM = "edm"


COEFFICIENT_NAMES = ("c_skip", "c_out", "c_in", "c_noise", "c_shift", "weight")


class PrecondCoefficients(BaseModel):
    """Коэффициенты предобусловливания и вес потерь в момент t."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t: float
    sigma_hat: float
    c_skip: float
    c_out: float
    c_in: float
    c_noise: float
    c_shift: Union[float, np.ndarray]
    weight: float


def edm_coefficients(sigma_hat: float, sigma_data: float) -> Dict[str, float]:
    """
    Коэффициенты EDM, выраженные через σ̂.

    Returns:
        Dict[str, float]: c_skip, c_out, c_in, c_noise, weight (c_shift = 0).
    """
    var = sigma_hat ** 2 + sigma_data ** 2
    return {
        "c_skip": sigma_data ** 2 / var,
        "c_out": sigma_hat * sigma_data / math.sqrt(var),
        "c_in": 1.0 / math.sqrt(var),
        "c_noise": 0.25 * math.log(sigma_hat) if sigma_hat > 0 else -math.inf,
        "weight": var / (sigma_hat ** 2 * sigma_data ** 2) if sigma_hat > 0 else math.inf,
    }


def sgmse_coefficients(schedule: NoiseSchedule, t: float) -> Dict[str, float]:
    """c_skip = 1, c_out = -s·σ̂²/t, c_in = s, c_noise = log t, w = 1/σ̂² (c_shift = y)."""
    if t <= 0.0:
        raise ZeroDivisionError("SGMSE preconditioning is undefined at t=0")
    s = schedule.scaling(t)
    var = schedule.sigma_hat_sq(t)
    return {
        "c_skip": 1.0,
        "c_out": -s * var / t,
        "c_in": s,
        "c_noise": math.log(t),
        "weight": 1.0 / var,
    }


class Preconditioning(BaseModel):
    """
    Набор коэффициентов SGMSE или EDM.

    overrides позволяет взять отдельные коэффициенты из другого варианта
    (гибридное предобусловливание), например {"c_out": "edm"}.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    flavor: PrecondFlavor
    schedule: NoiseSchedule
    sigma_data: Optional[float] = Field(default=None, gt=0)
    y: Optional[np.ndarray] = None
    overrides: Dict[str, PrecondFlavor] = Field(default_factory=dict)

    @field_validator("overrides")
    @classmethod
    def check_override_names(cls, value: Dict[str, PrecondFlavor]) -> Dict[str, PrecondFlavor]:
        unknown = set(value) - set(COEFFICIENT_NAMES)
        if unknown:
            raise ValueError(f"Unknown coefficient override(s): {sorted(unknown)}")
        return value

    @model_validator(mode="after")
    def check_requirements(self) -> "Preconditioning":
        used = {self.overrides.get(name, self.flavor) for name in COEFFICIENT_NAMES}
        if PrecondFlavor.EDM in used and self.sigma_data is None:
            raise ValueError("EDM preconditioning requires sigma_data")
        if PrecondFlavor.SGMSE in used and self.y is None:
            raise ValueError("SGMSE preconditioning requires the conditioner y")
        return self

    def source(self, name: str) -> PrecondFlavor:
        return self.overrides.get(name, self.flavor)

    def coefficients(self, t: float) -> PrecondCoefficients:
        """Коэффициенты в момент t ∈ (0, 1]."""
        t = float(check_time(t))
        if t == 0.0:
            raise ZeroDivisionError("Preconditioning is evaluated on t in (0, 1]")
        sigma_hat = self.schedule.sigma_hat(t)
        table = {}
        if PrecondFlavor.EDM in {self.source(name) for name in COEFFICIENT_NAMES}:
            table[PrecondFlavor.EDM] = edm_coefficients(sigma_hat, self.sigma_data)
        if PrecondFlavor.SGMSE in {self.source(name) for name in COEFFICIENT_NAMES}:
            table[PrecondFlavor.SGMSE] = sgmse_coefficients(self.schedule, t)

        values = {}
        for name in ("c_skip", "c_out", "c_in", "c_noise", "weight"):
            values[name] = table[self.source(name)][name]
        if self.source("c_shift") is PrecondFlavor.SGMSE:
            values["c_shift"] = np.asarray(self.y, dtype=np.float64)
        else:
            values["c_shift"] = np.zeros_like(self.y, dtype=np.float64) if self.y is not None else 0.0
        return PrecondCoefficients(t=t, sigma_hat=sigma_hat, **values)

    def weight(self, t: float) -> float:
        return self.coefficients(t).weight


def make_preconditioning(
    flavor: Union[PrecondFlavor, str],
    schedule: NoiseSchedule,
    sigma_data: Optional[float] = None,
    y: Optional[ArrayLike] = None,
    overrides: Optional[Dict[str, Union[PrecondFlavor, str]]] = None,
) -> Preconditioning:
    y_arr = as_state_vector(y, "y") if y is not None else None
    precond = Preconditioning(
        flavor=PrecondFlavor(flavor),
        schedule=schedule,
        sigma_data=sigma_data,
        y=y_arr,
        overrides={name: PrecondFlavor(value) for name, value in (overrides or {}).items()},
    )
    if precond.overrides:
        logger.debug(f"Hybrid preconditioning {precond.flavor.value} with overrides {precond.overrides}")
    return precond


# --- Денойзеры ---

class Denoiser:
    """Денойзер, обусловленный временем: D(x̃̂, t)."""

    def __init__(self, fn: Callable[[np.ndarray, float], np.ndarray], name: str = "denoiser"):
        self._fn = fn
        self.name = name

    def __call__(self, x: ArrayLike, t: float) -> np.ndarray:
        return self._fn(as_state_vector(x, "x"), float(t))

    def at_noise_level(self, schedule: NoiseSchedule) -> "NoiseLevelDenoiser":
        """
        Адаптер к соглашению D(x̃̂, σ̂), используемому сэмплером Хойна.

        Модель определена только на t ∈ [0, 1], поэтому адаптер принимает
        σ̂ <= σ̂(1) и отказывает выше (см. NoiseLevelDenoiser.sigma_hat_max).
        """
        upper = max(float(schedule.sigma_hat(schedule.clamp_time())), float(schedule.sigma_hat(1.0)))
        return NoiseLevelDenoiser(lambda x, sigma_hat: self(x, inverse_sigma_hat(schedule, sigma_hat)),
                                  name=f"{self.name}@sigma", sigma_hat_max=upper)


class NoiseLevelDenoiser:
    """
    Денойзер, обусловленный уровнем шума: D(x̃̂, σ̂).

    sigma_hat_max - наибольший допустимый σ̂ (None - без ограничения,
    как у аналитических оракулов).
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray, float], np.ndarray],
        name: str = "denoiser",
        sigma_hat_max: Optional[float] = None,
    ):
        self._fn = fn
        self.name = name
        self.sigma_hat_max = sigma_hat_max

    def __call__(self, x: ArrayLike, sigma_hat: float) -> np.ndarray:
        sigma_hat = float(sigma_hat)
        if self.sigma_hat_max is not None and sigma_hat > self.sigma_hat_max * (1.0 + SIGMA_HAT_RTOL):
            raise ValueError(
                f"{self.name}: noise level {sigma_hat:.6g} exceeds the largest supported {self.sigma_hat_max:.6g}"
            )
        return self._fn(as_state_vector(x, "x"), sigma_hat)

    def at_time(self, schedule: NoiseSchedule) -> Denoiser:
        return Denoiser(lambda x, t: self(x, schedule.sigma_hat(t)), name=f"{self.name}@t")


class PreconditionedDenoiser(Denoiser):
    """Сырая сеть F, обернутая коэффициентами предобусловливания."""

    def __init__(self, raw: RawNetwork, precond: Preconditioning, y: np.ndarray):
        self.raw = raw
        self.precond = precond
        self.y = y
        super().__init__(self._denoise, name=f"precond[{precond.flavor.value}]")

    def _denoise(self, x: np.ndarray, t: float) -> np.ndarray:
        check_same_dimension(x, self.y, "x/y")
        c = self.precond.coefficients(t)
        return c.c_skip * x + c.c_out * np.asarray(self.raw(c.c_in * x + c.c_shift, self.y, c.c_noise))


def wrap_denoiser(raw: RawNetwork, precond: Preconditioning, y: ArrayLike) -> PreconditionedDenoiser:
    return PreconditionedDenoiser(raw, precond, as_state_vector(y, "y"))


def denoiser_to_score(
    denoiser: Denoiser, schedule: NoiseSchedule, x_t: ArrayLike, y: ArrayLike, t: float
) -> np.ndarray:
    """
    Score условного распределения по денойзеру:
        x̃̂ = (x_t - y)/s(t),   ∇ log p_t(x_t|y) = (D(x̃̂, t) - x̃̂) / (s(t)·σ̂²(t)).
    """
    x_t = as_state_vector(x_t, "x_t")
    y = as_state_vector(y, "y")
    check_same_dimension(x_t, y, "x_t/y")
    t = float(check_time(t))
    if t == 0.0:
        raise ZeroDivisionError("Score is undefined at t=0 (sigma_hat = 0)")
    s = schedule.scaling(t)
    var = schedule.sigma_hat_sq(t)
    x_hat = (x_t - y) / s
    return (denoiser(x_hat, t) - x_hat) / (s * var)


def make_score_model(raw: RawNetwork) -> Callable[[np.ndarray, np.ndarray, float], np.ndarray]:
    """s_θ(x_t, y, t) = -(1/t)·F(x_t, y, log t); масштаб 1/t применяется после всей сети F."""
    def score_model(x_t: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        return -np.asarray(raw(x_t, y, math.log(t))) / t
    return score_model


# --- Функции потерь ---

def _check_loss_time(t: float, t_eps: float) -> float:
    return float(check_time(t, lower=t_eps, upper=1.0))


def denoising_loss(
    denoiser: Denoiser,
    data_pair: DataPair,
    schedule: NoiseSchedule,
    t: float,
    rng: Optional[Union[int, np.random.Generator]] = None,
    weight: Optional[float] = None,
    t_eps: float = 0.01,
) -> ScalarOrArray:
    """
    Взвешенная L2-потеря денойзера: w(t)·‖D(x̃0 + ε̂, t) - x̃0‖², x̃0 = x0 - y, ε̂ ~ N(0, σ̂²I).

    Args:
        weight: w(t). По умолчанию берется из предобусловливания денойзера,
            а для прочих денойзеров равен 1/σ̂²(t).
    """
    t = _check_loss_time(t, t_eps)
    x0 = as_state_vector(data_pair[0], "x0")
    y = as_state_vector(data_pair[1], "y")
    check_same_dimension(x0, y)
    x_tilde = x0 - y
    sigma_hat = schedule.sigma_hat(t)
    eps_hat = sigma_hat * make_rng(rng).standard_normal(x_tilde.shape)
    if weight is None:
        precond = getattr(denoiser, "precond", None)
        weight = precond.weight(t) if precond is not None else 1.0 / sigma_hat ** 2
    residual = denoiser(x_tilde + eps_hat, t) - x_tilde
    return to_output(weight * np.sum(residual ** 2, axis=-1))


def score_matching_loss(
    raw: RawNetwork,
    data_pair: DataPair,
    schedule: NoiseSchedule,
    t: float,
    rng: Optional[Union[int, np.random.Generator]] = None,
    t_eps: float = 0.01,
) -> ScalarOrArray:
    """
    Потеря score matching: ‖σ(t)·s_θ(x_t, y, t) + z‖², x_t = s(x0 - y) + y + σ·z.

    При общем потоке случайных чисел совпадает с denoising_loss для
    SGMSE-предобусловливания той же сети F.
    """
    t = _check_loss_time(t, t_eps)
    x0 = as_state_vector(data_pair[0], "x0")
    y = as_state_vector(data_pair[1], "y")
    check_same_dimension(x0, y)
    z = make_rng(rng).standard_normal(x0.shape)
    s = schedule.scaling(t)
    sigma = schedule.sigma(t)
    x_t = s * (x0 - y) + y + sigma * z
    score = make_score_model(raw)(x_t, y, t)
    return to_output(np.sum((sigma * score + z) ** 2, axis=-1))


class AffineRawNetwork:
    """
    Случайная аффинная "сеть" F(x, y, c) = A·x + B·y + c·u + v.

    Детерминирована после создания и безопасна для параллельного чтения.
    """

    def __init__(self, dim: int, rng: Optional[Union[int, np.random.Generator]] = None, scale: float = 1.0):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        gen = make_rng(rng)
        norm = scale / math.sqrt(dim)
        self.dim = dim
        self.A = norm * gen.standard_normal((dim, dim))
        self.B = norm * gen.standard_normal((dim, dim))
        self.u = scale * gen.standard_normal(dim)
        self.v = scale * gen.standard_normal(dim)

    def __call__(self, x: np.ndarray, y: np.ndarray, noise_label: float) -> np.ndarray:
        return x @ self.A.T + np.asarray(y) @ self.B.T + noise_label * self.u + self.v
