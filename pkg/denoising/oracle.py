# denoising/oracle.py
"""
Аналитические модельные распределения данных с замкнутыми
оптимальными денойзерами и score-функциями.
"""
import abc
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import logsumexp

from denoising.precond import Denoiser, NoiseLevelDenoiser
from sde.schedule import NoiseSchedule
from utils.helpers import ArrayLike, as_state_vector, check_same_dimension, check_time, make_rng

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray, float], np.ndarray]


class DegenerateSampleError(ValueError):
    """Нормальные уравнения МНК вырождены (например, все зашумленные сэмплы совпадают)."""


def _check_sigma(sigma_hat: float, allow_zero: bool = True) -> float:
    sigma_hat = float(sigma_hat)
    if sigma_hat < 0 or (sigma_hat == 0 and not allow_zero) or math.isnan(sigma_hat):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"sigma_hat must be {bound}, got {sigma_hat}")
    return sigma_hat


# --- Распределения ---

class ToyData(BaseModel, abc.ABC):
    """Модельное распределение данных p_data на R^d."""
    model_config = ConfigDict(frozen=True)

    kind: str = ""

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @abc.abstractmethod
    def optimal_denoiser(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        """E[x0 | x̂ = x0 + σ̂·z]."""

    @abc.abstractmethod
    def true_score(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        """∇ log[p_data * N(0, σ̂²I)](x̂)."""

    @abc.abstractmethod
    def log_density(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        """log[p_data * N(0, σ̂²I)](x̂)."""

    @abc.abstractmethod
    def sample(self, n: int, rng: Optional[Union[int, np.random.Generator]] = None) -> np.ndarray:
        """n независимых сэмплов формы (n, d)."""

    @abc.abstractmethod
    def shifted(self, y: ArrayLike) -> "ToyData":
        """Закон x̃0 = x0 - y."""

    @abc.abstractmethod
    def mean(self) -> np.ndarray: ...

    @abc.abstractmethod
    def variance(self) -> np.ndarray:
        """Покоординатная дисперсия."""

    def _prepare(self, x_hat: ArrayLike) -> np.ndarray:
        x_hat = as_state_vector(x_hat, "x_hat")
        if x_hat.shape[-1] != self.dim:
            raise ValueError(f"Dimension mismatch: x_hat has {x_hat.shape[-1]}, data has {self.dim}")
        return x_hat


def _gaussian_log_pdf(sq_dist: np.ndarray, var: float, dim: int) -> np.ndarray:
    return -0.5 * sq_dist / var - 0.5 * dim * math.log(2.0 * math.pi * var)


class PointMass(ToyData):
    kind: str = "pointmass"
    mu0: List[float] = Field(min_length=1)

    @property
    def dim(self) -> int:
        return len(self.mu0)

    @property
    def _mu(self) -> np.ndarray:
        return np.asarray(self.mu0, dtype=np.float64)

    def optimal_denoiser(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        _check_sigma(sigma_hat)
        return np.broadcast_to(self._mu, x_hat.shape).copy()

    def true_score(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        sigma_hat = _check_sigma(sigma_hat, allow_zero=False)
        return -(x_hat - self._mu) / sigma_hat ** 2

    def log_density(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        sigma_hat = _check_sigma(sigma_hat, allow_zero=False)
        return _gaussian_log_pdf(np.sum((x_hat - self._mu) ** 2, axis=-1), sigma_hat ** 2, self.dim)

    def sample(self, n: int, rng: Optional[Union[int, np.random.Generator]] = None) -> np.ndarray:
        return np.tile(self._mu, (n, 1))

    def shifted(self, y: ArrayLike) -> "PointMass":
        return PointMass(mu0=(self._mu - as_state_vector(y, "y")).tolist())

    def mean(self) -> np.ndarray:
        return self._mu.copy()

    def variance(self) -> np.ndarray:
        return np.zeros(self.dim)


class IsotropicGaussian(ToyData):
    kind: str = "gaussian"
    mu0: List[float] = Field(min_length=1)
    sigma0: float = Field(gt=0)

    @property
    def dim(self) -> int:
        return len(self.mu0)

    @property
    def _mu(self) -> np.ndarray:
        return np.asarray(self.mu0, dtype=np.float64)

    def optimal_denoiser(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var_n = _check_sigma(sigma_hat) ** 2
        var0 = self.sigma0 ** 2
        return (var0 * x_hat + var_n * self._mu) / (var0 + var_n)

    def true_score(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var_n = _check_sigma(sigma_hat, allow_zero=False) ** 2
        return -(x_hat - self._mu) / (self.sigma0 ** 2 + var_n)

    def log_density(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var = self.sigma0 ** 2 + _check_sigma(sigma_hat) ** 2
        return _gaussian_log_pdf(np.sum((x_hat - self._mu) ** 2, axis=-1), var, self.dim)

    def sample(self, n: int, rng: Optional[Union[int, np.random.Generator]] = None) -> np.ndarray:
        return self._mu + self.sigma0 * make_rng(rng).standard_normal((n, self.dim))

    def shifted(self, y: ArrayLike) -> "IsotropicGaussian":
        return IsotropicGaussian(mu0=(self._mu - as_state_vector(y, "y")).tolist(), sigma0=self.sigma0)

    def mean(self) -> np.ndarray:
        return self._mu.copy()

    def variance(self) -> np.ndarray:
        return np.full(self.dim, self.sigma0 ** 2)


class GaussianMixture(ToyData):
    """Смесь изотропных гауссиан с общим σ0."""
    kind: str = "mixture"
    weights: List[float] = Field(min_length=1)
    means: List[List[float]] = Field(min_length=1)
    sigma0: float = Field(gt=0)

    @field_validator("weights")
    @classmethod
    def check_weights(cls, value: List[float]) -> List[float]:
        if any(w < 0 for w in value):
            raise ValueError(f"Mixture weights must be nonnegative, got {value}")
        if abs(sum(value) - 1.0) > 1e-12:
            raise ValueError(f"Mixture weights must sum to 1, got {sum(value)}")
        return value

    @model_validator(mode="after")
    def check_shapes(self) -> "GaussianMixture":
        if len(self.weights) != len(self.means):
            raise ValueError(f"{len(self.weights)} weights for {len(self.means)} components")
        if len({len(m) for m in self.means}) != 1 or len(self.means[0]) == 0:
            raise ValueError("All mixture means must share one nonzero dimension")
        return self

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def _mus(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float64)

    @property
    def _log_w(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.weights, dtype=np.float64))

    def _component_log_joint(self, x_hat: np.ndarray, var: float) -> np.ndarray:
        # log w_k + log N(x̂; μ_k, var·I), форма (..., K)
        sq = np.sum((x_hat[..., None, :] - self._mus) ** 2, axis=-1)
        return self._log_w + _gaussian_log_pdf(sq, var, self.dim)

    def responsibilities(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var = self.sigma0 ** 2 + _check_sigma(sigma_hat) ** 2
        log_joint = self._component_log_joint(x_hat, var)
        return np.exp(log_joint - logsumexp(log_joint, axis=-1, keepdims=True))

    def optimal_denoiser(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var_n = _check_sigma(sigma_hat) ** 2
        var0 = self.sigma0 ** 2
        resp = self.responsibilities(x_hat, sigma_hat)
        # апостериорные средние компонент, форма (..., K, d)
        post = (var0 * x_hat[..., None, :] + var_n * self._mus) / (var0 + var_n)
        return np.sum(resp[..., :, None] * post, axis=-2)

    def true_score(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var = self.sigma0 ** 2 + _check_sigma(sigma_hat, allow_zero=False) ** 2
        resp = self.responsibilities(x_hat, sigma_hat)
        return np.sum(resp[..., :, None] * (self._mus - x_hat[..., None, :]), axis=-2) / var

    def log_density(self, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
        x_hat = self._prepare(x_hat)
        var = self.sigma0 ** 2 + _check_sigma(sigma_hat) ** 2
        return logsumexp(self._component_log_joint(x_hat, var), axis=-1)

    def sample(self, n: int, rng: Optional[Union[int, np.random.Generator]] = None) -> np.ndarray:
        gen = make_rng(rng)
        components = gen.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return self._mus[components] + self.sigma0 * gen.standard_normal((n, self.dim))

    def shifted(self, y: ArrayLike) -> "GaussianMixture":
        y = as_state_vector(y, "y")
        return GaussianMixture(weights=list(self.weights), means=(self._mus - y).tolist(), sigma0=self.sigma0)

    def mean(self) -> np.ndarray:
        return np.asarray(self.weights) @ self._mus

    def variance(self) -> np.ndarray:
        w = np.asarray(self.weights)
        second = w @ self._mus ** 2
        return self.sigma0 ** 2 + second - self.mean() ** 2


# --- Операции ---

def optimal_denoiser(data: ToyData, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
    return data.optimal_denoiser(x_hat, sigma_hat)


def true_score(data: ToyData, x_hat: ArrayLike, sigma_hat: float) -> np.ndarray:
    return data.true_score(x_hat, sigma_hat)


def oracle_denoiser(data: ToyData) -> NoiseLevelDenoiser:
    """Оптимальный денойзер как D(x̃̂, σ̂) для сэмплеров."""
    return NoiseLevelDenoiser(data.optimal_denoiser, name=f"oracle[{data.kind}]")


def oracle_score_fn(data: ToyData, schedule: NoiseSchedule, y: ArrayLike) -> ScoreFn:
    """
    Аналитический score ∇ log p_t(x|y) в пространстве x_t.

    p_t(x|y) - закон s(t)·x̃ + y, x̃ ~ p̃ * N(0, σ̂²I), поэтому
    score(x, t) = true_score_p̃((x - y)/s, σ̂)/s.
    """
    y = as_state_vector(y, "y")
    shifted = data.shifted(y)

    def score_fn(x: np.ndarray, t: float) -> np.ndarray:
        s = schedule.scaling(t)
        return shifted.true_score((x - y) / s, schedule.sigma_hat(t)) / s

    return score_fn


def terminal_marginal_sample(
    data: ToyData,
    schedule: NoiseSchedule,
    y: ArrayLike,
    n: int,
    rng: Optional[Union[int, np.random.Generator]] = None,
) -> np.ndarray:
    """Точные сэмплы p_1(x|y): сэмпл данных, пропущенный через ядро при t = 1."""
    y = as_state_vector(y, "y")
    gen = make_rng(rng)
    x0 = data.sample(n, gen)
    check_same_dimension(x0, y)
    s1 = schedule.scaling(1.0)
    return s1 * (x0 - y) + y + schedule.sigma(1.0) * gen.standard_normal(x0.shape)


class AffineDenoiser(BaseModel):
    """Аффинный денойзер D(x, t) = a(t)·x + b(t) на сетке t."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t_grid: List[float]
    sigma_hats: List[float]
    scales: List[np.ndarray]
    offsets: List[np.ndarray]

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.t_grid) - t)))

    def coefficients(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(a, b) ближайшего узла сетки; a - скаляр (0-мерный) или матрица d×d."""
        i = self.index(t)
        return self.scales[i], self.offsets[i]

    def __call__(self, x: ArrayLike, t: float) -> np.ndarray:
        x = as_state_vector(x, "x")
        a, b = self.coefficients(t)
        return (x @ a.T if a.ndim == 2 else a * x) + b

    def to_denoiser(self) -> Denoiser:
        return Denoiser(self.__call__, name="affine_fit")


def fit_affine_denoiser(
    data_samples: ArrayLike,
    t_grid: Sequence[float],
    schedule: NoiseSchedule,
    rng: Optional[Union[int, np.random.Generator]] = None,
    t_eps: float = 0.01,
    full_matrix: bool = False,
    min_samples: int = 100,
) -> AffineDenoiser:
    """
    МНК-подгонка аффинного денойзера: для каждого t минимизирует
    Σ‖a·(x0 + σ̂z) + b - x0‖² по парным сэмплам.

    Args:
        data_samples: Сэмплы x0 формы (n, d), n >= min_samples.
        t_grid: Времена в [t_eps, 1].
        full_matrix: Подгонять матрицу d×d вместо скалярного a.

    Raises:
        DegenerateSampleError: Если нормальные уравнения вырождены.
    """
    x0 = np.atleast_2d(np.asarray(data_samples, dtype=np.float64))
    n, dim = x0.shape
    if n < min_samples:
        raise ValueError(f"fit_affine_denoiser needs at least {min_samples} samples, got {n}")
    gen = make_rng(rng)
    times = [float(check_time(t, lower=t_eps, upper=1.0)) for t in t_grid]
    sigma_hats, scales, offsets = [], [], []
    for t in times:
        sigma_hat = schedule.sigma_hat(t)
        x_noisy = x0 + sigma_hat * gen.standard_normal(x0.shape)
        if full_matrix:
            design = np.hstack([x_noisy, np.ones((n, 1))])
            coef, _, rank, _ = np.linalg.lstsq(design, x0, rcond=None)
            if rank < dim + 1:
                raise DegenerateSampleError(f"Rank-deficient design at t={t} (rank {rank} < {dim + 1})")
            a = coef[:dim].T
            b = coef[dim]
        else:
            u = x_noisy - x_noisy.mean(axis=0)
            v = x0 - x0.mean(axis=0)
            denom = float(np.sum(u * u))
            if denom <= 1e-300:
                raise DegenerateSampleError(f"Noisy samples have zero spread at t={t}")
            a = np.asarray(np.sum(u * v) / denom)
            b = x0.mean(axis=0) - a * x_noisy.mean(axis=0)
        sigma_hats.append(sigma_hat)
        scales.append(a)
        offsets.append(b)
        logger.debug(f"Affine fit at t={t:.4f}, sigma_hat={sigma_hat:.4g}: a={np.round(a, 4)}")
    return AffineDenoiser(t_grid=times, sigma_hats=sigma_hats, scales=scales, offsets=offsets)
