# cli/commands/sample_toy.py
"""
Сэмплирование модельных распределений с аналитическим оракулом-денойзером.

Пакет из n сэмплов делится на блоки фиксированного размера; каждый блок
получает собственный поток случайных чисел и считается в пуле потоков,
поэтому результат не зависит от числа рабочих потоков.
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import List, Mapping, Optional

import numpy as np
from scipy import stats

from cli.reports import ExperimentReport, metric
from cli.spec_parser import parse_data_spec, parse_sampler_spec, parse_schedule_spec
from denoising.oracle import GaussianMixture, IsotropicGaussian, PointMass, ToyData, oracle_denoiser, terminal_marginal_sample
from sampling.sampler import SamplerConfig, StochasticityParams, init_prior, run_sampler, wasserstein_to_gaussian
from sde.schedule import NoiseSchedule
from utils.helpers import spawn_streams

logger = logging.getLogger(__name__)

MEAN_TOLERANCE = 0.03
VARIANCE_TOLERANCE = 0.05
W1_TOLERANCE = 0.05
POINT_MASS_TOLERANCE = 1e-12

# spawn_key эталонной выборки; потоки блоков используют ключи 0, 1, 2, ...
REFERENCE_STREAM_KEY = 2 ** 31


class PriorKind(str, Enum):
    EXACT = "exact"              # точный терминальный закон p_1(x|y)
    CONDITIONER = "conditioner"  # N(y, σ²(1)·I)


def _sample_chunk(
    config: SamplerConfig,
    data: ToyData,
    schedule: NoiseSchedule,
    y: np.ndarray,
    n: int,
    prior: PriorKind,
    rng: np.random.Generator,
) -> np.ndarray:
    if prior is PriorKind.EXACT:
        x_init = terminal_marginal_sample(data, schedule, y, n, rng)
    else:
        x_init = init_prior(y, schedule, rng, n)
    # денойзер работает с x̃0 = x0 - y
    model = oracle_denoiser(data.shifted(y))
    return run_sampler(config, y, model, schedule, rng, x_init=x_init).final


def reference_stream(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(REFERENCE_STREAM_KEY,)))


async def _sample_all(
    config: SamplerConfig,
    data: ToyData,
    schedule: NoiseSchedule,
    y: np.ndarray,
    n_samples: int,
    prior: PriorKind,
    seed: Optional[int],
    chunk_size: int,
    max_workers: int,
) -> np.ndarray:
    sizes = [min(chunk_size, n_samples - start) for start in range(0, n_samples, chunk_size)]
    streams = spawn_streams(seed, len(sizes))
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        tasks = [
            loop.run_in_executor(pool, _sample_chunk, config, data, schedule, y, size, prior, rng)
            for size, rng in zip(sizes, streams)
        ]
        chunks: List[np.ndarray] = await asyncio.gather(*tasks)
    logger.debug(f"sample-toy: {len(chunks)} chunk(s) of up to {chunk_size} samples done")
    return np.concatenate(chunks, axis=0)


def draw_samples(
    config: SamplerConfig,
    data: ToyData,
    schedule: NoiseSchedule,
    n_samples: int,
    seed: Optional[int] = None,
    prior: PriorKind = PriorKind.EXACT,
    y: Optional[np.ndarray] = None,
    chunk_size: int = 1000,
    max_workers: int = 4,
) -> np.ndarray:
    """Сэмплы формы (n_samples, d) из обратного процесса с оракулом данных."""
    if n_samples <= 0:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    y = np.zeros(data.dim) if y is None else np.asarray(y, dtype=np.float64)
    return asyncio.run(_sample_all(config, data, schedule, y, n_samples, PriorKind(prior), seed, chunk_size, max_workers))


def _add_distribution_rows(
    report: ExperimentReport, data: ToyData, samples: np.ndarray, seed: Optional[int], tol: Optional[float]
) -> None:
    mean_err = float(np.max(np.abs(samples.mean(axis=0) - data.mean())))
    var_err = float(np.max(np.abs(samples.var(axis=0) - data.variance())))

    if isinstance(data, PointMass):
        deviation = float(np.max(np.abs(samples - data.mean())))
        report.add(metric("max_abs_deviation", deviation, tol if tol is not None else POINT_MASS_TOLERANCE))
        return

    report.add(metric("mean_abs_error", mean_err, tol if tol is not None else MEAN_TOLERANCE))
    report.add(metric("variance_abs_error", var_err, tol if tol is not None else VARIANCE_TOLERANCE))
    if isinstance(data, IsotropicGaussian):
        w1 = max(
            wasserstein_to_gaussian(samples[:, k], data.mu0[k], data.sigma0) for k in range(data.dim)
        )
    elif isinstance(data, GaussianMixture):
        reference = data.sample(samples.shape[0], reference_stream(seed))
        w1 = max(stats.wasserstein_distance(samples[:, k], reference[:, k]) for k in range(data.dim))
    else:
        return
    report.add(metric("wasserstein1", w1, tol if tol is not None else W1_TOLERANCE))


def cmd_sample_toy(
    schedule_spec: str,
    sampler_spec: str,
    data_spec: str,
    n_samples: int = 10000,
    seed: Optional[int] = 0,
    prior: str = "exact",
    tol: Optional[float] = None,
    presets: Optional[Mapping[str, str]] = None,
    stochasticity: Optional[StochasticityParams] = None,
    chunk_size: int = 1000,
    max_workers: int = 4,
) -> ExperimentReport:
    """
    Сэмплирует модельное распределение и сравнивает выборку с истинным законом.

    Args:
        schedule_spec, sampler_spec, data_spec: Строки спецификаций.
        n_samples: Размер выборки.
        seed: Корневой seed (одинаковый seed дает побитово одинаковый отчет).
        prior: "exact" - начальное состояние из p_1(x|y), "conditioner" - из N(y, σ²(1)I).
        tol: Если задан, заменяет допуски всех строк отчета.
        stochasticity: Значения по умолчанию для r, S_churn и т.д.

    Returns:
        ExperimentReport: Ошибки среднего и дисперсии и W1 (для точечной массы -
        максимальное отклонение от μ0).
    """
    schedule = parse_schedule_spec(schedule_spec, presets)
    config = parse_sampler_spec(sampler_spec, stochasticity)
    data = parse_data_spec(data_spec)
    prior_kind = PriorKind(prior)
    logger.info(f"sample-toy: {data.kind} data, {config.method.value} x {config.n_steps} steps, "
                f"{schedule.describe()}, n={n_samples}, seed={seed}, prior={prior_kind.value}")

    samples = draw_samples(config, data, schedule, n_samples, seed, prior_kind,
                           chunk_size=chunk_size, max_workers=max_workers)
    report = ExperimentReport(
        command="sample-toy",
        metadata={
            "seed": seed,
            "schedule": schedule.describe(),
            "sampler": config.model_dump(mode="python"),
            "data": data.model_dump(mode="python"),
            "n_samples": n_samples,
            "prior": prior_kind.value,
            "empirical_mean": samples.mean(axis=0),
            "empirical_variance": samples.var(axis=0),
        },
    )
    _add_distribution_rows(report, data, samples, seed, tol)
    return report
