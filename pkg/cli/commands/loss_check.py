# cli/commands/loss_check.py
"""
Проверки алгебры предобусловливания на случайных аффинных сетях:
равенство потерь score matching и денойзера, связь денойзер <-> score,
единичный эффективный вес EDM.
"""
import logging
from typing import Mapping, Optional

import numpy as np

from cli.reports import Check, ExperimentReport, metric
from cli.spec_parser import parse_schedule_spec
from denoising.oracle import IsotropicGaussian, oracle_denoiser, oracle_score_fn
from denoising.precond import (
    AffineRawNetwork,
    PrecondFlavor,
    denoiser_to_score,
    denoising_loss,
    make_preconditioning,
    score_matching_loss,
    wrap_denoiser,
)
from sde.schedule import NoiseSchedule, sample_training_time
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

EDM_WEIGHT_TOLERANCE = 1e-12


def loss_identity_error(
    schedule: NoiseSchedule, n_draws: int, rng: np.random.Generator, dim: int = 4, t_eps: float = 0.01
) -> float:
    """
    Максимальная относительная разница потерь score matching и денойзера
    (SGMSE-предобусловливание той же сети F, общий поток шума).
    """
    worst = 0.0
    for _ in range(n_draws):
        raw = AffineRawNetwork(dim, rng)
        x0 = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        t = sample_training_time(rng, t_eps)
        noise_seed = int(rng.integers(2 ** 63))
        sm = score_matching_loss(raw, (x0, y), schedule, t, noise_seed, t_eps)
        denoiser = wrap_denoiser(raw, make_preconditioning(PrecondFlavor.SGMSE, schedule, y=y), y)
        dl = denoising_loss(denoiser, (x0, y), schedule, t, noise_seed, t_eps=t_eps)
        worst = max(worst, abs(sm - dl) / max(abs(sm), abs(dl), np.finfo(float).tiny))
    return worst


def score_identity_error(
    schedule: NoiseSchedule, n_draws: int, rng: np.random.Generator, dim: int = 4, t_eps: float = 0.01
) -> float:
    """
    Максимальная относительная разница score, полученного из оптимального
    денойзера, и аналитического score гауссовых данных.
    """
    worst = 0.0
    for _ in range(n_draws):
        data = IsotropicGaussian(mu0=rng.standard_normal(dim).tolist(), sigma0=float(rng.uniform(0.2, 2.0)))
        y = rng.standard_normal(dim)
        t = float(sample_training_time(rng, t_eps))
        x_t = rng.standard_normal(dim) * 2.0
        denoiser = oracle_denoiser(data.shifted(y)).at_time(schedule)
        from_denoiser = denoiser_to_score(denoiser, schedule, x_t, y, t)
        analytic = oracle_score_fn(data, schedule, y)(x_t, t)
        scale = max(float(np.max(np.abs(analytic))), 1.0)
        worst = max(worst, float(np.max(np.abs(from_denoiser - analytic))) / scale)
    return worst


def edm_weight_error(schedule: NoiseSchedule, sigma_data: float, t_eps: float = 0.01) -> float:
    """max |w(t)·c_out²(t) - 1| на сетке t ∈ [t_ε, 1]."""
    precond = make_preconditioning(PrecondFlavor.EDM, schedule, sigma_data=sigma_data)
    worst = 0.0
    for t in np.linspace(t_eps, 1.0, 50):
        c = precond.coefficients(float(t))
        worst = max(worst, abs(c.weight * c.c_out ** 2 - 1.0))
    return worst


def cmd_loss_check(
    schedule_spec: str,
    n_draws: int = 1000,
    seed: Optional[int] = 0,
    tol: float = 1e-10,
    sigma_data: float = 0.1,
    dim: int = 4,
    t_eps: float = 0.01,
    presets: Optional[Mapping[str, str]] = None,
) -> ExperimentReport:
    """
    Отчет по тождествам потерь и предобусловливания для заданного расписания.

    Строки: loss_identity_rel_err (tol), score_identity_rel_err (tol),
    edm_weight_abs_err (1e-12).
    """
    if n_draws <= 0:
        raise ValueError(f"n_draws must be positive, got {n_draws}")
    schedule = parse_schedule_spec(schedule_spec, presets)
    logger.info(f"loss-check: {schedule.describe()}, {n_draws} draws, seed={seed}, tol={tol}")
    rng = make_rng(seed)
    report = ExperimentReport(
        command="loss-check",
        metadata={"seed": seed, "schedule": schedule.describe(), "n_draws": n_draws, "dim": dim,
                  "sigma_data": sigma_data, "t_eps": t_eps},
    )
    report.add(metric("loss_identity_rel_err", loss_identity_error(schedule, n_draws, rng, dim, t_eps), tol))
    report.add(metric("score_identity_rel_err", score_identity_error(schedule, n_draws, rng, dim, t_eps), tol))
    report.add(metric("edm_weight_abs_err", edm_weight_error(schedule, sigma_data, t_eps), EDM_WEIGHT_TOLERANCE))
    return report
