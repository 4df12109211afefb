# cli/commands/kernel_check.py
import logging
from typing import Mapping, Optional

import numpy as np

from cli.reports import Check, ExperimentReport, metric
from cli.spec_parser import parse_schedule_spec
from sde.kernel import sigma_hat_by_quadrature

logger = logging.getLogger(__name__)

CHECK_TIMES = np.round(np.arange(1, 11) / 10.0, 1)


def cmd_kernel_check(
    schedule_spec: str,
    n_quadrature: int = 512,
    tolerance: float = 1e-6,
    presets: Optional[Mapping[str, str]] = None,
) -> ExperimentReport:
    """
    Сравнивает замкнутую формулу σ̂(t) с квадратурой ∫₀ᵗ g²/s² на t = 0.1, ..., 1.0.

    Каждая точка и итоговый максимум - отдельные строки отчета;
    проверка проходит, если относительная ошибка строго меньше tolerance.
    """
    schedule = parse_schedule_spec(schedule_spec, presets)
    logger.info(f"kernel-check: {schedule.describe()}, {n_quadrature} quadrature points, tol={tolerance}")
    closed = np.asarray(schedule.sigma_hat(CHECK_TIMES))
    numeric = np.asarray(sigma_hat_by_quadrature(schedule, CHECK_TIMES, n_quadrature))
    rel_err = np.abs(numeric - closed) / np.abs(closed)

    report = ExperimentReport(
        command="kernel-check",
        metadata={"schedule": schedule.describe(), "n_quadrature": n_quadrature, "tolerance": tolerance},
    )
    for t, err in zip(CHECK_TIMES, rel_err):
        report.add(metric(f"sigma_hat_rel_err[t={t:.1f}]", err, tolerance, Check.BELOW))
    report.add(metric("sigma_hat_rel_err_max", np.max(rel_err), tolerance, Check.BELOW))
    return report
