# cli/commands/schedule_dump.py
import csv
import logging
import math
import sys
from pathlib import Path
from typing import List, Mapping, Optional, TextIO, Union

import numpy as np

from cli.spec_parser import parse_schedule_spec
from sde.schedule import NoiseSchedule, ScheduleDomainError, dense_grid
from services.output_paths import resolve_output_path
from utils.converters import format_number

logger = logging.getLogger(__name__)

COLUMNS = ("t", "f", "g", "s", "sigma_hat", "sigma", "lambda")


def _drift_diffusion(schedule: NoiseSchedule, grid: np.ndarray):
    try:
        return np.asarray(schedule.drift(grid)), np.asarray(schedule.diffusion(grid))
    except ScheduleDomainError:
        # cosine: f и g не определены при t = 0
        f = np.full(grid.shape, math.nan)
        g = np.full(grid.shape, math.nan)
        regular = grid > 0.0
        f[regular] = schedule.drift(grid[regular])
        g[regular] = schedule.diffusion(grid[regular])
        logger.warning(f"{schedule.family}: f/g undefined at t=0, written as nan")
        return f, g


def schedule_table(schedule: NoiseSchedule, n_grid: int) -> List[List[float]]:
    """Строки (t, f, g, s, σ̂, σ, λ) на равномерной сетке из n_grid точек."""
    grid = dense_grid(n_grid)
    f, g = _drift_diffusion(schedule, grid)
    columns = [
        grid,
        f,
        g,
        np.asarray(schedule.scaling(grid)),
        np.asarray(schedule.sigma_hat(grid)),
        np.asarray(schedule.sigma(grid)),
        np.asarray(schedule.log_snr(grid)),
    ]
    return np.column_stack(columns).tolist()


def cmd_schedule_dump(
    schedule_spec: str,
    n_grid: int = 101,
    out_path: Optional[Union[str, Path]] = None,
    presets: Optional[Mapping[str, str]] = None,
    stream: Optional[TextIO] = None,
    lambda_sentinel_sigma: Optional[float] = None,
) -> Optional[Path]:
    """
    Пишет CSV с колонками t, f, g, s, sigma_hat, sigma, lambda.

    Args:
        schedule_spec: Строка расписания (family:key=value,...).
        n_grid: Число узлов сетки на [0, 1] (>= 2).
        out_path: Файл CSV; None или "-" - вывод в stream.
        presets: Значения по умолчанию для семейств.
        lambda_sentinel_sigma: σ̂ для конечного значения λ при t = 0 (None - значение расписания).

    Returns:
        Путь к записанному файлу или None при выводе в stream.

    Raises:
        SpecParseError: Неверная строка расписания (в т.ч. неизвестное семейство).
    """
    schedule = parse_schedule_spec(schedule_spec, presets, lambda_sentinel_sigma)
    logger.info(f"schedule-dump: {schedule.describe()}, {n_grid} grid points")
    rows = schedule_table(schedule, n_grid)
    path = resolve_output_path(out_path)
    if path is None:
        _write_rows(sys.stdout if stream is None else stream, rows)
        return None
    with open(path, "w", newline="", encoding="utf-8") as handle:
        _write_rows(handle, rows)
    logger.info(f"schedule-dump: wrote {len(rows)} rows to {path}")
    return path


def _write_rows(handle: TextIO, rows: List[List[float]]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([format_number(value) for value in row])
