# cli/reports.py
"""
Отчеты экспериментов: метаданные и строки метрик с допусками.
Формат - JSON Lines: строка metadata, строки metric, строка summary.
"""
import json
import logging
import math
import sys
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

from pydantic import BaseModel, Field

from services.output_paths import resolve_output_path
from utils.converters import convert_value_for_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE_ERROR = 2


class Check(str, Enum):
    MAX = "max"      # value <= tolerance
    BELOW = "below"  # value < tolerance
    MIN = "min"      # value >= tolerance
    ABS = "abs"      # |value - target| <= tolerance
    INFO = "info"    # всегда проходит


class MetricRow(BaseModel):
    name: str
    value: float
    tolerance: float
    passed: bool
    check: Check
    target: Optional[float] = None


def metric(name: str, value: float, tolerance: float, check: Check = Check.MAX,
           target: Optional[float] = None) -> MetricRow:
    """Создает строку метрики и вычисляет pass/fail по правилу check."""
    value = float(value)
    if check is Check.ABS:
        if target is None:
            raise ValueError(f"Metric '{name}' with check 'abs' needs a target")
        passed = abs(value - target) <= tolerance
    elif check is Check.MAX:
        passed = value <= tolerance
    elif check is Check.BELOW:
        passed = value < tolerance
    elif check is Check.MIN:
        passed = value >= tolerance
    else:
        passed = True
    if math.isnan(value) and check is not Check.INFO:
        passed = False
    return MetricRow(name=name, value=value, tolerance=tolerance, passed=passed, check=check, target=target)


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ExperimentReport(BaseModel):
    command: str
    metadata: Dict[str, Any] = Field(default_factory=dict)
    rows: List[MetricRow] = Field(default_factory=list)
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    def add(self, row: MetricRow) -> MetricRow:
        self.rows.append(row)
        level = logging.INFO if row.passed else logging.WARNING
        logger.log(level, f"[{self.command}] {row.name} = {row.value!r} ({row.check.value} {row.tolerance!r}): "
                          f"{'PASS' if row.passed else 'FAIL'}")
        return row

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED

    def to_jsonl(self) -> str:
        head: Dict[str, Any] = {"type": "metadata", "command": self.command, **self.metadata}
        if self.started_at is not None:
            head["started_at"] = self.started_at
        lines = [head]
        lines += [{"type": "metric", **row.model_dump(mode="python"), "check": row.check.value} for row in self.rows]
        tail: Dict[str, Any] = {
            "type": "summary",
            "passed": self.passed,
            "n_rows": len(self.rows),
            "n_failed": sum(not row.passed for row in self.rows),
        }
        if self.finished_at is not None:
            tail["finished_at"] = self.finished_at
        lines.append(tail)
        return "\n".join(json.dumps(convert_value_for_json(line), ensure_ascii=False) for line in lines) + "\n"

    def write(self, out: Optional[Union[str, Path]] = None, stream: Optional[TextIO] = None) -> Optional[Path]:
        """Пишет отчет в файл (или в stream, по умолчанию sys.stdout, если путь не задан)."""
        text = self.to_jsonl()
        path = resolve_output_path(out)
        if path is None:
            stream = sys.stdout if stream is None else stream
            stream.write(text)
            stream.flush()
            return None
        path.write_text(text, encoding="utf-8")
        logger.info(f"Report written to {path}")
        return path
