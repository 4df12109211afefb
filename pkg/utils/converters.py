# utils/converters.py
import logging
import math
from enum import Enum
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)


def convert_value_for_json(value: Any) -> Any:
    """
    Рекурсивно конвертирует вложенные структуры (включая типы numpy)
    в типы, совместимые с JSON-сериализацией (dict, list, str, int, float, bool, None).

    Нечисловые float (inf, nan) заменяются строками "inf", "-inf", "nan",
    так как строгий JSON их не допускает.
    """
    if isinstance(value, dict):
        # Конвертируем ключи в строки и рекурсивно обрабатываем значения
        return {str(k): convert_value_for_json(v) for k, v in value.items()}
    elif isinstance(value, (list, tuple)):
        return [convert_value_for_json(item) for item in value]
    elif isinstance(value, np.ndarray):
        return [convert_value_for_json(item) for item in value.tolist()]
    elif isinstance(value, np.generic):
        return convert_value_for_json(value.item())
    elif isinstance(value, Enum):
        return convert_value_for_json(value.value)
    elif isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    # Базовые типы, совместимые с JSON
    elif isinstance(value, (str, int, bool, type(None))):
        return value
    # Для всех остальных неподдерживаемых типов
    else:
        logger.warning(f"Cannot directly serialize type {type(value)}. Converting to string.")
        return str(value)


def format_number(value: float) -> str:
    """Форматирует число для CSV: repr-точность, inf/nan как текст."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)
