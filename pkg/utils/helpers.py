# utils/helpers.py
import logging
from typing import List, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]
ScalarOrArray = Union[float, np.ndarray]


def as_state_vector(values: ArrayLike, name: str = "state") -> np.ndarray:
    """
    Приводит вход к вещественному массиву float64 (вектор состояния).

    Скаляр превращается в вектор размерности 1. Дополнительные ведущие оси
    трактуются как пакет независимых векторов; последняя ось - размерность d.

    Args:
        values: Скаляр, последовательность или numpy-массив.
        name: Имя аргумента для сообщений об ошибках.

    Returns:
        np.ndarray: Массив с ndim >= 1.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] == 0:
        raise ValueError(f"{name} must have at least one coordinate")
    return arr


def check_same_dimension(a: np.ndarray, b: np.ndarray, names: str = "x0/y") -> None:
    """Проверяет совпадение размерности d (последняя ось) двух векторов."""
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"Dimension mismatch for {names}: {a.shape[-1]} != {b.shape[-1]}")


def check_time(t: ArrayLike, lower: float = 0.0, upper: float = 1.0, name: str = "t") -> np.ndarray:
    """
    Проверяет, что время диффузии лежит в [lower, upper].

    Returns:
        np.ndarray: Время как массив float64 (скаляр сохраняет ndim == 0).
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < lower) or np.any(arr > upper):
        raise ValueError(f"{name} must lie in [{lower}, {upper}], got {t}")
    return arr


def make_rng(seed: Optional[Union[int, np.random.SeedSequence, np.random.Generator]] = None) -> np.random.Generator:
    """Создает генератор случайных чисел из seed (или возвращает уже готовый)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_streams(seed: Optional[int], count: int) -> List[np.random.Generator]:
    """
    Порождает независимые потоки случайных чисел для параллельных задач.

    Каждая задача получает собственный поток, поэтому результат не зависит
    от числа рабочих потоков.

    Args:
        seed: Корневой seed.
        count: Число потоков.

    Returns:
        List[np.random.Generator]: Список генераторов длины count.
    """
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    children = np.random.SeedSequence(seed).spawn(count)
    logger.debug(f"Spawned {count} random streams from seed {seed}")
    return [np.random.default_rng(child) for child in children]


def batch_norm(x: np.ndarray) -> np.ndarray:
    """Евклидова норма по последней оси с сохранением оси для broadcast."""
    return np.linalg.norm(x, axis=-1, keepdims=True)


def to_output(value: ArrayLike) -> ScalarOrArray:
    """0-мерный результат возвращается как float, остальные как массив."""
    value = np.asarray(value, dtype=np.float64)
    return float(value) if value.ndim == 0 else value
