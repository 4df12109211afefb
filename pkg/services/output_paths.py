# services/output_paths.py
import logging
import os
from pathlib import Path
from typing import Optional, Union

logger = logging.getLogger(__name__)


def ensure_parent_dir(path: Union[str, Path]) -> Path:
    """
    Создает родительскую директорию файла результата, если ее нет.

    Args:
        path: Путь к файлу.

    Returns:
        Path: Абсолютный путь к файлу.

    Raises:
        OSError: Если директорию создать не удалось.
    """
    target = Path(path).expanduser().resolve()
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Could not create output directory '{target.parent}': {e}", exc_info=True)
        raise
    return target


def next_free_path(directory: Union[str, Path], base_name: str) -> Path:
    """
    Возвращает свободное имя файла в директории без перезаписи существующих:
    run.log, run_1.log, run_2.log, ...
    """
    directory = Path(directory)
    stem, suffix = os.path.splitext(base_name)
    candidate = directory / base_name
    counter = 1
    while candidate.exists():
        candidate = directory / f"{stem}_{counter}{suffix}"
        counter += 1
    return candidate


def resolve_output_path(path: Optional[Union[str, Path]]) -> Optional[Path]:
    """None означает вывод в stdout; иначе путь с гарантированно существующей директорией."""
    if path is None or str(path) == "-":
        return None
    resolved = ensure_parent_dir(path)
    if resolved.exists():
        logger.info(f"Overwriting existing output file: {resolved}")
    return resolved
