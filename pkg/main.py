# main.py

import logging
import sys

# --- Загрузка основных компонентов ---
# Импортируем в первую очередь, чтобы настроить логирование и получить базовые объекты
try:
    from config import settings, logger # Импортируем настроенный логгер
    from cli.app import main as cli_main
    from services.output_paths import next_free_path
except ImportError as e:
    logging.basicConfig(level=logging.CRITICAL)
    init_logger = logging.getLogger(__name__)
    init_logger.critical(f"Failed import core components: {e}. Exiting.", exc_info=True)
    exit(1)


def setup_file_logging() -> None:
    """Добавляет файловый обработчик логов в log_dir, не перезаписывая старые файлы (run.log, run_1.log, ...)."""
    log_format = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
    log_date_format = '%Y-%m-%d %H:%M:%S'
    try:
        settings.log_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"CRITICAL: Could not create log directory '{settings.log_dir}': {e}", file=sys.stderr)
        return
    log_file_path = next_free_path(settings.log_dir, "run.log")
    root_logger = logging.getLogger()
    try:
        file_handler = logging.FileHandler(log_file_path, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(log_format, datefmt=log_date_format))
        root_logger.addHandler(file_handler)
        logger.info(f"Logging to file: {log_file_path}")
    except Exception as e:
        root_logger.critical(f"CRITICAL: Failed to set up file logging to '{log_file_path}': {e}", exc_info=True)


if __name__ == '__main__':
    if settings.log_to_file:
        setup_file_logging()
    try:
        exit_code = cli_main(sys.argv[1:])
    except KeyboardInterrupt:
        logger.info("Stopped by user (KeyboardInterrupt).")
        exit_code = 130
    logger.debug(f"Exit code: {exit_code}")
    sys.exit(exit_code)
