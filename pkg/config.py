# config.py
import logging
import math
from pathlib import Path
from typing import Dict

from pydantic import field_validator, ValidationError, Field, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()
BASE_DIR = Path(__file__).parent.resolve()
logger = logging.getLogger(__name__)

class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=BASE_DIR.parent / '.env',
        env_file_encoding='utf-8',
        extra='ignore'
    )

    # --- Общие ---
    log_level: str = "INFO"
    log_dir: Path = BASE_DIR / "logs"
    log_to_file: bool = False

    # --- Расписания шума (строки вида family:key=value,...) ---
    default_schedule: str = "ouve"
    ouve_spec: str = "ouve:smin=0.05,smax=0.5,gamma=1.5"
    ouve2_spec: str = "ouve2:smin=0.04,smax=1.7,gamma=1.5"
    ve_spec: str = "ve:smin=0.04,smax=1.7"
    ouvp_spec: str = "ouvp:bmin=0.01,bmax=1,gamma=1.5"
    vp_spec: str = "vp:bmin=0.01,bmax=1"
    cosine_spec: str = "cosine:nu=1.5,lmin=-12,bmax=10"

    # --- Денойзер и обучение ---
    sigma_data: float = Field(default=0.1, gt=0)
    t_eps: float = Field(default=0.01, gt=0, lt=1)

    # --- Сэмплеры ---
    pc_r: float = Field(default=0.5, ge=0)
    pc_n_corrector: int = Field(default=1, ge=0)
    s_noise: float = 1.0
    s_min: float = Field(default=0.0, ge=0)
    s_max: float = math.inf

    # --- Численные параметры ---
    quadrature_points: int = 512
    lambda_sentinel_sigma: float = Field(default=1e-300, gt=0)
    snr_cap_db: float = Field(default=100.0, gt=0)

    # --- Аудио (STFT) ---
    sample_rate: int = 16000
    n_fft: int = 512
    hop_length: int = 128
    amp_scale: float = Field(default=0.15, gt=0)
    amp_exponent: float = Field(default=0.5, gt=0, le=1)

    # --- Выполнение ---
    max_workers: int = 4
    sample_chunk_size: int = 1000
    report_timestamps: bool = False

    # --- Валидаторы ---
    @field_validator('log_level', mode='before')
    @classmethod
    def normalize_log_level(cls, value: str) -> str:
        level = str(value).strip().upper()
        if level not in ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"):
            raise ValueError(f"Unknown LOG_LEVEL: {value}")
        return level

    @field_validator('quadrature_points', 'sample_rate', 'n_fft', 'hop_length', 'max_workers', 'sample_chunk_size')
    @classmethod
    def check_positive(cls, value: int) -> int:
        if value <= 0:
            raise ValueError(f"Expected a positive integer, got {value}")
        return value

    @computed_field
    @property
    def schedule_presets(self) -> Dict[str, str]:
        """Строки расписаний по умолчанию, индексированные по имени семейства."""
        return {
            "ouve": self.ouve_spec,
            "ouve2": self.ouve2_spec,
            "ve": self.ve_spec,
            "ouvp": self.ouvp_spec,
            "vp": self.vp_spec,
            "cosine": self.cosine_spec,
        }

# Создаем экземпляр настроек
try:
    settings = Settings()
except ValidationError as e:
     init_logger = logging.getLogger(__name__)
     init_logger.critical(f"FATAL: Configuration validation failed!")
     init_logger.critical(e)
     exit(1)

# Настройка логирования
log_format = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
logging.basicConfig(level=getattr(logging, settings.log_level, logging.INFO), format=log_format)
logger = logging.getLogger(__name__)

logger.debug("Настройки приложения загружены.")
logger.debug(f"Уровень логирования: {settings.log_level}")
logger.debug(f"Расписание по умолчанию: {settings.schedule_presets.get(settings.default_schedule, settings.default_schedule)}")
