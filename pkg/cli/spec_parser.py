# cli/spec_parser.py
"""
Разбор строк вида family:key=value,key=value.

Строки расписаний:  ouve:smin=0.05,smax=0.5,gamma=1.5  (или просто "ouve" - значения по умолчанию)
Строки сэмплеров:   heun:steps=64,churn=0 | pc:steps=32,r=0.5,ncorr=1 | em:steps=100,pf=1
Строки данных:      gaussian:mu=0,sigma=1 | pointmass:mu=0.7 | mixture:w=0.5/0.5,mu=-1/1,sigma=0.1
"""
import logging
from typing import Dict, List, Mapping, Optional, Tuple

from pydantic import ValidationError

from denoising.oracle import GaussianMixture, IsotropicGaussian, PointMass, ToyData
from sampling.sampler import SamplerConfig, SamplerMethod, StochasticityParams
from sde.schedule import EXTERNAL_FAMILIES, SCHEDULE_FAMILIES, NoiseSchedule

logger = logging.getLogger(__name__)


class SpecParseError(ValueError):
    """Синтаксическая ошибка строки спецификации; position - индекс символа."""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position} in '{text}'")


class UnsupportedFamilyError(SpecParseError):
    """Неизвестное или нереализованное семейство."""


# (значение, позиция значения в строке)
ParsedValues = Dict[str, Tuple[str, int]]


def split_spec(text: str) -> Tuple[str, ParsedValues]:
    """
    Делит строку на имя семейства и пары key=value с позициями.

    Raises:
        SpecParseError: Пустое имя, пустой ключ, отсутствие '=' или повтор ключа.
    """
    if not text or not text.strip():
        raise SpecParseError("Empty spec string", text or "", 0)
    name, sep, rest = text.partition(":")
    family = name.strip().lower()
    if not family:
        raise SpecParseError("Missing family name", text, 0)
    values: ParsedValues = {}
    if not sep:
        return family, values
    offset = len(name) + 1
    if not rest.strip():
        raise SpecParseError("Expected key=value after ':'", text, offset)
    for chunk in rest.split(","):
        key, eq, value = chunk.partition("=")
        if not eq:
            raise SpecParseError(f"Expected '=' in '{chunk}'", text, offset)
        key = key.strip().lower()
        if not key:
            raise SpecParseError("Empty key", text, offset)
        if key in values:
            raise SpecParseError(f"Duplicate key '{key}'", text, offset)
        if not value.strip():
            raise SpecParseError(f"Empty value for '{key}'", text, offset + len(chunk.partition("=")[0]) + 1)
        values[key] = (value.strip(), offset + len(chunk.partition("=")[0]) + 1)
        offset += len(chunk) + 1
    return family, values


def _float(text: str, key: str, value: Tuple[str, int]) -> float:
    raw, pos = value
    try:
        return float(raw)
    except ValueError:
        raise SpecParseError(f"Invalid number '{raw}' for '{key}'", text, pos) from None


def _int(text: str, key: str, value: Tuple[str, int]) -> int:
    number = _float(text, key, value)
    if not number.is_integer():
        raise SpecParseError(f"Expected an integer for '{key}', got '{value[0]}'", text, value[1])
    return int(number)


def _vector(text: str, key: str, value: Tuple[str, int]) -> List[float]:
    raw, pos = value
    parts = raw.split("/")
    result = []
    for part in parts:
        try:
            result.append(float(part))
        except ValueError:
            raise SpecParseError(f"Invalid number '{part}' in '{key}'", text, pos) from None
        pos += len(part) + 1
    return result


def _check_keys(text: str, values: ParsedValues, allowed: List[str]) -> None:
    for key, (_, pos) in values.items():
        if key not in allowed:
            raise SpecParseError(f"Unknown key '{key}' (allowed: {', '.join(allowed)})", text, max(0, pos - len(key) - 1))


def _validated(text: str, build):
    try:
        return build()
    except ValidationError as e:
        raise SpecParseError(f"Invalid parameters: {e.errors()[0]['msg']}", text, 0) from e


# --- Расписания ---

def parse_schedule_spec(
    text: str,
    presets: Optional[Mapping[str, str]] = None,
    lambda_sentinel_sigma: Optional[float] = None,
) -> NoiseSchedule:
    """
    Строка расписания -> NoiseSchedule.

    Ключи, не указанные явно, берутся из presets[family] (если есть).
    lambda_sentinel_sigma задает σ̂, по которой считается конечное λ при t = 0.

    Raises:
        UnsupportedFamilyError: Неизвестное семейство (включая 'bbed').
        SpecParseError: Синтаксическая ошибка или неверные параметры.
    """
    family, values = split_spec(text)
    if family in EXTERNAL_FAMILIES:
        raise UnsupportedFamilyError(f"Unsupported family '{family}': {EXTERNAL_FAMILIES[family]}", text, 0)
    if family not in SCHEDULE_FAMILIES:
        known = ", ".join(sorted(SCHEDULE_FAMILIES))
        raise UnsupportedFamilyError(f"Unsupported family '{family}' (known: {known})", text, 0)
    cls = SCHEDULE_FAMILIES[family]
    _check_keys(text, values, list(cls.spec_keys))

    params: Dict[str, float] = {}
    preset = (presets or {}).get(family)
    if preset and preset != text:
        _, preset_values = split_spec(preset)
        for key, value in preset_values.items():
            if key in cls.spec_keys:
                params[cls.spec_keys[key]] = _float(preset, key, value)
    for key, value in values.items():
        params[cls.spec_keys[key]] = _float(text, key, value)
    missing = [key for key, field in cls.spec_keys.items() if field not in params]
    if missing:
        raise SpecParseError(f"Missing parameter(s) {missing} for '{family}'", text, len(text))
    if lambda_sentinel_sigma is not None:
        params["lambda_sentinel_sigma"] = lambda_sentinel_sigma
    schedule = _validated(text, lambda: cls(**params))
    logger.debug(f"Parsed schedule '{text}' -> {schedule.describe()}")
    return schedule


# --- Сэмплеры ---

SAMPLER_KEYS = {
    SamplerMethod.EULER_MARUYAMA: ["steps", "tend", "pf"],
    SamplerMethod.PREDICTOR_CORRECTOR: ["steps", "tend", "r", "ncorr"],
    SamplerMethod.HEUN_EDM: ["steps", "tend", "churn", "snoise", "smin", "smax"],
}


def parse_sampler_spec(text: str, defaults: Optional[StochasticityParams] = None) -> SamplerConfig:
    """Строка сэмплера -> SamplerConfig (значения по умолчанию берутся из defaults)."""
    family, values = split_spec(text)
    try:
        method = SamplerMethod(family)
    except ValueError:
        known = ", ".join(m.value for m in SamplerMethod)
        raise UnsupportedFamilyError(f"Unsupported sampler '{family}' (known: {known})", text, 0) from None
    _check_keys(text, values, SAMPLER_KEYS[method])

    stochastic = (defaults or StochasticityParams()).model_dump()
    mapping = {"r": "r", "ncorr": "n_corrector", "churn": "s_churn", "snoise": "s_noise", "smin": "s_min", "smax": "s_max"}
    for key, field in mapping.items():
        if key in values:
            stochastic[field] = _int(text, key, values[key]) if key == "ncorr" else _float(text, key, values[key])
    config = {"method": method}
    if "steps" in values:
        config["n_steps"] = _int(text, "steps", values["steps"])
    if "tend" in values:
        config["t_end"] = _float(text, "tend", values["tend"])
    if "pf" in values:
        config["probability_flow"] = _float(text, "pf", values["pf"]) != 0.0
    return _validated(text, lambda: SamplerConfig(stochasticity=StochasticityParams(**stochastic), **config))


# --- Данные ---

DATA_KEYS = {
    "pointmass": ["mu", "dim"],
    "gaussian": ["mu", "sigma", "dim"],
    "mixture": ["w", "mu", "sigma", "dim"],
}


def parse_data_spec(text: str) -> ToyData:
    """
    Строка данных -> ToyData.

    mu задает среднее (через '/' - по координатам; для mixture - по компонентам,
    каждая компонента одномерна и размножается на dim координат).
    """
    family, values = split_spec(text)
    if family not in DATA_KEYS:
        raise UnsupportedFamilyError(f"Unsupported data family '{family}' (known: {', '.join(DATA_KEYS)})", text, 0)
    _check_keys(text, values, DATA_KEYS[family])
    dim = _int(text, "dim", values["dim"]) if "dim" in values else None
    if dim is not None and dim <= 0:
        raise SpecParseError("dim must be positive", text, values["dim"][1])
    mu = _vector(text, "mu", values["mu"]) if "mu" in values else [0.0]

    if family == "mixture":
        weights = _vector(text, "w", values["w"]) if "w" in values else [1.0 / len(mu)] * len(mu)
        sigma = _float(text, "sigma", values["sigma"]) if "sigma" in values else 0.1
        means = [[m] * (dim or 1) for m in mu]
        return _validated(text, lambda: GaussianMixture(weights=weights, means=means, sigma0=sigma))

    if dim is not None and len(mu) == 1:
        mu = mu * dim
    elif dim is not None and len(mu) != dim:
        raise SpecParseError(f"mu has {len(mu)} entries but dim={dim}", text, values["mu"][1])
    if family == "pointmass":
        return _validated(text, lambda: PointMass(mu0=mu))
    sigma = _float(text, "sigma", values["sigma"]) if "sigma" in values else 1.0
    return _validated(text, lambda: IsotropicGaussian(mu0=mu, sigma0=sigma))
