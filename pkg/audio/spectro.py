# audio/spectro.py
"""
STFT-анализ и синтез с амплитудным сжатием коэффициентов.

Параметры по умолчанию: 16 кГц, кадр 512, шаг 128, периодическое окно Ханна,
Nyquist-бин отбрасывается (K = 256).
"""
import logging
import math
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.signal import get_window

from utils.helpers import make_rng

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
N_FFT = 512
HOP_LENGTH = 128


class Waveform(BaseModel):
    """Моно-сигнал с амплитудой в [-1, 1]; частота проверяется при чтении WAV."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: np.ndarray
    sample_rate: int = Field(default=SAMPLE_RATE, gt=0)

    @field_validator("samples", mode="before")
    @classmethod
    def to_float_vector(cls, value) -> np.ndarray:
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"Waveform must be mono (1-D), got shape {arr.shape}")
        return arr

    def __len__(self) -> int:
        return int(self.samples.shape[0])


class Spectrogram(BaseModel):
    """Комплексные коэффициенты K×T; compressed - применено ли амплитудное сжатие."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray
    compressed: bool = False

    @field_validator("coefficients", mode="before")
    @classmethod
    def to_complex_matrix(cls, value) -> np.ndarray:
        arr = np.asarray(value, dtype=np.complex128)
        if arr.ndim != 2:
            raise ValueError(f"Spectrogram must be a K x T matrix, got shape {arr.shape}")
        return arr

    @property
    def n_bins(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def n_frames(self) -> int:
        return int(self.coefficients.shape[1])


class TransformParams(BaseModel):
    """c̃ = A·|c|^α·e^{i∠c}."""
    model_config = ConfigDict(frozen=True)

    amp_scale: float = Field(default=0.15, gt=0)
    exponent: float = Field(default=0.5, gt=0, le=1)


class StftParams(BaseModel):
    """Частота дискретизации, длина кадра и шаг STFT."""
    model_config = ConfigDict(frozen=True)

    sample_rate: int = Field(default=SAMPLE_RATE, gt=0)
    n_fft: int = Field(default=N_FFT, gt=0)
    hop_length: int = Field(default=HOP_LENGTH, gt=0)

    @model_validator(mode="after")
    def check_framing(self) -> "StftParams":
        if self.n_fft % 2:
            raise ValueError(f"n_fft must be even, got {self.n_fft}")
        if self.hop_length > self.n_fft:
            raise ValueError(f"hop_length ({self.hop_length}) must not exceed n_fft ({self.n_fft})")
        return self

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2


@lru_cache(maxsize=4)
def hann_window(n_fft: int = N_FFT) -> np.ndarray:
    """Периодическое окно Ханна (fftbins=True)."""
    return get_window("hann", n_fft, fftbins=True)


# --- Анализ / синтез ---

def stft(w: Waveform, n_fft: int = N_FFT, hop_length: int = HOP_LENGTH) -> Spectrogram:
    """
    Кадры без дополнения нулями: кадр j начинается с отсчета j·hop_length.

    Raises:
        ValueError: Если сигнал короче n_fft.
    """
    x = w.samples
    if x.shape[0] < n_fft:
        raise ValueError(f"Signal too short for STFT: {x.shape[0]} < {n_fft} samples")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop_length]
    spectrum = np.fft.rfft(frames * hann_window(n_fft), axis=-1)
    # Nyquist отбрасываем: n_fft/2 + 1 -> n_fft/2 бинов
    return Spectrogram(coefficients=spectrum[:, : n_fft // 2].T, compressed=False)


def _overlap_add(frames: np.ndarray, window: np.ndarray, hop_length: int, length: Optional[int]) -> Waveform:
    """Overlap-add кадров, уже умноженных на синтезирующее окно, с нормировкой на Σ w²."""
    n_frames, n_fft = frames.shape
    out_len = n_fft + hop_length * (n_frames - 1)
    signal = np.zeros(out_len)
    norm = np.zeros(out_len)
    for j in range(n_frames):
        start = j * hop_length
        signal[start:start + n_fft] += frames[j]
        norm[start:start + n_fft] += window ** 2
    nonzero = norm > 1e-10
    signal[nonzero] /= norm[nonzero]
    if length is not None:
        signal = np.pad(signal, (0, max(0, length - out_len)))[:length]
    return Waveform(samples=signal)


def istft(
    spec: Spectrogram,
    n_fft: int = N_FFT,
    hop_length: int = HOP_LENGTH,
    length: Optional[int] = None,
) -> Waveform:
    """
    Взвешенное overlap-add с нормировкой на сумму квадратов окна.
    Перед обратным преобразованием добавляется нулевой Nyquist-бин.
    """
    if spec.compressed:
        raise ValueError("istft needs an uncompressed spectrogram; call decompress() first")
    if spec.n_bins != n_fft // 2:
        raise ValueError(f"Expected {n_fft // 2} frequency bins, got {spec.n_bins}")
    window = hann_window(n_fft)
    full = np.vstack([spec.coefficients, np.zeros((1, spec.n_frames), dtype=np.complex128)])
    frames = np.fft.irfft(full.T, n=n_fft, axis=-1) * window
    return _overlap_add(frames, window, hop_length, length)


def nyquist_residual(w: Waveform, n_fft: int = N_FFT, hop_length: int = HOP_LENGTH) -> Waveform:
    """
    Часть сигнала, которую уносит отброшенный Nyquist-бин.

    istft(stft(w)) + nyquist_residual(w) == w на всех отсчетах, покрытых кадрами.
    Для сигнала из тонов на частотах бинов остаток равен нулю, для белого шума
    при кадре 512 / шаге 128 его доля мощности ≈ 9.4e-4 (≈ 30.3 дБ).
    """
    x = w.samples
    if x.shape[0] < n_fft:
        raise ValueError(f"Signal too short for STFT: {x.shape[0]} < {n_fft} samples")
    window = hann_window(n_fft)
    alternating = np.where(np.arange(n_fft) % 2 == 0, 1.0, -1.0)
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop_length]
    # вещественный коэффициент Nyquist-бина каждого кадра
    c_nyquist = (frames * window) @ alternating
    residual_frames = np.outer(c_nyquist / n_fft, alternating) * window
    return _overlap_add(residual_frames, window, hop_length, None)


def padded_for_stft(x: np.ndarray, n_fft: int = N_FFT, hop_length: int = HOP_LENGTH) -> Tuple[np.ndarray, int]:
    """
    Дополняет сигнал нулями (n_fft слева и не меньше n_fft справа), чтобы каждый
    исходный отсчет попал во внутреннюю область полного перекрытия.

    Returns:
        (дополненный сигнал, смещение начала исходного сигнала)
    """
    total = x.shape[0] + 2 * n_fft
    tail = (-(total - n_fft)) % hop_length
    return np.pad(x, (n_fft, n_fft + tail)), n_fft


# --- Амплитудное сжатие ---

def compress(spec: Spectrogram, params: TransformParams = TransformParams()) -> Spectrogram:
    if spec.compressed:
        raise ValueError("Spectrogram is already compressed")
    c = spec.coefficients
    out = params.amp_scale * np.abs(c) ** params.exponent * np.exp(1j * np.angle(c))
    return Spectrogram(coefficients=out, compressed=True)


def decompress(spec: Spectrogram, params: TransformParams = TransformParams()) -> Spectrogram:
    if not spec.compressed:
        raise ValueError("Spectrogram is not compressed")
    c = spec.coefficients
    out = (np.abs(c) / params.amp_scale) ** (1.0 / params.exponent) * np.exp(1j * np.angle(c))
    return Spectrogram(coefficients=out, compressed=False)


def complex_noise(
    shape: Tuple[int, ...], rng: Optional[Union[int, np.random.Generator]] = None
) -> np.ndarray:
    """Круговой комплексный гауссов шум: Re, Im ~ N(0, 1/2) независимо, E|z|² = 1."""
    gen = make_rng(rng)
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / math.sqrt(2.0)


# --- Представление в виде вещественного вектора ---

def to_state_vector(spec: Spectrogram) -> np.ndarray:
    """K×T комплексных коэффициентов -> 2·K·T вещественных (re, im чередуются)."""
    c = spec.coefficients
    return np.stack([c.real, c.imag], axis=-1).reshape(-1)


def from_state_vector(values: np.ndarray, n_bins: int, n_frames: int, compressed: bool = False) -> Spectrogram:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (2 * n_bins * n_frames,):
        raise ValueError(f"Expected {2 * n_bins * n_frames} reals, got shape {values.shape}")
    pairs = values.reshape(n_bins, n_frames, 2)
    return Spectrogram(coefficients=pairs[..., 0] + 1j * pairs[..., 1], compressed=compressed)


def frame_energy(spec: Spectrogram) -> np.ndarray:
    """Энергия Σ_k |c_k|² каждого кадра."""
    return np.sum(np.abs(spec.coefficients) ** 2, axis=0)


# --- Метрики ---

def snr_db(reference: np.ndarray, signal: np.ndarray, cap_db: float = 100.0) -> float:
    """
    SNR = 10·log10(‖ref‖²/‖ref - sig‖²), ограниченный [-cap_db, cap_db].

    Raises:
        ValueError: Нулевая энергия опорного сигнала или разные длины.
    """
    reference = np.asarray(reference, dtype=np.float64)
    signal = np.asarray(signal, dtype=np.float64)
    if reference.shape != signal.shape:
        raise ValueError(f"Length mismatch: {reference.shape} vs {signal.shape}")
    ref_energy = float(np.sum(reference ** 2))
    if ref_energy == 0.0:
        raise ValueError("Reference signal has zero energy")
    err_energy = float(np.sum((reference - signal) ** 2))
    if err_energy == 0.0:
        return cap_db
    return float(np.clip(10.0 * math.log10(ref_energy / err_energy), -cap_db, cap_db))


def snr_improvement(reference: Waveform, noisy: Waveform, enhanced: Waveform, cap_db: float = 100.0) -> float:
    """ΔSNR = SNR(enhanced) - SNR(noisy) относительно reference, в дБ."""
    return (snr_db(reference.samples, enhanced.samples, cap_db)
            - snr_db(reference.samples, noisy.samples, cap_db))
