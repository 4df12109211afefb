# audio/wav_io.py
import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile

from audio.spectro import SAMPLE_RATE, Spectrogram, Waveform

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0


def read_wav(path: Union[str, Path], sample_rate: int = SAMPLE_RATE) -> Waveform:
    """
    Читает 16-битный PCM моно WAV в Waveform с амплитудой в [-1, 1).
    Частота файла должна совпадать с sample_rate (по умолчанию 16 кГц).

    Raises:
        FileNotFoundError: Файл отсутствует.
        ValueError: Не моно, другая частота или неподдерживаемый формат отсчетов.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"WAV file not found: {path}")
    rate, data = wavfile.read(path)
    if rate != sample_rate:
        raise ValueError(f"{path}: expected {sample_rate} Hz audio, got {rate} Hz")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM_SCALE
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    logger.debug(f"Read {samples.shape[0]} samples at {rate} Hz from {path}")
    return Waveform(samples=samples, sample_rate=rate)


def write_wav(path: Union[str, Path], waveform: Waveform) -> Path:
    """Пишет 16-битный PCM моно WAV; отсчеты за пределами [-1, 1] обрезаются."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(waveform.samples, -1.0, 1.0)
    n_clipped = int(np.sum(np.abs(waveform.samples) > 1.0))
    if n_clipped:
        logger.warning(f"Clipped {n_clipped} samples outside [-1, 1] while writing {path}")
    pcm = np.clip(np.round(clipped * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)
    wavfile.write(path, waveform.sample_rate, pcm)
    logger.debug(f"Wrote {pcm.shape[0]} samples to {path}")
    return path


def write_spectrogram(path: Union[str, Path], spec: Spectrogram) -> Path:
    """
    Сохраняет коэффициенты спектрограммы.

    Суффикс .npy - бинарный массив K×T complex128 (numpy), иначе CSV
    с колонками frame, bin, re, im.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        np.save(path, spec.coefficients)
    else:
        bins, frames = np.meshgrid(np.arange(spec.n_bins), np.arange(spec.n_frames), indexing="ij")
        table = np.column_stack([
            frames.ravel(), bins.ravel(), spec.coefficients.real.ravel(), spec.coefficients.imag.ravel()
        ])
        order = np.lexsort((table[:, 1], table[:, 0]))
        np.savetxt(path, table[order], delimiter=",", header="frame,bin,re,im", comments="",
                   fmt=["%d", "%d", "%.17g", "%.17g"])
    logger.debug(f"Wrote {spec.n_bins}x{spec.n_frames} spectrogram to {path}")
    return path
