# cli/commands/audio_demo.py
"""
Прямой процесс на реальном аудио: STFT -> сжатие амплитуды -> сэмпл ядра
в момент t -> обратное сжатие -> ISTFT.
"""
import csv
import logging
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from audio.spectro import (
    Spectrogram,
    StftParams,
    TransformParams,
    Waveform,
    compress,
    decompress,
    frame_energy,
    from_state_vector,
    istft,
    nyquist_residual,
    padded_for_stft,
    snr_db,
    snr_improvement,
    stft,
    to_state_vector,
)
from audio.wav_io import read_wav, write_spectrogram, write_wav
from cli.reports import Check, ExperimentReport, metric
from cli.spec_parser import parse_schedule_spec
from sde.kernel import kernel_params, sample_kernel
from services.output_paths import ensure_parent_dir
from utils.converters import format_number
from utils.helpers import check_time, make_rng

logger = logging.getLogger(__name__)

ROUNDTRIP_MIN_SNR_DB = 60.0

PathLike = Union[str, Path]


def _analyse(samples: np.ndarray, params: TransformParams, framing: StftParams) -> Tuple[Spectrogram, np.ndarray, int]:
    """Спектрограмма (сжатая), дополненный сигнал и смещение исходного сигнала в нем."""
    padded, offset = padded_for_stft(samples, framing.n_fft, framing.hop_length)
    spec = stft(Waveform(samples=padded, sample_rate=framing.sample_rate), framing.n_fft, framing.hop_length)
    return compress(spec, params), padded, offset


def _synthesise(spec: Spectrogram, params: TransformParams, framing: StftParams, offset: int, length: int) -> Waveform:
    full_length = framing.n_fft + framing.hop_length * (spec.n_frames - 1)
    wave = istft(decompress(spec, params), framing.n_fft, framing.hop_length, length=full_length)
    return Waveform(samples=wave.samples[offset:offset + length], sample_rate=framing.sample_rate)


def _nyquist_part(padded: np.ndarray, framing: StftParams, offset: int, length: int) -> np.ndarray:
    residual = nyquist_residual(Waveform(samples=padded, sample_rate=framing.sample_rate),
                                framing.n_fft, framing.hop_length)
    return residual.samples[offset:offset + length]


def _write_energy_csv(path: PathLike, clean: Spectrogram, degraded: Spectrogram, framing: StftParams) -> Path:
    path = ensure_parent_dir(path)
    clean_energy = frame_energy(clean)
    degraded_energy = frame_energy(degraded)
    frame_seconds = framing.hop_length / framing.sample_rate
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("frame", "time_s", "energy_input", "energy_degraded"))
        for j, (e_in, e_out) in enumerate(zip(clean_energy, degraded_energy)):
            writer.writerow((j, format_number(j * frame_seconds), format_number(e_in), format_number(e_out)))
    return path


def cmd_audio_demo(
    in_wav: PathLike,
    t: float,
    schedule_spec: str,
    seed: Optional[int],
    out_wav: PathLike,
    out_csv: Optional[PathLike] = None,
    conditioner_wav: Optional[PathLike] = None,
    out_spec: Optional[PathLike] = None,
    presets: Optional[Mapping[str, str]] = None,
    params: TransformParams = TransformParams(),
    snr_cap_db: float = 100.0,
    framing: StftParams = StftParams(),
) -> ExperimentReport:
    """
    Зашумляет аудио ядром возмущения в момент t и пишет результат.

    Args:
        in_wav: Исходный моно WAV (x0) с частотой framing.sample_rate.
        t: Время диффузии в [0, 1].
        schedule_spec: Строка расписания.
        seed: Seed шума ядра.
        out_wav: Куда записать зашумленный сигнал.
        out_csv: CSV энергии по кадрам (необязательно).
        conditioner_wav: Второй WAV в роли y; по умолчанию y = x0.
        out_spec: Дамп сжатой зашумленной спектрограммы (.npy или CSV).
        framing: Частота, длина кадра и шаг STFT.

    Returns:
        ExperimentReport:
            roundtrip_snr_db (проверка) - точность STFT/ISTFT с учетом отброшенного
            Nyquist-бина: вход сравнивается с ISTFT + Nyquist-остаток;
            nyquist_loss_snr_db (INFO) - SNR самого ISTFT(STFT(x)) относительно входа,
            для широкополосного сигнала около 30 дБ;
            snr_degraded_db и, при заданном conditioner_wav, snr_conditioner_db, delta_snr_db.

    Raises:
        FileNotFoundError: Нет входного файла.
        ValueError: Неверный формат, t вне [0, 1], разные длины сигнала и y,
            нулевая энергия входа.
    """
    t = float(check_time(t))
    schedule = parse_schedule_spec(schedule_spec, presets)
    clean = read_wav(in_wav, framing.sample_rate)
    conditioner = read_wav(conditioner_wav, framing.sample_rate) if conditioner_wav is not None else clean
    if len(conditioner) != len(clean):
        raise ValueError(f"Length mismatch between signal ({len(clean)}) and conditioner ({len(conditioner)}) samples")
    if not np.any(clean.samples):
        raise ValueError(f"{in_wav}: input signal has zero energy")
    logger.info(f"audio-demo: {in_wav} ({len(clean)} samples), t={t}, {schedule.describe()}, seed={seed}")

    n = len(clean)
    x0_spec, padded, offset = _analyse(clean.samples, params, framing)
    y_spec, _, _ = _analyse(conditioner.samples, params, framing)
    roundtrip = _synthesise(x0_spec, params, framing, offset, n)
    lossless = roundtrip.samples + _nyquist_part(padded, framing, offset, n)

    kernel = kernel_params(schedule, t)
    x_t = sample_kernel(to_state_vector(x0_spec), to_state_vector(y_spec), kernel, make_rng(seed), complex_valued=True)
    degraded_spec = from_state_vector(x_t, x0_spec.n_bins, x0_spec.n_frames, compressed=True)
    degraded = _synthesise(degraded_spec, params, framing, offset, n)

    report = ExperimentReport(
        command="audio-demo",
        metadata={
            "seed": seed,
            "schedule": schedule.describe(),
            "t": t,
            "input": str(in_wav),
            "conditioner": str(conditioner_wav) if conditioner_wav is not None else None,
            "mean_scale": kernel.mean_scale,
            "std": kernel.std,
            "sample_rate": framing.sample_rate,
            "n_fft": framing.n_fft,
            "hop_length": framing.hop_length,
            "n_bins": x0_spec.n_bins,
            "n_frames": x0_spec.n_frames,
        },
    )
    report.add(metric("roundtrip_snr_db", snr_db(clean.samples, lossless, snr_cap_db),
                      ROUNDTRIP_MIN_SNR_DB, Check.MIN))
    report.add(metric("nyquist_loss_snr_db", snr_db(clean.samples, roundtrip.samples, snr_cap_db),
                      snr_cap_db, Check.INFO))
    report.add(metric("snr_degraded_db", snr_db(clean.samples, degraded.samples, snr_cap_db), snr_cap_db, Check.INFO))
    if conditioner_wav is not None:
        report.add(metric("snr_conditioner_db", snr_db(clean.samples, conditioner.samples, snr_cap_db),
                          snr_cap_db, Check.INFO))
        report.add(metric("delta_snr_db", snr_improvement(clean, conditioner, degraded, snr_cap_db),
                          snr_cap_db, Check.INFO))

    report.metadata["out_wav"] = str(write_wav(out_wav, degraded))
    if out_csv is not None:
        report.metadata["out_csv"] = str(_write_energy_csv(out_csv, decompress(x0_spec, params),
                                                           decompress(degraded_spec, params), framing))
    if out_spec is not None:
        report.metadata["out_spec"] = str(write_spectrogram(out_spec, degraded_spec))
    logger.info(f"audio-demo: wrote {report.metadata['out_wav']}")
    return report
