# tests/integration/test_cli.py
import csv
import json

import numpy as np
import pytest

from audio.spectro import N_FFT, Waveform
from audio.wav_io import read_wav, write_wav
from cli.app import main
from cli.reports import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE_ERROR
from config import settings
from tests.conftest import multitone

OUVE = "ouve:smin=0.05,smax=0.5,gamma=1.5"
VE = "ve:smin=0.04,smax=1.7"


def read_report(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def metric_rows(report):
    return {line["name"]: line for line in report if line["type"] == "metric"}


@pytest.fixture
def tone_wav(tmp_path):
    samples = multitone(np.random.default_rng(7))
    return write_wav(tmp_path / "tone.wav", Waveform(samples=samples))


# --- schedule-dump ---

def test_schedule_dump_ouve(tmp_path):
    out = tmp_path / "ouve.csv"
    assert main(["schedule-dump", "--schedule", OUVE, "--n-grid", "101", "--out", str(out)]) == EXIT_OK
    with open(out, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 101
    last = rows[-1]
    assert float(last["t"]) == 1.0
    assert float(last["s"]) == pytest.approx(0.223130, abs=1e-6)
    assert float(last["sigma"]) == pytest.approx(0.388982, abs=1e-6)
    assert float(rows[0]["sigma_hat"]) == 0.0


def test_schedule_dump_ve_to_stdout(capsys):
    assert main(["schedule-dump", "--schedule", VE, "--n-grid", "11"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,f,g,s,sigma_hat,sigma,lambda"
    assert {line.split(",")[3] for line in lines[1:]} == {"1.0"}


def test_schedule_dump_cosine_has_nan_at_zero(tmp_path):
    out = tmp_path / "cosine.csv"
    assert main(["schedule-dump", "--schedule", "cosine", "--n-grid", "5", "--out", str(out)]) == EXIT_OK
    first = out.read_text().splitlines()[1].split(",")
    assert first[1] == "nan" and first[2] == "nan"


def test_schedule_dump_rejects_bbed(capsys):
    assert main(["schedule-dump", "--schedule", "bbed:k=2.6"]) == EXIT_USAGE_ERROR
    assert "unsupported family 'bbed'" in capsys.readouterr().err.lower()


def test_schedule_dump_reports_parse_position(capsys):
    assert main(["schedule-dump", "--schedule", "ve:smin=abc,smax=1.7"]) == EXIT_USAGE_ERROR
    assert "position 8" in capsys.readouterr().err


def test_schedule_dump_uses_configured_lambda_sentinel(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "lambda_sentinel_sigma", 1e-10)
    out = tmp_path / "ve.csv"
    assert main(["schedule-dump", "--schedule", VE, "--n-grid", "3", "--out", str(out)]) == EXIT_OK
    first = out.read_text().splitlines()[1].split(",")
    assert float(first[6]) == pytest.approx(-2.0 * np.log(1e-10))


# --- kernel-check ---

@pytest.mark.parametrize("schedule", [OUVE, "vp:bmin=0.01,bmax=1"])
def test_kernel_check_passes(tmp_path, schedule):
    out = tmp_path / "kernel.jsonl"
    assert main(["kernel-check", "--schedule", schedule, "--tol", "1e-6", "--out", str(out)]) == EXIT_OK
    report = read_report(out)
    assert report[0]["type"] == "metadata" and report[0]["command"] == "kernel-check"
    assert len(metric_rows(report)) == 11
    assert report[-1] == {"type": "summary", "passed": True, "n_rows": 11, "n_failed": 0}


def test_kernel_check_fails_on_unreachable_tolerance(tmp_path):
    out = tmp_path / "kernel.jsonl"
    assert main(["kernel-check", "--schedule", OUVE, "--tol", "1e-16", "--out", str(out)]) == EXIT_CHECK_FAILED
    rows = metric_rows(read_report(out))
    assert not rows["sigma_hat_rel_err_max"]["passed"]
    assert rows["sigma_hat_rel_err_max"]["value"] > 0.0


# --- sample-toy ---

def test_sample_toy_gaussian_heun(tmp_path):
    out = tmp_path / "toy.jsonl"
    code = main(["sample-toy", "--schedule", OUVE, "--sampler", "heun", "--steps", "64", "--churn", "0",
                 "--data", "gaussian:mu=0,sigma=1", "--n", "10000", "--seed", "0", "--out", str(out)])
    assert code == EXIT_OK
    report = read_report(out)
    assert abs(report[0]["empirical_mean"][0]) <= 0.03
    assert 0.95 <= report[0]["empirical_variance"][0] <= 1.05
    assert set(metric_rows(report)) == {"mean_abs_error", "variance_abs_error", "wasserstein1"}


def test_sample_toy_point_mass_single_step(tmp_path):
    out = tmp_path / "pm.jsonl"
    code = main(["sample-toy", "--schedule", OUVE, "--sampler", "heun:steps=1,churn=0",
                 "--data", "pointmass:mu=0.7", "--n", "500", "--out", str(out)])
    assert code == EXIT_OK
    report = read_report(out)
    assert metric_rows(report)["max_abs_deviation"]["value"] == 0.0


def test_sample_toy_same_seed_is_byte_identical(tmp_path):
    args = ["sample-toy", "--schedule", OUVE, "--sampler", "pc", "--steps", "20",
            "--data", "mixture:w=0.5/0.5,mu=-1/1,sigma=0.3", "--n", "2500", "--seed", "11"]
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(args + ["--out", str(first)])
    main(args + ["--out", str(second)])
    assert first.read_bytes() == second.read_bytes()


def test_sample_toy_tolerance_override_fails(tmp_path):
    out = tmp_path / "toy.jsonl"
    code = main(["sample-toy", "--schedule", OUVE, "--steps", "8", "--n", "200", "--tol", "0", "--out", str(out)])
    assert code == EXIT_CHECK_FAILED


def test_sample_toy_invalid_data_spec(capsys):
    assert main(["sample-toy", "--data", "uniform:lo=0"]) == EXIT_USAGE_ERROR
    assert "uniform" in capsys.readouterr().err


# --- audio-demo ---

def test_audio_demo_identity_at_zero(tmp_path, tone_wav):
    out, out_wav, out_csv = tmp_path / "demo.jsonl", tmp_path / "degraded.wav", tmp_path / "energy.csv"
    code = main(["audio-demo", str(tone_wav), "--t", "0", "--schedule", OUVE, "--seed", "1",
                 "--out-wav", str(out_wav), "--out-csv", str(out_csv), "--out", str(out)])
    assert code == EXIT_OK
    rows = metric_rows(read_report(out))
    assert rows["roundtrip_snr_db"]["value"] >= 60.0
    assert rows["snr_degraded_db"]["value"] > 30.0
    original, degraded = read_wav(tone_wav).samples, read_wav(out_wav).samples
    interior = slice(N_FFT, -N_FFT)
    assert np.max(np.abs(original[interior] - degraded[interior])) <= 1.0 / 32768
    header = out_csv.read_text().splitlines()[0]
    assert header == "frame,time_s,energy_input,energy_degraded"


def test_audio_demo_ve_terminal_time_is_heavily_noised(tmp_path, tone_wav):
    out = tmp_path / "demo.jsonl"
    code = main(["audio-demo", str(tone_wav), "--t", "1", "--schedule", VE, "--seed", "1",
                 "--out-wav", str(tmp_path / "noisy.wav"), "--out-spec", str(tmp_path / "spec.npy"),
                 "--out", str(out)])
    assert code == EXIT_OK
    report = read_report(out)
    assert metric_rows(report)["snr_degraded_db"]["value"] < 0.0
    assert report[0]["std"] == pytest.approx(1.699529, abs=1e-6)
    assert np.load(tmp_path / "spec.npy").shape == (report[0]["n_bins"], report[0]["n_frames"])


def test_audio_demo_with_conditioner(tmp_path, tone_wav):
    noisy = read_wav(tone_wav).samples + 0.01 * np.random.default_rng(2).standard_normal(16000)
    conditioner = write_wav(tmp_path / "noisy.wav", Waveform(samples=noisy))
    out = tmp_path / "demo.jsonl"
    code = main(["audio-demo", str(tone_wav), "--t", "1", "--schedule", OUVE, "--conditioner", str(conditioner),
                 "--out-wav", str(tmp_path / "out.wav"), "--out", str(out)])
    assert code == EXIT_OK
    assert {"snr_conditioner_db", "delta_snr_db"} <= set(metric_rows(read_report(out)))


def test_audio_demo_white_noise_passes_round_trip(tmp_path):
    noise = 0.1 * np.random.default_rng(5).standard_normal(16000)
    wav = write_wav(tmp_path / "noise.wav", Waveform(samples=noise))
    out = tmp_path / "demo.jsonl"
    code = main(["audio-demo", str(wav), "--t", "0", "--schedule", OUVE,
                 "--out-wav", str(tmp_path / "out.wav"), "--out", str(out)])
    assert code == EXIT_OK
    rows = metric_rows(read_report(out))
    assert rows["roundtrip_snr_db"]["value"] >= 60.0
    assert rows["nyquist_loss_snr_db"]["check"] == "info"
    assert 28.0 < rows["nyquist_loss_snr_db"]["value"] < 33.0


def test_audio_demo_uses_configured_framing(tmp_path, tone_wav, monkeypatch):
    monkeypatch.setattr(settings, "n_fft", 256)
    monkeypatch.setattr(settings, "hop_length", 64)
    out = tmp_path / "demo.jsonl"
    code = main(["audio-demo", str(tone_wav), "--t", "0.5", "--schedule", OUVE,
                 "--out-wav", str(tmp_path / "out.wav"), "--out", str(out)])
    assert code == EXIT_OK
    metadata = read_report(out)[0]
    assert (metadata["n_fft"], metadata["hop_length"], metadata["n_bins"]) == (256, 64, 128)


def test_audio_demo_rejects_invalid_framing(tmp_path, tone_wav, monkeypatch):
    monkeypatch.setattr(settings, "hop_length", 1024)
    assert main(["audio-demo", str(tone_wav), "--out-wav", str(tmp_path / "x.wav")]) == EXIT_USAGE_ERROR


def test_audio_demo_errors(tmp_path, tone_wav, capsys):
    assert main(["audio-demo", str(tmp_path / "absent.wav"), "--out-wav", str(tmp_path / "x.wav")]) == EXIT_USAGE_ERROR
    assert "absent.wav" in capsys.readouterr().err
    assert main(["audio-demo", str(tone_wav), "--t", "1.5", "--out-wav", str(tmp_path / "x.wav")]) == EXIT_USAGE_ERROR
    short = write_wav(tmp_path / "short.wav", Waveform(samples=np.zeros(8000)))
    assert main(["audio-demo", str(tone_wav), "--conditioner", str(short),
                 "--out-wav", str(tmp_path / "x.wav")]) == EXIT_USAGE_ERROR


# --- loss-check и churn ---

def test_loss_check(tmp_path):
    out = tmp_path / "loss.jsonl"
    assert main(["loss-check", "--schedule", OUVE, "--n", "100", "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert set(metric_rows(read_report(out))) == {"loss_identity_rel_err", "score_identity_rel_err", "edm_weight_abs_err"}


def test_churn_command(tmp_path):
    out = tmp_path / "churn.jsonl"
    assert main(["churn", "--out", str(out)]) == EXIT_OK
    row = metric_rows(read_report(out))["total_churn"]
    assert row["value"] == pytest.approx(26.51, abs=0.05)
    assert row["target"] == 26.5
    assert main(["churn", "--churn", "0", "--out", str(out)]) == EXIT_CHECK_FAILED


# --- Разбор аргументов ---

def test_usage_errors():
    assert main([]) == EXIT_USAGE_ERROR
    assert main(["frobnicate"]) == EXIT_USAGE_ERROR
    assert main(["--help"]) == EXIT_OK
