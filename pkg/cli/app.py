# cli/app.py
"""
Точка входа командной строки.

Коды возврата: 0 - все проверки пройдены, 1 - хотя бы одна проверка не пройдена,
2 - ошибка использования (разбор строк, файлы, параметры).
"""
import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from audio.spectro import StftParams, TransformParams
from cli.commands.audio_demo import cmd_audio_demo
from cli.commands.kernel_check import cmd_kernel_check
from cli.commands.loss_check import cmd_loss_check
from cli.commands.sample_toy import PriorKind, cmd_sample_toy
from cli.commands.schedule_dump import cmd_schedule_dump
from cli.reports import EXIT_OK, EXIT_USAGE_ERROR, Check, ExperimentReport, metric, utc_timestamp
from cli.spec_parser import SpecParseError
from config import settings
from sampling.sampler import StochasticityParams, total_churn

logger = logging.getLogger(__name__)

USAGE_ERRORS = (SpecParseError, ValidationError, ValueError, ZeroDivisionError, OSError)


def _default_schedule() -> str:
    return settings.default_schedule


def _stochasticity(args: argparse.Namespace) -> StochasticityParams:
    values = {
        "r": settings.pc_r,
        "n_corrector": settings.pc_n_corrector,
        "s_noise": settings.s_noise,
        "s_min": settings.s_min,
        "s_max": settings.s_max,
    }
    if getattr(args, "r", None) is not None:
        values["r"] = args.r
    if getattr(args, "churn", None) is not None:
        values["s_churn"] = args.churn
    return StochasticityParams(**values)


def _sampler_spec(args: argparse.Namespace) -> str:
    # --steps дописывается к строке сэмплера, если в ней нет ключа steps
    spec = args.sampler
    if args.steps is not None and "steps=" not in spec:
        spec = f"{spec}{',' if ':' in spec else ':'}steps={args.steps}"
    return spec


# --- Обработчики подкоманд ---

def _run_schedule_dump(args: argparse.Namespace) -> Optional[ExperimentReport]:
    cmd_schedule_dump(args.schedule, args.n_grid, args.out, settings.schedule_presets,
                      lambda_sentinel_sigma=settings.lambda_sentinel_sigma)
    return None


def _run_kernel_check(args: argparse.Namespace) -> ExperimentReport:
    return cmd_kernel_check(args.schedule, args.n_quadrature or settings.quadrature_points, args.tol,
                            settings.schedule_presets)


def _run_sample_toy(args: argparse.Namespace) -> ExperimentReport:
    return cmd_sample_toy(
        args.schedule,
        _sampler_spec(args),
        args.data,
        n_samples=args.n,
        seed=args.seed,
        prior=args.prior,
        tol=args.tol,
        presets=settings.schedule_presets,
        stochasticity=_stochasticity(args),
        chunk_size=settings.sample_chunk_size,
        max_workers=settings.max_workers,
    )


def _run_audio_demo(args: argparse.Namespace) -> ExperimentReport:
    return cmd_audio_demo(
        args.input,
        args.t,
        args.schedule,
        args.seed,
        args.out_wav,
        out_csv=args.out_csv,
        conditioner_wav=args.conditioner,
        out_spec=args.out_spec,
        presets=settings.schedule_presets,
        params=TransformParams(amp_scale=settings.amp_scale, exponent=settings.amp_exponent),
        snr_cap_db=settings.snr_cap_db,
        framing=StftParams(sample_rate=settings.sample_rate, n_fft=settings.n_fft, hop_length=settings.hop_length),
    )


def _run_loss_check(args: argparse.Namespace) -> ExperimentReport:
    return cmd_loss_check(args.schedule, args.n, args.seed, args.tol, settings.sigma_data,
                          t_eps=settings.t_eps, presets=settings.schedule_presets)


def _run_churn(args: argparse.Namespace) -> ExperimentReport:
    params = _stochasticity(args)
    report = ExperimentReport(command="churn", metadata={"n_steps": args.steps, "s_churn": params.s_churn})
    report.add(metric("total_churn", total_churn(params, args.steps), args.tol, Check.ABS, target=args.target))
    return report


HANDLERS: Dict[str, Callable[[argparse.Namespace], Optional[ExperimentReport]]] = {
    "schedule-dump": _run_schedule_dump,
    "kernel-check": _run_kernel_check,
    "sample-toy": _run_sample_toy,
    "audio-demo": _run_audio_demo,
    "loss-check": _run_loss_check,
    "churn": _run_churn,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftdiff",
        description="Shifted-SDE diffusion toolkit: schedules, kernels, samplers, preconditioning checks",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_dump = sub.add_parser("schedule-dump", help="Write t, f, g, s, sigma_hat, sigma, lambda as CSV")
    p_dump.add_argument("--schedule", type=str, default=_default_schedule(), help="family:key=value,...")
    p_dump.add_argument("--n-grid", dest="n_grid", type=int, default=101, help="Grid points on [0, 1]")
    p_dump.add_argument("--out", type=str, default=None, help="CSV path (default: stdout)")

    p_kernel = sub.add_parser("kernel-check", help="Closed-form sigma_hat vs quadrature on t = 0.1..1.0")
    p_kernel.add_argument("--schedule", type=str, default=_default_schedule())
    p_kernel.add_argument("--n-quadrature", dest="n_quadrature", type=int, default=None)
    p_kernel.add_argument("--tol", type=float, default=1e-6, help="Max relative error")
    p_kernel.add_argument("--out", type=str, default=None, help="JSONL report path (default: stdout)")

    p_toy = sub.add_parser("sample-toy", help="Sample a toy distribution with the oracle denoiser")
    p_toy.add_argument("--schedule", type=str, default=_default_schedule())
    p_toy.add_argument("--sampler", type=str, default="heun", help="em|pc|heun[:key=value,...]")
    p_toy.add_argument("--steps", type=int, default=None, help="Number of steps (if not in --sampler)")
    p_toy.add_argument("--churn", type=float, default=None, help="S_churn for the Heun sampler")
    p_toy.add_argument("--r", type=float, default=None, help="Corrector step size r for PC")
    p_toy.add_argument("--data", type=str, default="gaussian:mu=0,sigma=1", help="pointmass|gaussian|mixture:...")
    p_toy.add_argument("--n", type=int, default=10000, help="Number of samples")
    p_toy.add_argument("--seed", type=int, default=0)
    p_toy.add_argument("--prior", choices=[p.value for p in PriorKind], default=PriorKind.EXACT.value)
    p_toy.add_argument("--tol", type=float, default=None, help="Override all row tolerances")
    p_toy.add_argument("--out", type=str, default=None)

    p_audio = sub.add_parser("audio-demo", help="Forward-process degradation of a WAV file")
    p_audio.add_argument("input", type=str, help="16 kHz mono WAV")
    p_audio.add_argument("--t", type=float, default=0.5, help="Diffusion time in [0, 1]")
    p_audio.add_argument("--schedule", type=str, default=_default_schedule())
    p_audio.add_argument("--seed", type=int, default=0)
    p_audio.add_argument("--conditioner", type=str, default=None, help="Second WAV used as y")
    p_audio.add_argument("--out-wav", dest="out_wav", type=str, required=True)
    p_audio.add_argument("--out-csv", dest="out_csv", type=str, default=None, help="Per-frame energy CSV")
    p_audio.add_argument("--out-spec", dest="out_spec", type=str, default=None, help="Spectrogram dump (.npy or CSV)")
    p_audio.add_argument("--out", type=str, default=None)

    p_loss = sub.add_parser("loss-check", help="Loss and preconditioning identities on random affine networks")
    p_loss.add_argument("--schedule", type=str, default=_default_schedule())
    p_loss.add_argument("--n", type=int, default=1000, help="Number of random draws")
    p_loss.add_argument("--seed", type=int, default=0)
    p_loss.add_argument("--tol", type=float, default=1e-10)
    p_loss.add_argument("--out", type=str, default=None)

    p_churn = sub.add_parser("churn", help="Effective total churn n_steps * min(S_churn/n_steps, sqrt(2)-1)")
    p_churn.add_argument("--steps", type=int, default=64)
    p_churn.add_argument("--churn", type=float, default=float("inf"))
    p_churn.add_argument("--target", type=float, default=26.5)
    p_churn.add_argument("--tol", type=float, default=0.05)
    p_churn.add_argument("--out", type=str, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Разбирает аргументы, выполняет подкоманду и возвращает код выхода."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE_ERROR

    started_at = utc_timestamp() if settings.report_timestamps else None
    try:
        report = HANDLERS[args.cmd](args)
    except USAGE_ERRORS as e:
        logger.error(f"{args.cmd} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR
    except Exception as e:
        logger.critical(f"Unexpected error in {args.cmd}: {e}", exc_info=True)
        print(f"error: unexpected failure in {args.cmd}: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR

    if report is None:
        return EXIT_OK
    if started_at is not None:
        report.started_at = started_at
        report.finished_at = utc_timestamp()
    report.write(args.out)
    logger.info(f"{args.cmd}: {'all checks passed' if report.passed else 'some checks failed'}")
    return report.exit_code()
