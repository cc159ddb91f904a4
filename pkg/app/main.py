# Copyright 2024
# Directory: ContourMARL/app/main.py

"""
Command-line interface: corpus generation, training, evaluation,
gradient checking and the point-count / iteration sweep.
"""

import argparse
import csv
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .core.config import SacConfig, dump_config, get_settings, parse_overrides, resolve_sac_config
from .core.errors import (
    CheckpointError,
    ConfigError,
    CorpusError,
    GradCheckFailure,
    NonFiniteLossError,
    NonFiniteParameterError,
)
from .data.defaults import SENSITIVITY_LEVELS
from .models.entities import MetricReport
from .models.requests import EvalRequest, GenRequest, GradcheckRequest, SweepRequest, TrainRequest
from .models.responses import EvalRow, GradcheckRow, RunInfo, SensitivityRow, SweepRow
from .services import gradcheck, sac, synthdata
from .services.supervised import SupervisedTrainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NAN = 4
EXIT_CHECKPOINT = 5
EXIT_GRADCHECK = 6

RESOLVED_CONFIG_NAME = "config.resolved.cfg"
RUN_INFO_NAME = "run_info.json"

stderr_console = Console(stderr=True)


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(name)s: %(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=stderr_console, show_path=False, rich_tracebacks=False)],
        force=True,
    )


# ---------------------------------------------------------------- helpers

def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _resolve_config(config_path: Optional[Path], pairs: Sequence[str], seed: Optional[int] = None,
                    **flags) -> SacConfig:
    """defaults < file < CONTOUR_MARL_SEED < --set < dedicated flags."""
    settings = get_settings()
    overrides: Dict[str, object] = dict(parse_overrides(pairs))
    if seed is not None:
        overrides["seed"] = seed
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return resolve_sac_config(config_path, overrides, env_seed=settings.seed)


def write_run_files(out_dir: Path, config: Optional[SacConfig], info: RunInfo) -> None:
    """config.resolved.cfg (replayable) and run_info.json (timestamps) in out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if config is not None:
        (out_dir / RESOLVED_CONFIG_NAME).write_text(dump_config(config), encoding="utf-8")
    (out_dir / RUN_INFO_NAME).write_text(info.model_dump_json(indent=2), encoding="utf-8")


def _emit_csv(columns: List[str], rows: Iterable[List[str]]) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    sys.stdout.flush()


def _metrics_table(title: str, columns: List[str], rows: Iterable[List[str]]) -> None:
    table = Table(title=title)
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(*[_short(v) for v in row])
    stderr_console.print(table)


def _short(value: str) -> str:
    try:
        return f"{float(value):.4f}" if "." in value or "e" in value else value
    except ValueError:
        return value


def _eval_row(report: MetricReport) -> EvalRow:
    return EvalRow(miou=report.miou, mdice=report.mdice, mboundf=report.mboundf,
                   entries=len(report.per_object))


def _load_samples(corpus: Path, split: str) -> List[synthdata.CorpusSample]:
    samples = synthdata.load_split(corpus, None if split == "all" else split)
    if not samples:
        raise CorpusError(f"corpus {corpus} has no entries in split {split!r}")
    return samples


# ---------------------------------------------------------------- commands

def cmd_gen(args: argparse.Namespace) -> int:
    request = GenRequest(count=args.count, size=args.size, seed=args.seed, out=args.out,
                         kinds=args.kinds, noise_sigma=args.noise_sigma,
                         blur_radius=args.blur_radius, workers=args.workers)
    started = _now()
    manifest = synthdata.build_corpus(
        request.count, request.out, size=request.size, seed=request.seed, kinds=request.kinds,
        noise_sigma=request.noise_sigma, blur_radius=request.blur_radius, workers=request.workers,
    )
    write_run_files(request.out, None, RunInfo(command="gen", started_at=started, finished_at=_now(),
                                                argv=sys.argv[1:], exit_code=EXIT_OK,
                                                environment=get_settings().environment))
    print(manifest)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    request = TrainRequest(corpus=args.corpus, out=args.out, config=args.config, mode=args.mode,
                           resume=args.resume, overrides=args.set or [], epochs=args.epochs,
                           lr=args.lr, workers=args.workers, seed=args.seed)
    config = _resolve_config(request.config, request.overrides, seed=request.seed,
                             epochs=request.epochs, lr=request.lr, workers=request.workers)
    samples = _load_samples(request.corpus, "train")
    info = RunInfo(command=f"train:{request.mode}", started_at=_now(), argv=sys.argv[1:],
                   environment=get_settings().environment)
    write_run_files(request.out, config, info)

    trainer_cls = SupervisedTrainer if request.mode == "supervised" else sac.SacTrainer
    trainer = trainer_cls(config, samples, request.out)
    logger.info(f"Training ({request.mode}) on {len(samples)} shapes for {config.epochs} epochs")
    try:
        latest = trainer.train(resume=request.resume)
    except (NonFiniteLossError, NonFiniteParameterError):
        write_run_files(request.out, None, info.model_copy(update={"finished_at": _now(), "exit_code": EXIT_NAN}))
        raise
    write_run_files(request.out, None, info.model_copy(update={"finished_at": _now(), "exit_code": EXIT_OK}))
    print(latest)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    request = EvalRequest(checkpoint=args.checkpoint, corpus=args.corpus, config=args.config,
                          overrides=args.set or [], split=args.split, horizon=args.horizon,
                          points=args.points, shift_frac=args.shift_frac, scale_frac=args.scale_frac,
                          trace=args.trace, sensitivity=args.sensitivity, baseline=args.baseline,
                          per_object=args.per_object, seed=args.seed)
    config = _resolve_config(request.config, request.overrides, seed=request.seed)
    samples = _load_samples(request.corpus, request.split)
    if request.trace is not None:
        write_run_files(request.trace, config, RunInfo(command="eval", started_at=_now(), argv=sys.argv[1:],
                                                       environment=get_settings().environment))

    if request.baseline:
        perturb = sac.Perturbation(request.shift_frac, request.scale_frac)
        report = sac.baseline_report(samples, config, perturb=perturb)
        _emit_report(report, request.per_object, "Octagon baseline")
        return EXIT_OK

    actor, _, config = sac.load_networks(request.checkpoint, config)
    expected = sac.grid_state_dim(samples, config)
    if expected != actor.state_dim:
        raise CheckpointError(f"checkpoint expects state_dim {actor.state_dim}, corpus gives {expected}")

    if request.sensitivity:
        rows: List[SensitivityRow] = []
        reference: Optional[float] = None
        for shift, scale in SENSITIVITY_LEVELS:
            report = sac.evaluate_actor(actor, config, samples, horizon=request.horizon, n_points=request.points,
                                        perturb=sac.Perturbation(shift, scale))
            reference = report.mdice if reference is None else reference
            rows.append(SensitivityRow(shift_frac=shift, scale_frac=scale, mdice_drop=reference - report.mdice,
                                       **_eval_row(report).model_dump()))
        _emit_csv(SensitivityRow.columns, [r.csv_row() for r in rows])
        _metrics_table("Sensitivity to box errors", SensitivityRow.columns, [r.csv_row() for r in rows])
        return EXIT_OK

    report = sac.evaluate_actor(actor, config, samples, horizon=request.horizon, n_points=request.points,
                                perturb=sac.Perturbation(request.shift_frac, request.scale_frac),
                                trace_dir=request.trace)
    _emit_report(report, request.per_object, f"Evaluation of {request.checkpoint.name}")
    return EXIT_OK


def _emit_report(report: MetricReport, per_object: bool, title: str) -> None:
    if per_object:
        _emit_csv(["object", "iou", "dice", "boundf"], report.csv_rows())
    else:
        row = _eval_row(report)
        _emit_csv(EvalRow.columns, [row.csv_row()])
    _metrics_table(title, EvalRow.columns, [_eval_row(report).csv_row()])


def cmd_gradcheck(args: argparse.Namespace) -> int:
    request = GradcheckRequest(eps=args.eps, trials=args.trials, threshold=args.threshold, seed=args.seed,
                               blocks=args.blocks or [], max_entries=args.max_entries)
    results = gradcheck.run_suite(eps=request.eps, trials=request.trials, seed=request.seed,
                                  threshold=request.threshold, blocks=request.blocks or None,
                                  max_entries=request.max_entries or None)
    rows = [GradcheckRow(name=r.name, max_rel_error=r.max_rel_error, trials=r.trials, passed=r.passed)
            for r in results]

    table = Table(title=f"Gradient check (eps={request.eps:g}, threshold={request.threshold:g})")
    table.add_column("block")
    table.add_column("max rel. error", justify="right")
    table.add_column("trials", justify="right")
    table.add_column("status")
    for row in rows:
        status = "[green]ok[/green]" if row.passed else "[red]FAIL[/red]"
        table.add_row(row.name, f"{row.max_rel_error:.3e}", str(row.trials), status)
    stderr_console.print(table)
    _emit_csv(["block", "max_rel_error", "trials", "passed"],
              [[r.name, repr(float(r.max_rel_error)), str(r.trials), str(r.passed).lower()] for r in rows])

    failing = [r.name for r in rows if not r.passed]
    if failing:
        raise GradCheckFailure(failing)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    request = SweepRequest(checkpoint=args.checkpoint, corpus=args.corpus, config=args.config,
                           overrides=args.set or [], split=args.split,
                           points=args.points or SweepRequest.model_fields["points"].default_factory(),
                           iterations=args.iterations or SweepRequest.model_fields["iterations"].default_factory(),
                           seed=args.seed)
    config = _resolve_config(request.config, request.overrides, seed=request.seed)
    samples = _load_samples(request.corpus, request.split)
    actor, _, config = sac.load_networks(request.checkpoint, config)
    expected = sac.grid_state_dim(samples, config)
    if expected != actor.state_dim:
        raise CheckpointError(f"checkpoint expects state_dim {actor.state_dim}, corpus gives {expected}")

    rows: List[SweepRow] = []
    for n_points in request.points:
        for horizon in request.iterations:
            report = sac.evaluate_actor(actor, config, samples, horizon=horizon, n_points=n_points)
            rows.append(SweepRow(points=n_points, iterations=horizon, **_eval_row(report).model_dump()))
            logger.info(f"sweep N={n_points} T={horizon}: mDice={report.mdice:.4f}")
    _emit_csv(SweepRow.columns, [r.csv_row() for r in rows])
    _metrics_table("Point-count / iteration sweep", SweepRow.columns, [r.csv_row() for r in rows])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (overrides config and CONTOUR_MARL_SEED)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contour-marl", description=__doc__.strip())
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic shape corpus")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--size", type=int, default=64)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--kinds", nargs="+", default=["ellipse", "star", "blob"],
                     choices=["ellipse", "star", "blob"])
    gen.add_argument("--noise-sigma", type=float, default=0.05)
    gen.add_argument("--blur-radius", type=int, default=1)
    gen.add_argument("--workers", type=int, default=1)
    gen.set_defaults(handler=cmd_gen)

    train = sub.add_parser("train", help="train the contour policy")
    train.add_argument("--corpus", type=Path, required=True, help="corpus directory or manifest.csv")
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--mode", choices=["sac", "supervised"], default="sac")
    train.add_argument("--resume", action="store_true")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--workers", type=int)
    _add_config_args(train)
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint with deterministic actions")
    ev.add_argument("--checkpoint", type=Path)
    ev.add_argument("--corpus", type=Path, required=True)
    ev.add_argument("--split", choices=["train", "eval", "all"], default="eval")
    ev.add_argument("--horizon", type=int)
    ev.add_argument("--points", type=int)
    ev.add_argument("--shift-frac", type=float, default=0.0)
    ev.add_argument("--scale-frac", type=float, default=0.0)
    ev.add_argument("--trace", type=Path, help="directory for per-episode SVG and CSV traces")
    ev.add_argument("--sensitivity", action="store_true", help="one row per box-perturbation level")
    ev.add_argument("--baseline", action="store_true", help="score the octagon initialization only")
    ev.add_argument("--per-object", action="store_true")
    _add_config_args(ev)
    ev.set_defaults(handler=cmd_eval)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every differentiable block")
    gc.add_argument("--eps", type=float, default=gradcheck.DEFAULT_EPS)
    gc.add_argument("--trials", type=int, default=gradcheck.DEFAULT_TRIALS)
    gc.add_argument("--threshold", type=float, default=gradcheck.DEFAULT_THRESHOLD)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--blocks", nargs="+", choices=list(gradcheck.BLOCKS), metavar="BLOCK")
    gc.add_argument("--max-entries", type=int, default=gradcheck.DEFAULT_MAX_ENTRIES,
                    help="entries checked per tensor (0 = all)")
    gc.set_defaults(handler=cmd_gradcheck)

    sw = sub.add_parser("sweep", help="evaluate across contour point counts and iteration counts")
    sw.add_argument("--checkpoint", type=Path, required=True)
    sw.add_argument("--corpus", type=Path, required=True)
    sw.add_argument("--split", choices=["train", "eval", "all"], default="eval")
    sw.add_argument("--points", type=int, nargs="+")
    sw.add_argument("--iterations", type=int, nargs="+")
    _add_config_args(sw)
    sw.set_defaults(handler=cmd_sweep)
    return parser


def _exit_code(e: BaseException) -> int:
    if isinstance(e, CheckpointError):
        return EXIT_CHECKPOINT
    if isinstance(e, (NonFiniteLossError, NonFiniteParameterError)):
        return EXIT_NAN
    if isinstance(e, GradCheckFailure):
        return EXIT_GRADCHECK
    if isinstance(e, (CorpusError, OSError)):
        return EXIT_IO
    if isinstance(e, (ConfigError, ValidationError, ValueError)):
        return EXIT_USAGE
    raise e


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    if args.command == "eval" and args.checkpoint is None and not args.baseline:
        parser.error("eval needs --checkpoint unless --baseline is given")
    try:
        return handler(args)
    except Exception as e:
        code = _exit_code(e)
        logger.error(f"{args.command} failed ({type(e).__name__}): {e}")
        return code


if __name__ == "__main__":
    sys.exit(main())
