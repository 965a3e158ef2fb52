"""Command-line pipeline: model file or scenario in, reports out.

Subcommands:

* ``validate``  parse a model and print its numeric validation report;
* ``run``       compute the information quantities, write report.json;
* ``check``     run plus the bound audit, write bounds.csv, gate the exit
  code on every check;
* ``scenario list``  names of the built-in scenarios.

Exit codes: 0 success; 1 the model document is invalid (syntax, shape or
numeric validation); 2 a consistency check or bound fails at tolerance;
3 I/O or enumeration-budget errors. Progress and diagnostics go to stderr;
results go to files in the output directory only.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import (
    ConsistencyAccumulator,
    compute_a_priori,
    enumerate_trajectories,
    format_outcomes,
    sample_trajectories,
)
from .entropics import (
    EntropyReportBuilder,
    check_bounds,
    report_to_json_dict,
    write_bounds_csv,
)
from .errors import BudgetExceeded, ContmeasError, ModelSyntaxError, ShapeError
from .model import (
    SCENARIO_NAMES,
    MeasurementModel,
    TimeGrid,
    builtin_scenario,
    is_pure_preserving,
    parse_model,
    validate_model,
)

EXIT_OK = 0
EXIT_INVALID_MODEL = 1
EXIT_VIOLATION = 2
EXIT_IO = 3

_SCENARIO_BLURBS = {
    "identity": "no-op instrument; nothing is ever learned",
    "qubit-projective": "projective qubit readout of a two-state ensemble",
    "qubit-weak": "weak (partial-strength) qubit measurement",
    "pure-preserving-random": "seeded random single-Kraus instrument on pure states",
    "damped-qubit": "amplitude-damping channel with a mixed-state ensemble",
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline execution depends on."""

    model_path: Optional[str]
    scenario: Optional[str]
    horizon: Optional[int]
    grid: Optional[tuple]
    refs: Optional[tuple]
    mode: str  # "enumerate" | "sample"
    samples: int
    seed: int
    tol: float
    units: str  # "nats" | "bits"
    out_dir: str
    dump_trajectories: bool


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_times(text: Optional[str]) -> Optional[tuple]:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise _Failure(EXIT_IO, f"bad time list {text!r}: {exc}") from exc


def _load_model(cfg: RunConfig) -> MeasurementModel:
    if (cfg.model_path is None) == (cfg.scenario is None):
        raise _Failure(EXIT_IO, "exactly one of --model and --scenario is required")
    if cfg.scenario is not None:
        horizon = cfg.horizon if cfg.horizon is not None else 3
        try:
            return builtin_scenario(cfg.scenario, horizon=horizon, seed=cfg.seed)
        except ContmeasError as exc:
            raise _Failure(EXIT_IO, str(exc)) from exc
    try:
        text = Path(cfg.model_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot read {cfg.model_path}: {exc}") from exc
    try:
        model = parse_model(text)
    except (ModelSyntaxError, ShapeError) as exc:
        raise _Failure(EXIT_INVALID_MODEL, f"invalid model document: {exc}") from exc
    if cfg.horizon is not None and cfg.horizon != model.horizon:
        if not model.homogeneous:
            raise _Failure(
                EXIT_IO, "--horizon can only override models with a single instrument"
            )
        model = MeasurementModel(
            dim=model.dim,
            horizon=cfg.horizon,
            ensemble=model.ensemble,
            steps=tuple([model.steps[0]] * cfg.horizon),
            homogeneous=True,
        )
    return model


def _validate_or_fail(model: MeasurementModel) -> None:
    report = validate_model(model)
    if not report.passed:
        for check in report.failures():
            _say(f"validation failure: {check}")
        raise _Failure(EXIT_INVALID_MODEL, "model validation failed")
    _say(f"validation: {len(report.checks)} checks passed")


def _make_grid(cfg: RunConfig, model: MeasurementModel) -> TimeGrid:
    try:
        return TimeGrid.make(model.horizon, record_times=cfg.grid, reference_times=cfg.refs)
    except ValueError as exc:
        raise _Failure(EXIT_IO, f"bad grid: {exc}") from exc


def run_pipeline(cfg: RunConfig, with_bounds: bool = True) -> int:
    """validate -> a-priori track -> engine -> consistency -> reports.

    Writes report.json (always), bounds.csv (when ``with_bounds``) and
    trajectories.csv (when requested) into the output directory. Returns
    the process exit code.
    """
    try:
        model = _load_model(cfg)
        _validate_or_fail(model)
        grid = _make_grid(cfg, model)
        out_dir = Path(cfg.out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise _Failure(EXIT_IO, f"cannot create {out_dir}: {exc}") from exc

        apriori = compute_a_priori(model, grid)
        builder = EntropyReportBuilder(grid, mode=cfg.mode)
        consistency = (
            ConsistencyAccumulator(model, grid, apriori, tol=cfg.tol)
            if cfg.mode == "enumerate"
            else None
        )
        if cfg.mode == "enumerate":
            records = enumerate_trajectories(model, grid, apriori=apriori)
        else:
            records = sample_trajectories(
                model, grid, cfg.samples, seed=cfg.seed, apriori=apriori
            )
        dump_stream = None
        dump_writer = None
        count = 0
        try:
            if cfg.dump_trajectories:
                dump_stream = (out_dir / "trajectories.csv").open("w", encoding="utf-8")
                dump_writer = csv.writer(dump_stream, lineterminator="\n")
                dump_writer.writerow(
                    ["letter", "outcomes", "prob"] + [f"S_{t}" for t in grid.record_times]
                )
            for rec in records:
                builder.add(rec)
                if consistency is not None:
                    consistency.add(rec)
                if dump_writer is not None:
                    dump_writer.writerow(
                        [rec.letter, format_outcomes(rec.outcomes), repr(rec.prob)]
                        + [repr(rec.entropy[t]) for t in grid.record_times]
                    )
                count += 1
        except BudgetExceeded as exc:
            raise _Failure(EXIT_IO, f"enumeration refused: {exc}") from exc
        finally:
            if dump_stream is not None:
                dump_stream.close()
        _say(f"{cfg.mode}: {count} trajectories")
        if dump_writer is not None:
            _say(f"wrote trajectories.csv ({count} rows)")

        violations = []
        if consistency is not None:
            consistency_report = consistency.finalize()
            if not consistency_report.passed:
                for check in consistency_report.failures():
                    _say(f"consistency failure: {check}")
                violations.append("consistency")
            else:
                _say(
                    f"consistency: {len(consistency_report.checks)} checks passed "
                    f"(max residual {consistency_report.max_residual():.3e})"
                )

        report = builder.finalize()
        doc = {
            "config": {
                "source": cfg.scenario if cfg.scenario else cfg.model_path,
                "horizon": model.horizon,
                "record_times": list(grid.record_times),
                "reference_times": list(grid.reference_times),
                "mode": cfg.mode,
                "samples": cfg.samples if cfg.mode == "sample" else None,
                "seed": cfg.seed,
                "tolerance": cfg.tol,
                "units": cfg.units,
            },
            **report_to_json_dict(report, units=cfg.units),
        }
        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        _say(f"wrote {report_path}")

        if with_bounds:
            bounds = check_bounds(report, tol=cfg.tol, pure_preserving=is_pure_preserving(model))
            bounds_path = out_dir / "bounds.csv"
            with bounds_path.open("w", encoding="utf-8") as stream:
                write_bounds_csv(bounds, stream, units=cfg.units)
            _say(f"wrote {bounds_path} ({len(bounds.checks)} bound checks)")
            if not bounds.passed:
                for check in bounds.failures():
                    _say(f"bound failure: {check}")
                violations.append("bounds")

        if violations:
            _say(f"FAIL: {', '.join(violations)}")
            return EXIT_VIOLATION
        return EXIT_OK
    except _Failure as failure:
        _say(f"error: {failure}")
        return failure.code


def _cmd_validate(cfg: RunConfig) -> int:
    try:
        model = _load_model(cfg)
    except _Failure as failure:
        _say(f"error: {failure}")
        return failure.code
    report = validate_model(model)
    _say(str(report))
    return EXIT_OK if report.passed else EXIT_INVALID_MODEL


def _cmd_scenario_list() -> int:
    for name in SCENARIO_NAMES:
        print(f"{name}: {_SCENARIO_BLURBS[name]}")
    return EXIT_OK


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", metavar="PATH", help="model document (JSON)")
    parser.add_argument(
        "--scenario", metavar="NAME", help=f"built-in scenario: {', '.join(SCENARIO_NAMES)}"
    )
    parser.add_argument("--horizon", type=int, metavar="T", help="number of time steps")
    parser.add_argument(
        "--seed", type=int, default=7, help="seed for sampling and random scenarios"
    )


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    _add_model_arguments(parser)
    parser.add_argument("--grid", metavar="t0,t1,...", help="record times (default: 0..T)")
    parser.add_argument(
        "--refs", metavar="s0,s1,...", help="reference times (default: the grid)"
    )
    parser.add_argument(
        "--mode", choices=("enumerate", "sample"), default="enumerate", help="trajectory source"
    )
    parser.add_argument("--samples", type=int, default=10000, help="sample count (sample mode)")
    parser.add_argument("--tol", type=float, default=1e-9, help="margin tolerance in nats")
    parser.add_argument("--units", choices=("nats", "bits"), default="nats")
    parser.add_argument("--out", default=".", metavar="DIR", help="output directory")
    parser.add_argument(
        "--dump-trajectories", action="store_true", help="also write trajectories.csv"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contmeas",
        description="Repeated quantum measurements: trajectories, information "
        "quantities, and entropic bound audits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate_cmd = sub.add_parser("validate", help="parse and validate a model")
    _add_model_arguments(validate_cmd)

    run_cmd = sub.add_parser("run", help="compute the information report")
    _add_run_arguments(run_cmd)

    check_cmd = sub.add_parser("check", help="run plus the full bound audit")
    _add_run_arguments(check_cmd)

    scenario_cmd = sub.add_parser("scenario", help="built-in scenario utilities")
    scenario_sub = scenario_cmd.add_subparsers(dest="scenario_command", required=True)
    scenario_sub.add_parser("list", help="list scenario names")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        model_path=args.model,
        scenario=args.scenario,
        horizon=args.horizon,
        grid=_parse_times(getattr(args, "grid", None)),
        refs=_parse_times(getattr(args, "refs", None)),
        mode=getattr(args, "mode", "enumerate"),
        samples=getattr(args, "samples", 10000),
        seed=args.seed,
        tol=getattr(args, "tol", 1e-9),
        units=getattr(args, "units", "nats"),
        out_dir=getattr(args, "out", "."),
        dump_trajectories=getattr(args, "dump_trajectories", False),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario":
        return _cmd_scenario_list()
    try:
        cfg = _config_from_args(args)
    except _Failure as failure:
        _say(f"error: {failure}")
        return failure.code
    if args.command == "validate":
        return _cmd_validate(cfg)
    if args.command == "run":
        return run_pipeline(cfg, with_bounds=False)
    return run_pipeline(cfg, with_bounds=True)


if __name__ == "__main__":
    sys.exit(main())
