"""Command-line driver: simulate -> attack -> train -> detect -> evaluate.

Exit codes: 0 success, 2 invalid configuration, 3 power-flow divergence,
4 attack labels or intervals misaligned with the frames, 5 model or schema
mismatch, 6 single-class labels at evaluation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, pipeline
from .attacks import AttackPlan, apply_attacks
from .detectors import KINDS, DetectorOptions, fit_detector
from .errors import (
    IntervalOutOfRange,
    LengthMismatch,
    PowerFlowDivergence,
    SchemaMismatch,
    SingleClassLabels,
)
from .evaluation import plot_roc, plot_timing, roc_curve, time_detector, write_report, write_roc, write_timing
from .feeder import Scenario, simulate
from .timeseries import MODEL_GROUPS, fit_standardizer

log = logging.getLogger("pvanomaly")

EXIT_CONFIG, EXIT_POWERFLOW, EXIT_ALIGN, EXIT_SCHEMA, EXIT_LABELS = 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _load_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CliError(EXIT_CONFIG, f"{path}: expected a JSON object")
    return doc


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / pipeline.MANIFEST
    if stale.exists():
        stale.unlink()
    return out


def _manifest(out: Path, stage: str, parents=None, **info) -> None:
    pipeline.write_manifest(out, stage, parents, created=_stamp(), **info)


def _upstream(path: str, stage: str | tuple[str, ...]) -> dict:
    try:
        return pipeline.read_manifest(path, stage)
    except FileNotFoundError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    doc = _load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        scenario = Scenario.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{args.config}: {exc}") from None
    houses, node = simulate(scenario)
    out = _out_dir(args.out)
    labels = pipeline.AttackLabels.empty(scenario.n_houses, node.length, node.start_time, node.step)
    pipeline.save_run(out, pipeline.RunData(scenario, houses, node, labels))
    _manifest(out, "simulate", scenario_sha256=pipeline.sha256_text(scenario.to_json()),
              seeds={"scenario": scenario.seed})
    log.info("wrote %d houses to %s", len(houses), out)
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    parent = _upstream(args.input, "simulate")
    run = pipeline.load_run(args.input)
    doc = _load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        plan = AttackPlan.from_dict(doc, run.scenario.steps_per_day)
    except IntervalOutOfRange as exc:
        raise CliError(EXIT_ALIGN, str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{args.config}: {exc}") from None
    specs = plan.specs
    if args.penetration is not None:
        try:
            specs = tuple(dataclasses.replace(s, penetration=args.penetration) for s in specs)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    houses, node, labels = apply_attacks(run.houses, specs, run.scenario, plan.seed, run.labels)
    out = _out_dir(args.out)
    pipeline.save_run(out, pipeline.RunData(run.scenario, houses, node, labels))
    plan_json = json.dumps(AttackPlan(specs, plan.seed).to_dict(), indent=2, sort_keys=True)
    (out / "attack.json").write_text(plan_json + "\n")
    _manifest(out, "attack", {"normal": Path(args.input)},
              scenario_sha256=parent.get("scenario_sha256"),
              attack_sha256=pipeline.sha256_text(plan_json), seeds={"attack": plan.seed})
    return 0


def _options(args: argparse.Namespace, step: int) -> DetectorOptions:
    kw = {"seed": args.seed}
    if args.pca_dims is not None:
        kw["pca_dims"] = args.pca_dims
    if args.window_min is not None:
        if (args.window_min * 60) % step:
            raise CliError(EXIT_CONFIG, f"--window-min {args.window_min} is not a multiple of the {step}s step")
        kw["window_len"] = args.window_min * 60 // step
    if args.epochs is not None:
        kw["epochs"] = args.epochs
    try:
        opts = DetectorOptions(**kw)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if opts.window_len < 1 or opts.pca_dims < 1:
        raise CliError(EXIT_CONFIG, "--window-min and --pca-dims must be positive")
    return opts


def cmd_train(args: argparse.Namespace) -> int:
    parent = _upstream(args.input, ("simulate", "attack"))
    run = pipeline.load_run(args.input)
    opts = _options(args, run.scenario.step)
    models = pipeline.train_models(run, args.detector, opts, args.train_days)
    out = _out_dir(args.out)
    models.save(out)
    _manifest(out, "train", {"data": Path(args.input)}, detector=args.detector,
              hyperparameters=dataclasses.asdict(opts), seeds={"detector": opts.seed},
              scenario_sha256=parent.get("scenario_sha256"), train_days=args.train_days)
    return 0


def _weights(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        w = [float(x) for x in text.split(",")]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"--weights must be three comma-separated numbers, got {text!r}") from None
    if len(w) != 3:
        raise CliError(EXIT_CONFIG, f"--weights needs 3 values, got {len(w)}")
    return w


def _load_models(path: Path) -> pipeline.ModelSet:
    try:
        return pipeline.ModelSet.load(path)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{path}: unreadable model set ({exc!r})") from None


def cmd_detect(args: argparse.Namespace) -> int:
    _upstream(args.models, "train")
    _upstream(args.input, ("simulate", "attack"))
    models = _load_models(Path(args.models))
    run = pipeline.load_run(args.input)
    det = pipeline.detect(models, run, args.fusion, _weights(args.weights), args.per_model_or)
    out = _out_dir(args.out)
    pipeline.write_scores(det, out / "scores.csv")
    doc = pipeline.thresholds_doc(det)
    doc["weights"] = _weights(args.weights)
    doc["per_model_or"] = args.per_model_or
    (out / "thresholds.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _manifest(out, "detect", {"models": Path(args.models), "data": Path(args.input)},
              detector=models.kind, fusion=args.fusion)
    return 0


def _timing_rows(models_dir: Path, kinds: Sequence[str], repeats: int):
    models = _load_models(models_dir)
    train_manifest = pipeline.read_manifest(models_dir, "train")
    run = pipeline.load_run(train_manifest["parents"]["data"])
    house = models.houses[0]
    frame = run.houses[house].select(MODEL_GROUPS["m1"].channel_names)
    train = frame.slice(0, models.train_rows)
    std = fit_standardizer(train)
    Z = std.transform(frame)
    Z_train = Z[:models.train_rows]
    origin = std.transform(np.zeros(len(std.means)))
    rows = []
    for kind in kinds:
        opts = models.options
        hist = max(opts.window_len, 1)
        eval_rows = np.arange(max(models.train_rows, hist), Z.shape[0])
        rows.append(time_detector(
            kind,
            lambda k=kind: fit_detector(k, Z_train, opts, origin),
            lambda d: d.score(Z, eval_rows),
            Z_train.shape[0], eval_rows.size, repeats,
        ))
    return rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = _upstream(args.input, "detect")
    scores = pipeline.read_scores(Path(args.input) / "scores.csv")
    data_dir = Path(manifest["parents"]["data"])
    labels = pipeline.AttackLabels.from_csv(data_dir / "labels.csv")
    thresholds = json.loads((Path(args.input) / "thresholds.json").read_text())
    kinds = pipeline.label_kinds(labels, scores["house_id"], scores["timestamp"])
    graded = scores["fused_score"]
    if thresholds["orientation"] == "low":
        graded = -graded
    rows = pipeline.evaluate_scores(scores["decision"], kinds, graded)
    out = _out_dir(args.out)
    write_report(rows, out / "report.csv")
    kind = manifest["detector"]
    positives = kinds != 0
    write_roc(graded, positives, out / f"roc_{kind}.csv")
    plot_roc(*roc_curve(graded, positives), kind, out / f"roc_{kind}.svg")
    if args.timing != "none":
        kinds_to_time = KINDS if args.timing == "all" else (kind,)
        trows = _timing_rows(Path(manifest["parents"]["models"]), kinds_to_time, args.repeats)
        write_timing(trows, out / "timing.csv")
        plot_timing(trows, out / "timing.svg")
    _manifest(out, "evaluate", {"detection": Path(args.input)}, detector=kind)
    for r in rows:
        log.info("%-20s P=%.4f R=%.4f F1=%.4f Acc=%.4f", r.name, r.precision, r.recall, r.f1, r.accuracy)
    return 0


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvanomaly", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a normal-operation dataset")
    s.add_argument("-c", "--config", required=True, help="scenario.json")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="inject attacks into a simulated run")
    a.add_argument("-i", "--input", required=True, help="normal run directory")
    a.add_argument("-c", "--config", required=True, help="attack.json")
    a.add_argument("-o", "--out", required=True)
    a.add_argument("--seed", type=int, help="override the attack seed")
    a.add_argument("--penetration", type=float, help="fraction of houses the attacker controls")
    a.set_defaults(func=cmd_attack)

    t = sub.add_parser("train", help="fit m1/m2/m3 detectors on the training days")
    t.add_argument("-i", "--input", required=True, help="normal run directory")
    t.add_argument("-o", "--out", required=True)
    t.add_argument("-d", "--detector", required=True, choices=KINDS)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--pca-dims", type=int)
    t.add_argument("--window-min", type=int, help="window length in minutes (default 15)")
    t.add_argument("--epochs", type=int, help="training epochs for nn/dae")
    t.add_argument("--train-days", type=int, default=7)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("detect", help="score a run and make fused decisions")
    d.add_argument("-m", "--models", required=True, help="train output directory")
    d.add_argument("-i", "--input", required=True, help="run directory to score")
    d.add_argument("-o", "--out", required=True)
    d.add_argument("--fusion", choices=("linear", "most-anomalous"), default="most-anomalous")
    d.add_argument("--weights", help="linear fusion weights w1,w2,w3")
    d.add_argument("--per-model-or", action="store_true",
                   help="flag a timestep when any single model flags it")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="metrics, ROC and timing for a detect run")
    e.add_argument("-i", "--input", required=True, help="detect output directory")
    e.add_argument("-o", "--out", required=True)
    e.add_argument("--timing", choices=("none", "run", "all"), default="run")
    e.add_argument("--repeats", type=int, default=3)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PowerFlowDivergence as exc:
        print(f"error: power flow diverged: {exc}", file=sys.stderr)
        return EXIT_POWERFLOW
    except (IntervalOutOfRange, LengthMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALIGN
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SingleClassLabels as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LABELS


if __name__ == "__main__":
    sys.exit(main())
