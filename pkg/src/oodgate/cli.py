"""Command-line surface: synth, fit, score, calibrate, eval, sweep.

Commands communicate only through files (tables, models, score CSVs, JSON
reports), so pipelines are reproducible and each stage can be inspected or
replaced. Exit codes are a stable contract: 0 success, 2 usage/validation,
3 I/O, 4 numerical failure.

The default seed is 42, overridable by the ``OODGATE_SEED`` environment
variable; an explicit ``--seed`` flag wins over both. Any flag can also be
supplied through ``--config FILE`` holding flat ``key = value`` lines
(long option names without the leading dashes); explicit flags win over
config values.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path

from .data import (
    DatasetManifest,
    ManifestEntry,
    Role,
    TableFormat,
    read_feature_table,
    write_feature_table,
)
from .detectors import (
    DetectorConfig,
    Method,
    fit_mahalanobis,
    load_model,
    read_scores,
    save_model,
    score_table,
    write_scores,
)
from .errors import NumericalError, ValidationError
from .experiments import (
    DATASET_SIZE_PRESETS,
    DESK_SCALE_PER_SIDE,
    Axis,
    SweepSpec,
    run_sweep,
)
from .metrics import Criterion, calibrate_threshold, evaluate, roc_curve
from .svg import roc_svg, series_svg
from .synthetic import SyntheticSpec, generate_world, parse_law

log = logging.getLogger("oodgate")

_PRESET_TEXT = ", ".join(f"{k}={v}" for k, v in DATASET_SIZE_PRESETS.items())

_EPILOG = (
    "size presets (accepted wherever a sample count is expected): "
    f"{_PRESET_TEXT}; balanced fit preset: law balanced:411 over 142 classes "
    "= 58362 samples"
)


def _size(text: str) -> int:
    if text in DATASET_SIZE_PRESETS:
        return DATASET_SIZE_PRESETS[text]
    return int(text)


def _default_seed() -> int:
    return int(os.environ.get("OODGATE_SEED", "42"))


def _infer_format(path: str, explicit: str | None) -> TableFormat:
    if explicit:
        return TableFormat.CSV if explicit == "csv" else TableFormat.BINARY_DUMP
    return TableFormat.CSV if path.endswith(".csv") else TableFormat.BINARY_DUMP


def _read_table(path: str, explicit_format: str | None):
    return read_feature_table(path, _infer_format(path, explicit_format))


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
        log.info("wrote %s", path)


def _timestamp(args) -> str | None:
    if getattr(args, "timestamp", False):
        return datetime.datetime.now(datetime.timezone.utc).isoformat()
    return None


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    if args.classes is None or args.dim is None:
        raise ValidationError("synth requires --classes and --dim")
    distances = tuple(args.ood_distance) if args.ood_distance else (2.0,)
    spec = SyntheticSpec(
        classes=args.classes,
        dim=args.dim,
        class_separation=args.separation,
        within_class_sigma=args.sigma,
        label_noise=args.label_noise,
        ood_distance=distances[0],
        law=args.law,
        seed=args.seed,
    )
    world = generate_world(spec, ood_distances=distances, n_ood=args.n_ood)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tables = {
        "id1.oodf": (world.id_train, Role.ID_TRAIN_CLASSIFIER, ""),
        "id2.oodf": (world.id_fit, Role.ID_FIT_DETECTOR, ""),
        "id3.oodf": (world.id_test, Role.ID_TEST, ""),
    }
    for name, table in world.ood_tables.items():
        tables[f"ood_{name}.oodf"] = (table, Role.OOD_TEST, name)
    entries = []
    for fname, (table, role, ood_name) in tables.items():
        write_feature_table(table, out / fname)
        log.info("wrote %s", out / fname)
        entries.append(ManifestEntry(fname, role, TableFormat.BINARY_DUMP, ood_name))
    manifest = DatasetManifest(tuple(entries), name="synthetic-world", base_dir=out)
    manifest.write(out / "world.manifest")
    log.info("wrote %s", out / "world.manifest")

    summary = {
        "classes": spec.classes,
        "dim": spec.dim,
        "class_separation": spec.class_separation,
        "within_class_sigma": spec.within_class_sigma,
        "label_noise": spec.label_noise,
        "ood_distances": list(distances),
        "law": spec.law.text(),
        "seed": spec.seed,
        "classifier_accuracy": world.classifier_accuracy,
        "sizes": {
            "id_train": world.id_train.n,
            "id_fit": world.id_fit.n,
            "id_test": world.id_test.n,
            **{f"ood_{k}": t.n for k, t in world.ood_tables.items()},
        },
    }
    ts = _timestamp(args)
    if ts is not None:
        summary["timestamp"] = ts
    _write_text(str(out / "world.json"), json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_fit(args) -> int:
    method = Method(args.method)
    if method is not Method.MAH:
        raise ValidationError(f"{method.value} has no fitting step; only mah is fitted")
    if args.manifest:
        manifest = DatasetManifest.read(args.manifest)
        table = manifest.load(manifest.single(Role.ID_FIT_DETECTOR))
    elif args.input:
        table = _read_table(args.input, args.format)
    else:
        raise ValidationError("fit needs --input TABLE or --manifest MANIFEST")
    model = fit_mahalanobis(table, args.ridge)
    save_model(model, args.out)
    log.info("wrote %s", args.out)
    return 0


def cmd_score(args) -> int:
    method = Method(args.method)
    table = _read_table(args.input, args.format)
    model = None
    if method is Method.MAH:
        if not args.model:
            raise ValidationError("mah scoring needs --model MODEL")
        model = load_model(args.model)
    config = DetectorConfig(method, temperature=args.temperature)
    scores = score_table(config, table, model)
    write_scores(scores, args.out)
    log.info("wrote %s", args.out)
    return 0


def _criterion(args) -> Criterion:
    return Criterion.YOUDEN if args.criterion == "youden" else Criterion.FPR_AT_TPR


def cmd_calibrate(args) -> int:
    method = Method(args.method) if args.method else None
    id_scores = read_scores(args.id_scores, method)
    ood_scores = read_scores(args.ood_scores, method)
    threshold, tpr, fpr = calibrate_threshold(
        id_scores, ood_scores, _criterion(args), args.target
    )
    obj = {
        "criterion": args.criterion,
        "target": args.target if args.criterion == "fpr-at-tpr" else None,
        "threshold": threshold,
        "tpr": tpr,
        "fpr": fpr,
    }
    _write_text(args.out, json.dumps(obj, indent=2) + "\n")
    return 0


def cmd_eval(args) -> int:
    method = Method(args.method) if args.method else None
    id_scores = read_scores(args.id_scores, method)
    ood_scores = read_scores(args.ood_scores, method)
    report = evaluate(id_scores, ood_scores, _criterion(args), args.target)
    _write_text(args.out, report.to_json())
    if args.svg:
        _write_text(args.svg, roc_svg(roc_curve(id_scores, ood_scores)))
    return 0


def cmd_sweep(args) -> int:
    axis = args.axis.replace("-", "_")
    if args.manifest:
        base_world = args.manifest
    else:
        if args.classes is None or args.dim is None:
            raise ValidationError("sweep needs --manifest or --classes/--dim world flags")
        base_world = SyntheticSpec(
            classes=args.classes,
            dim=args.dim,
            class_separation=args.separation,
            within_class_sigma=args.sigma,
            label_noise=args.label_noise,
            ood_distance=args.ood_distance[0] if args.ood_distance else 2.0,
            law=args.law,
            seed=args.world_seed,
        )

    if axis == Axis.IMBALANCE:
        grid = tuple(parse_law(v) for v in args.grid.split(","))
    elif args.manifest:
        grid = tuple(v.strip() for v in args.grid.split(","))
    else:
        grid = tuple(float(v) for v in args.grid.split(","))

    detectors = tuple(
        DetectorConfig(Method(m.strip()), temperature=args.temperature, ridge=args.ridge)
        for m in args.detectors.split(",")
    )
    spec = SweepSpec(
        axis=axis,
        base_world=base_world,
        grid=grid,
        detectors=detectors,
        seed=args.seed,
        n_per_side=args.n_per_side,
    )
    result = run_sweep(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(str(out / "rows.jsonl"), result.to_jsonl())
    _write_text(str(out / "summary.json"), result.to_summary_json(_timestamp(args)))
    if args.svg:
        labels = [str(v) for v in dict.fromkeys(r.axis_value for r in result.rows)]
        series: dict[str, list[float]] = {}
        for row in result.rows:
            series.setdefault(row.method, []).append(row.auroc)
        _write_text(
            str(out / "sweep.svg"),
            series_svg(labels, series, f"{args.axis} sweep", "AUROC"),
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_world_flags(p: argparse.ArgumentParser) -> None:
    # --classes/--dim are validated after --config is applied, so a config
    # file can satisfy them; argparse `required` would reject too early.
    p.add_argument("--classes", type=int, default=None,
                   help="number of ID classes (c >= 2)")
    p.add_argument("--dim", type=int, default=None,
                   help="feature dimension (d >= 2)")
    p.add_argument("--separation", type=float, default=1.0,
                   help="radius of the sphere holding class means")
    p.add_argument("--sigma", type=float, default=1.0,
                   help="within-class standard deviation")
    p.add_argument("--label-noise", type=float, default=0.0,
                   help="fraction of fit labels randomized among other classes")
    p.add_argument("--ood-distance", type=float, action="append", default=None,
                   help="OOD cloud distance in units of separation (repeatable)")
    p.add_argument("--law", type=parse_law, default=parse_law("balanced:200"),
                   help="per-class count law: balanced:N, powerlaw:ALPHA:TOTAL, "
                        "uniform:TOTAL")
    p.add_argument("--n-ood", type=_size, default=None,
                   help="OOD samples per cloud (int or size preset; "
                        "default: test-split size)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat 'key = value' file supplying flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log written files")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="oodgate",
        description="Post-hoc OOD detection over exported features and logits.",
        epilog=_EPILOG,
    )
    subs = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = subs.add_parser("synth", help="generate a synthetic world", epilog=_EPILOG)
    _add_world_flags(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timestamp", dest="timestamp", action="store_true",
                   help="stamp the world summary with the current UTC time")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_false",
                   help="omit the timestamp (default)")
    p.set_defaults(func=cmd_synth, timestamp=False)
    commands["synth"] = p

    p = subs.add_parser("fit", help="fit the mahalanobis detector")
    p.add_argument("--input", default=None, help="detector-fit table")
    p.add_argument("--manifest", default=None,
                   help="manifest supplying the ID_FIT_DETECTOR table")
    p.add_argument("--format", choices=["oodf", "csv"], default=None)
    p.add_argument("--method", default="mah", choices=[m.value for m in Method])
    p.add_argument("--ridge", type=float, default=1e-6,
                   help="covariance ridge, relative to trace/d")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_fit)
    commands["fit"] = p

    p = subs.add_parser("score", help="score a table with one detector")
    p.add_argument("--input", required=True, help="table to score")
    p.add_argument("--format", choices=["oodf", "csv"], default=None)
    p.add_argument("--method", required=True, choices=[m.value for m in Method])
    p.add_argument("--model", default=None, help="fitted model (mah only)")
    p.add_argument("--temperature", type=float, default=1.0, help="ebm temperature")
    p.add_argument("--out", required=True, help="score CSV to write")
    p.set_defaults(func=cmd_score)
    commands["score"] = p

    for name, func, help_text in (
        ("calibrate", cmd_calibrate, "pick an operating threshold"),
        ("eval", cmd_eval, "full evaluation report (AUROC, FPR95, threshold)"),
    ):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--id-scores", required=True, help="ID score CSV")
        p.add_argument("--ood-scores", required=True, help="OOD score CSV")
        p.add_argument("--method", default=None, choices=[m.value for m in Method])
        p.add_argument("--criterion", choices=["youden", "fpr-at-tpr"],
                       default="youden")
        p.add_argument("--target", type=float, default=0.95,
                       help="TPR target for fpr-at-tpr")
        p.add_argument("--out", default=None, help="output JSON (default: stdout)")
        if name == "eval":
            p.add_argument("--svg", default=None, help="also render the ROC curve")
        p.set_defaults(func=func)
        commands[name] = p

    p = subs.add_parser("sweep", help="run one evaluation-axis sweep",
                        epilog=_EPILOG)
    p.add_argument("--axis", required=True,
                   choices=["accuracy", "domain-distance", "imbalance"])
    p.add_argument("--grid", required=True,
                   help="comma list: noise levels, distances, OOD names, or "
                        "count laws depending on the axis")
    p.add_argument("--detectors", default="msp,ebm,mah")
    p.add_argument("--manifest", default=None,
                   help="evaluate a dataset manifest instead of a synthetic world")
    _add_world_flags(p)
    p.add_argument("--world-seed", type=int, default=42,
                   help="seed of the generated world (fixed across grid points)")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--n-per-side", type=_size, default=DESK_SCALE_PER_SIDE,
                   help="test samples per side (int or size preset; "
                        f"default {DESK_SCALE_PER_SIDE})")
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="sweep subsampling seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--svg", action="store_true", help="render an AUROC chart")
    p.add_argument("--timestamp", dest="timestamp", action="store_true")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_false")
    p.set_defaults(func=cmd_sweep, timestamp=False)
    commands["sweep"] = p

    for p in commands.values():
        _add_common(p)
    return parser, commands


def _apply_config(args: argparse.Namespace, sub: argparse.ArgumentParser) -> None:
    """Fill flags from a flat key = value file; explicit flags win."""
    if not args.config:
        return
    actions = {a.dest: a for a in sub._actions}
    text = Path(args.config).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{args.config}: line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        value = value.strip()
        if dest not in actions or dest in ("config", "func", "command"):
            raise ValidationError(f"{args.config}: unknown option {key.strip()!r}")
        action = actions[dest]
        if getattr(args, dest) != action.default:
            continue  # flag was given explicitly
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            parsed = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            parsed = action.type(value)
        else:
            parsed = value
        setattr(args, dest, parsed)


def main(argv: list[str] | None = None) -> int:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
    )
    try:
        _apply_config(args, commands[args.command])
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
