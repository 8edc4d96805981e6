"""Sweeps over the three evaluation axes: accuracy, domain distance, imbalance.

Each sweep produces one row per (grid value x detector) with the measured
classifier accuracy, AUROC, and FPR95, and is a pure function of its spec:
rerunning yields byte-identical JSON. Synthetic worlds are regenerated per
grid point with the world seed held fixed, so only the swept quantity moves.

Sweeps also run against user-supplied dataset manifests where that makes
sense: the domain-distance axis walks named OOD_TEST entries and the
imbalance axis resamples the ID_FIT_DETECTOR table, while the accuracy axis
needs a synthetic world (there is no knob to turn on a fixed dump).

RNG streams (spawn keys off the sweep seed): (7, i) ID-test subsample and
(8, i) OOD subsample at grid point i, (10, i) child seed for imbalance
resampling at grid point i.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .data import DatasetManifest, FeatureTable, Role
from .detectors import (
    DetectorConfig,
    GaussianClassModel,
    Method,
    fit_mahalanobis,
    score_table,
)
from .errors import ValidationError
from .metrics import auroc, fpr_at_tpr, roc_curve
from .synthetic import (
    CountLaw,
    SyntheticSpec,
    generate_world,
    ood_table_name,
    sample_imbalanced,
    stream_rng,
)

#: Default per-side test size for generated worlds.
DESK_SCALE_PER_SIDE = 2000

#: Benchmark-scale dataset sizes, usable wherever a sample count is taken.
DATASET_SIZE_PRESETS = {
    "non-insecta": 74740,
    "ood-insect": 56487,
    "imagenet": 9730,
    "human-face": 3059,
}

_STREAM_ID_SUB = 7
_STREAM_OOD_SUB = 8
_STREAM_CHILD_SEED = 10


class Axis:
    ACCURACY = "accuracy"
    DOMAIN_DISTANCE = "domain_distance"
    IMBALANCE = "imbalance"

    ALL = (ACCURACY, DOMAIN_DISTANCE, IMBALANCE)


GridValue = Union[float, str, CountLaw]


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    base_world: SyntheticSpec | str | Path
    grid: tuple[GridValue, ...]
    detectors: tuple[DetectorConfig, ...]
    seed: int = 42
    n_per_side: int | None = None

    def __post_init__(self) -> None:
        if self.axis not in Axis.ALL:
            raise ValidationError(f"unknown sweep axis {self.axis!r}")
        if not self.grid:
            raise ValidationError("sweep grid must be nonempty")
        numeric = [v for v in self.grid if isinstance(v, (int, float))]
        if len(numeric) == len(self.grid) and len(numeric) > 1:
            if (np.diff(numeric) <= 0).any():
                raise ValidationError("numeric grid values must be strictly increasing")
        if not self.detectors:
            raise ValidationError("sweep needs at least one detector")

    @property
    def is_synthetic(self) -> bool:
        return isinstance(self.base_world, SyntheticSpec)


@dataclass(frozen=True)
class SweepRow:
    axis: str
    axis_value: float | str
    method: str
    classifier_accuracy: float | None
    auroc: float
    fpr95: float
    n_id: int
    n_ood: int

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "axis_value": self.axis_value,
            "method": self.method,
            "classifier_accuracy": self.classifier_accuracy,
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    provenance: dict

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.rows)

    def to_summary_json(self, timestamp: str | None = None) -> str:
        obj = {"provenance": self.provenance, "rows": [r.to_dict() for r in self.rows]}
        if timestamp is not None:
            obj["timestamp"] = timestamp
        return json.dumps(obj, indent=2) + "\n"


def _grid_text(value: GridValue) -> float | str:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return value
    return value.text()


def _provenance(spec: SweepSpec) -> dict:
    if spec.is_synthetic:
        w = spec.base_world
        world = {
            "classes": w.classes,
            "dim": w.dim,
            "class_separation": w.class_separation,
            "within_class_sigma": w.within_class_sigma,
            "label_noise": w.label_noise,
            "ood_distance": w.ood_distance,
            "law": w.law.text(),
            "seed": w.seed,
        }
    else:
        world = {"manifest": str(spec.base_world)}
    return {
        "axis": spec.axis,
        "base_world": world,
        "grid": [_grid_text(v) for v in spec.grid],
        "detectors": [
            {"method": c.method.value, "temperature": c.temperature, "ridge": c.ridge}
            for c in spec.detectors
        ],
        "seed": spec.seed,
        "n_per_side": spec.n_per_side,
    }


def _subsample(table: FeatureTable, m: int, rng: np.random.Generator) -> FeatureTable:
    if m > table.n:
        raise ValidationError(f"cannot subsample {m} rows from {table.n}")
    if m == table.n:
        return table
    return table.take(np.sort(rng.choice(table.n, size=m, replace=False)))


def _accuracy_of(table: FeatureTable) -> float | None:
    if table.c < 2 or not table.is_labeled:
        return None
    return float(np.mean(np.argmax(table.logits, axis=1) == table.labels))


def _score_rows(
    spec: SweepSpec,
    axis_value: float | str,
    id_table: FeatureTable,
    ood_table: FeatureTable,
    fit_table: FeatureTable | None,
    accuracy: float | None,
    mah_models: dict[float, GaussianClassModel] | None = None,
) -> list[SweepRow]:
    """One row per detector for a fixed (ID test, OOD test) pair."""
    rows = []
    for config in spec.detectors:
        model = None
        if config.method is Method.MAH:
            if mah_models is not None and config.ridge in mah_models:
                model = mah_models[config.ridge]
            else:
                if fit_table is None:
                    raise ValidationError("mahalanobis detector needs a fit table")
                model = fit_mahalanobis(fit_table, config.ridge)
                if mah_models is not None:
                    mah_models[config.ridge] = model
        curve = roc_curve(
            score_table(config, id_table, model), score_table(config, ood_table, model)
        )
        rows.append(
            SweepRow(
                axis=spec.axis,
                axis_value=_grid_text(axis_value),
                method=config.method.value,
                classifier_accuracy=accuracy,
                auroc=auroc(curve),
                fpr95=fpr_at_tpr(curve, 0.95),
                n_id=id_table.n,
                n_ood=ood_table.n,
            )
        )
    return rows


def _load_manifest(spec: SweepSpec) -> DatasetManifest:
    manifest = DatasetManifest.read(spec.base_world)
    manifest.validate_for_eval()
    return manifest


def run_accuracy_sweep(spec: SweepSpec) -> SweepResult:
    """Regenerate the world per label-noise level; equal-sized test sets."""
    if spec.axis != Axis.ACCURACY:
        raise ValidationError(f"expected axis {Axis.ACCURACY!r}, got {spec.axis!r}")
    if not spec.is_synthetic:
        raise ValidationError(
            "the accuracy sweep varies label noise and needs a synthetic world"
        )
    rows: list[SweepRow] = []
    for i, noise in enumerate(spec.grid):
        world = generate_world(replace(spec.base_world, label_noise=float(noise)))
        ood = world.ood_tables[ood_table_name(spec.base_world.ood_distance)]
        m = min(world.id_test.n, ood.n, spec.n_per_side or world.id_test.n)
        id_test = _subsample(world.id_test, m, stream_rng(spec.seed, _STREAM_ID_SUB, i))
        ood = _subsample(ood, m, stream_rng(spec.seed, _STREAM_OOD_SUB, i))
        rows += _score_rows(
            spec, noise, id_test, ood, world.id_fit, world.classifier_accuracy, {}
        )
    return SweepResult(tuple(rows), _provenance(spec))


def run_domain_shift_sweep(spec: SweepSpec) -> SweepResult:
    """One world (or manifest), one OOD set per grid value, sizes matched."""
    if spec.axis != Axis.DOMAIN_DISTANCE:
        raise ValidationError(f"expected axis {Axis.DOMAIN_DISTANCE!r}, got {spec.axis!r}")
    if spec.is_synthetic:
        distances = tuple(float(v) for v in spec.grid)
        world = generate_world(
            spec.base_world, ood_distances=distances, n_ood=spec.n_per_side
        )
        id_test, fit_table = world.id_test, world.id_fit
        accuracy = world.classifier_accuracy
        ood_sets = [(d, world.ood_tables[ood_table_name(d)]) for d in distances]
    else:
        manifest = _load_manifest(spec)
        id_test = manifest.load(manifest.single(Role.ID_TEST))
        by_name = {e.ood_name: e for e in manifest.ood_entries()}
        fit_entries = [e for e in manifest.entries if e.role is Role.ID_FIT_DETECTOR]
        fit_table = manifest.load(fit_entries[0]) if fit_entries else None
        accuracy = _accuracy_of(id_test)
        ood_sets = []
        for name in spec.grid:
            if name not in by_name:
                raise ValidationError(f"manifest has no OOD_TEST named {name!r}")
            ood_sets.append((name, manifest.load(by_name[name])))

    m = min([id_test.n] + [t.n for _, t in ood_sets] + ([spec.n_per_side] if spec.n_per_side else []))
    id_matched = _subsample(id_test, m, stream_rng(spec.seed, _STREAM_ID_SUB, 0))
    rows: list[SweepRow] = []
    mah_models: dict[float, GaussianClassModel] = {}
    for i, (value, ood) in enumerate(ood_sets):
        ood = _subsample(ood, m, stream_rng(spec.seed, _STREAM_OOD_SUB, i))
        rows += _score_rows(spec, value, id_matched, ood, fit_table, accuracy, mah_models)
    return SweepResult(tuple(rows), _provenance(spec))


def run_imbalance_sweep(spec: SweepSpec) -> SweepResult:
    """Refit the Mahalanobis detector per imbalance law; others are fixed.

    All laws must request the same fit total. With a manifest world the
    first OOD_TEST entry is the comparison set.
    """
    if spec.axis != Axis.IMBALANCE:
        raise ValidationError(f"expected axis {Axis.IMBALANCE!r}, got {spec.axis!r}")
    laws: list[CountLaw] = []
    for v in spec.grid:
        if isinstance(v, (int, float, str)):
            raise ValidationError("imbalance grid values must be count laws")
        laws.append(v)

    if spec.is_synthetic:
        world = generate_world(spec.base_world, n_ood=spec.n_per_side)
        id_fit, id_test = world.id_fit, world.id_test
        ood = world.ood_tables[ood_table_name(spec.base_world.ood_distance)]
        accuracy = world.classifier_accuracy
    else:
        manifest = _load_manifest(spec)
        id_fit = manifest.load(manifest.single(Role.ID_FIT_DETECTOR))
        id_test = manifest.load(manifest.single(Role.ID_TEST))
        ood = manifest.load(manifest.ood_entries()[0])
        accuracy = _accuracy_of(id_test)

    c = int(np.unique(id_fit.labels).size)
    totals = {law.total(c) for law in laws}
    if len(totals) != 1:
        raise ValidationError(
            f"imbalance laws must request equal totals over {c} classes, got {sorted(totals)}"
        )

    rows: list[SweepRow] = []
    for i, law in enumerate(laws):
        child_seed = int(
            np.random.SeedSequence(spec.seed, spawn_key=(_STREAM_CHILD_SEED, i))
            .generate_state(1)[0]
        )
        fit_variant = sample_imbalanced(id_fit, law, child_seed)
        rows += _score_rows(spec, law, id_test, ood, fit_variant, accuracy, {})
    return SweepResult(tuple(rows), _provenance(spec))


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Dispatch on the sweep axis."""
    return {
        Axis.ACCURACY: run_accuracy_sweep,
        Axis.DOMAIN_DISTANCE: run_domain_shift_sweep,
        Axis.IMBALANCE: run_imbalance_sweep,
    }[spec.axis](spec)
