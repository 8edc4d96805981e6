"""The three stress axes at desk scale: accuracy, domain distance, imbalance.

Each sweep regenerates (or resamples) a controlled world per grid point and
reports AUROC/FPR95 per detector, so trends are attributable to the one
quantity being varied:

* accuracy    - label noise degrades the implicitly trained classifier and
                the detector fits together;
* domain      - OOD clouds move from "sitting on top of ID" (distance 0)
                to far away;
* imbalance   - the Mahalanobis fit is resampled under balanced / powerlaw
                / uniform class-count laws with equal totals, while msp/ebm
                ride on the fixed classifier and stay flat by construction.
"""

from oodgate import (
    Axis,
    Balanced,
    DetectorConfig,
    Method,
    SweepSpec,
    SyntheticSpec,
    UnbalancedPowerlaw,
    UnbalancedUniform,
    run_sweep,
)

DETECTORS = (
    DetectorConfig(Method.MSP),
    DetectorConfig(Method.EBM),
    DetectorConfig(Method.MAH),
)


def show(title, result):
    print(f"\n== {title}")
    print(f"{'axis value':>14s} {'method':>7s} {'acc':>6s} {'auroc':>7s} {'fpr95':>7s}")
    for r in result.rows:
        acc = "-" if r.classifier_accuracy is None else f"{r.classifier_accuracy:.3f}"
        print(f"{str(r.axis_value):>14s} {r.method:>7s} {acc:>6s} "
              f"{r.auroc:7.3f} {r.fpr95:7.3f}")


# classifier-accuracy axis: same geometry, increasing label noise
accuracy_world = SyntheticSpec(
    classes=50, dim=16, class_separation=3.0, within_class_sigma=1.0,
    ood_distance=2.0, law=Balanced(150), seed=11,
)
show(
    "accuracy axis (label noise up, accuracy down)",
    run_sweep(SweepSpec(Axis.ACCURACY, accuracy_world, (0.0, 0.2, 0.4, 0.6),
                        DETECTORS, seed=1, n_per_side=1000)),
)

# domain-distance axis: one world, OOD clouds at several distances
domain_world = SyntheticSpec(
    classes=20, dim=16, class_separation=1.0, within_class_sigma=1.0,
    law=Balanced(670), seed=5,
)
show(
    "domain-distance axis (far OOD is easy, distance 0 is chance)",
    run_sweep(SweepSpec(Axis.DOMAIN_DISTANCE, domain_world, (0.0, 0.5, 1.0, 2.0, 4.0),
                        DETECTORS, seed=17, n_per_side=2000)),
)

# imbalance axis: equal fit totals, different per-class count laws
imbalance_world = SyntheticSpec(
    classes=20, dim=16, class_separation=3.0, within_class_sigma=1.0,
    ood_distance=1.2, law=Balanced(2600), seed=8,
)
show(
    "imbalance axis (only the generative detector reacts)",
    run_sweep(SweepSpec(
        Axis.IMBALANCE, imbalance_world,
        (Balanced(15), UnbalancedPowerlaw(2.0, 300), UnbalancedUniform(300)),
        DETECTORS, seed=99,
    )),
)
