"""File formats end to end: tables, manifests, models, scores, reports.

Everything the command-line pipeline does, driven through the library:
write OODF dumps and a manifest, reload them, fit and serialize a model,
export score CSVs, emit the evaluation report JSON and a ROC SVG. Run from
anywhere; artifacts land in ./demo_artifacts.
"""

from pathlib import Path

from oodgate import (
    Balanced,
    DatasetManifest,
    ManifestEntry,
    Method,
    Role,
    SyntheticSpec,
    TableFormat,
    evaluate,
    fit_mahalanobis,
    generate_world,
    load_model,
    read_feature_table,
    read_scores,
    roc_curve,
    save_model,
    score_mahalanobis,
    write_feature_table,
    write_scores,
)
from oodgate.svg import roc_svg

out = Path("demo_artifacts")
out.mkdir(exist_ok=True)

world = generate_world(
    SyntheticSpec(classes=6, dim=8, class_separation=2.5, law=Balanced(200), seed=7)
)

# tables to disk: binary dump for bulk data, CSV where you want to look inside
write_feature_table(world.id_fit, out / "id_fit.oodf")
write_feature_table(world.id_test, out / "id_test.oodf")
write_feature_table(world.ood_tables["d2"], out / "ood.oodf")
write_feature_table(world.id_test, out / "id_test.csv", TableFormat.CSV)
reloaded = read_feature_table(out / "id_test.oodf")
assert reloaded == world.id_test  # binary round-trip is bit-exact
print(f"tables written under {out}/ (round-trip exact: {reloaded == world.id_test})")

manifest = DatasetManifest(
    (
        ManifestEntry("id_fit.oodf", Role.ID_FIT_DETECTOR, TableFormat.BINARY_DUMP),
        ManifestEntry("id_test.oodf", Role.ID_TEST, TableFormat.BINARY_DUMP),
        ManifestEntry("ood.oodf", Role.OOD_TEST, TableFormat.BINARY_DUMP, "demo"),
    ),
    name="demo-world",
    base_dir=out,
)
manifest.write(out / "world.manifest")
manifest.validate_for_eval()
print("manifest roles:", [e.role_text() for e in manifest.entries])

# fit once, serialize, reload: the OODM container carries means/covariance
model = fit_mahalanobis(manifest.load(manifest.single(Role.ID_FIT_DETECTOR)))
save_model(model, out / "model.oodm")
model = load_model(out / "model.oodm")
print(f"model: c={model.c}, d={model.d}, ridge={model.ridge}")

id_scores = score_mahalanobis(model, world.id_test.features)
ood_scores = score_mahalanobis(model, world.ood_tables["d2"].features)
write_scores(id_scores, out / "id_scores.csv")
write_scores(ood_scores, out / "ood_scores.csv")

# reports read back from the exported CSVs, exactly like the CLI does
report = evaluate(
    read_scores(out / "id_scores.csv", Method.MAH),
    read_scores(out / "ood_scores.csv", Method.MAH),
)
(out / "report.json").write_text(report.to_json())
(out / "roc.svg").write_text(roc_svg(roc_curve(id_scores, ood_scores)))
print(f"auroc {report.auroc:.3f}, fpr95 {report.fpr95:.3f} "
      f"-> {out}/report.json, {out}/roc.svg")
