"""Tables, file formats, and dataset manifests.

Everything downstream consumes a :class:`FeatureTable`: per-sample feature
vectors (penultimate-layer activations), optional logits, and class labels.
Tables travel between tools either as a compact binary dump (``OODF``) or as
CSV, and evaluation runs are described by line-oriented manifests that tag
each table with its role (classifier-train / detector-fit / test / OOD test).

OODF layout (all little-endian):

========  ======================================================
bytes     meaning
========  ======================================================
0-3       magic ``OODF``
4-7       u32 format version (currently 1)
8-15      u64 sample count ``n``
16-23     u64 feature dimension ``d``
24-31     u64 logit count ``c`` (0 when logits are absent)
32        u8 dtype code (0 = IEEE-754 binary32)
33-39     reserved, zero
40-       row-major features (n*d f32), row-major logits (n*c
          f32), labels (n i32, -1 = unlabeled)
========  ======================================================
"""

from __future__ import annotations

import csv
import enum
import hashlib
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError

#: Label value marking a sample without a class (OOD test rows).
UNLABELED = -1

_MAGIC = b"OODF"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQB7x")  # magic, version, n, d, c, dtype code
_DTYPE_F32 = 0

# Spawn key for the splitting RNG stream (see SplitPolicy.seed).
_SPLIT_STREAM = 0x5B17


class TableFormat(str, enum.Enum):
    BINARY_DUMP = "BINARY_DUMP"
    CSV = "CSV"


def _first_bad_row(arr: np.ndarray) -> int:
    return int(np.argwhere(~np.isfinite(arr))[0][0])


class FeatureTable:
    """Immutable per-sample features, optional logits, and labels.

    Arrays are stored as 32-bit floats (the on-disk precision) and 32-bit
    label integers; inputs are cast on construction and validated afterwards,
    so a value that overflows binary32 is rejected rather than silently kept.
    """

    __slots__ = ("features", "logits", "labels")

    def __init__(
        self,
        features: np.ndarray,
        logits: np.ndarray | None,
        labels: np.ndarray,
    ) -> None:
        with np.errstate(over="ignore"):  # overflow is caught by the finite check
            features = np.ascontiguousarray(features, dtype=np.float32)
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        n, d = features.shape
        if n < 1 or d < 1:
            raise ValidationError(f"need n >= 1 and d >= 1, got {n}x{d}")
        if not np.isfinite(features).all():
            raise ValidationError(
                f"non-finite value in features at row {_first_bad_row(features)}"
            )

        if logits is not None:
            with np.errstate(over="ignore"):
                logits = np.ascontiguousarray(logits, dtype=np.float32)
            if logits.ndim != 2 or logits.shape[0] != n:
                raise ValidationError(
                    f"logits shape {logits.shape} does not match n={n}"
                )
            if logits.shape[1] < 2:
                raise ValidationError("logits need at least 2 classes")
            if not np.isfinite(logits).all():
                raise ValidationError(
                    f"non-finite value in logits at row {_first_bad_row(logits)}"
                )

        labels = np.ascontiguousarray(labels, dtype=np.int32)
        if labels.shape != (n,):
            raise ValidationError(f"labels shape {labels.shape} does not match n={n}")
        real = labels[labels != UNLABELED]
        if real.size and real.min() < 0:
            bad = int(np.argwhere((labels < 0) & (labels != UNLABELED))[0][0])
            raise ValidationError(f"negative label at row {bad}")
        if logits is not None and real.size and real.max() >= logits.shape[1]:
            bad = int(np.argwhere(labels >= logits.shape[1])[0][0])
            raise ValidationError(
                f"label out of range at row {bad}: {labels[bad]} >= c={logits.shape[1]}"
            )

        for arr in (features, logits, labels):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("FeatureTable is immutable")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def c(self) -> int:
        """Logit count; 0 when the table carries no logits."""
        return 0 if self.logits is None else self.logits.shape[1]

    @property
    def is_labeled(self) -> bool:
        return bool((self.labels != UNLABELED).all())

    def take(self, indices: np.ndarray) -> "FeatureTable":
        """Row subset (rows are copied verbatim, in the given order)."""
        idx = np.asarray(indices)
        return FeatureTable(
            self.features[idx],
            None if self.logits is None else self.logits[idx],
            self.labels[idx],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureTable):
            return NotImplemented
        if (self.logits is None) != (other.logits is None):
            return False
        same = (
            self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
            and self.labels.tobytes() == other.labels.tobytes()
        )
        if same and self.logits is not None:
            same = (
                self.logits.shape == other.logits.shape
                and self.logits.tobytes() == other.logits.tobytes()
            )
        return same

    def __hash__(self):  # pragma: no cover - tables are not dict keys
        return hash((self.n, self.d, self.c))

    def __repr__(self) -> str:
        return f"FeatureTable(n={self.n}, d={self.d}, c={self.c})"


def write_feature_table(
    table: FeatureTable, path: str | Path, fmt: TableFormat = TableFormat.BINARY_DUMP
) -> None:
    """Serialize a table; OODF round-trips bit-exactly."""
    path = Path(path)
    if fmt is TableFormat.BINARY_DUMP:
        header = _HEADER.pack(_MAGIC, _VERSION, table.n, table.d, table.c, _DTYPE_F32)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(table.features.tobytes())
            if table.logits is not None:
                fh.write(table.logits.tobytes())
            fh.write(table.labels.astype("<i4").tobytes())
    elif fmt is TableFormat.CSV:
        d, c = table.d, table.c
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["label"] + [f"f{j}" for j in range(d)] + [f"l{j}" for j in range(c)]
            )
            logits = table.logits
            for i in range(table.n):
                row = [str(int(table.labels[i]))]
                row += [repr(float(v)) for v in table.features[i]]
                if logits is not None:
                    row += [repr(float(v)) for v in logits[i]]
                writer.writerow(row)
    else:  # pragma: no cover - enum is closed
        raise ValidationError(f"unknown table format {fmt!r}")


def read_feature_table(
    path: str | Path, fmt: TableFormat = TableFormat.BINARY_DUMP
) -> FeatureTable:
    """Read and validate a table; malformed contents raise IngestionError."""
    path = Path(path)
    try:
        if fmt is TableFormat.BINARY_DUMP:
            return _read_binary(path)
        if fmt is TableFormat.CSV:
            return _read_csv(path)
    except ValidationError as exc:
        if isinstance(exc, IngestionError):
            raise
        raise IngestionError(f"{path}: {exc}") from exc
    raise ValidationError(f"unknown table format {fmt!r}")  # pragma: no cover


def _read_binary(path: Path) -> FeatureTable:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise IngestionError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, d, c, dtype_code = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise IngestionError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise IngestionError(f"{path}: unsupported version {version}")
    if dtype_code != _DTYPE_F32:
        raise IngestionError(f"{path}: unsupported dtype code {dtype_code}")
    expected = _HEADER.size + 4 * (n * d + n * c + n)
    if len(raw) != expected:
        raise IngestionError(
            f"{path}: payload is {len(raw)} bytes, format implies {expected}"
        )
    off = _HEADER.size
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += 4 * n * d
    logits = None
    if c:
        logits = np.frombuffer(raw, dtype="<f4", count=n * c, offset=off).reshape(n, c)
        off += 4 * n * c
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off)
    return FeatureTable(features, logits, labels)


def _parse_csv_header(header: list[str]) -> tuple[int, int]:
    if not header or header[0] != "label":
        raise IngestionError("CSV header must start with 'label'")
    d = sum(1 for name in header[1:] if name.startswith("f"))
    c = len(header) - 1 - d
    expected = ["label"] + [f"f{j}" for j in range(d)] + [f"l{j}" for j in range(c)]
    if header != expected:
        raise IngestionError(f"CSV header {header} does not match label,f0..,l0.. form")
    return d, c


def _read_csv(path: Path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        d, c = _parse_csv_header(header)
        labels, feats, logits = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1 + d + c:
                raise IngestionError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {1 + d + c}"
                )
            try:
                labels.append(int(row[0]))
                feats.append([float(v) for v in row[1 : 1 + d]])
                if c:
                    logits.append([float(v) for v in row[1 + d :]])
            except ValueError as exc:
                raise IngestionError(f"{path}: line {lineno}: {exc}") from exc
    if not labels:
        raise IngestionError(f"{path}: no data rows")
    return FeatureTable(
        np.array(feats, dtype=np.float64),
        np.array(logits, dtype=np.float64) if c else None,
        np.array(labels),
    )


# ---------------------------------------------------------------------------
# manifests


class Role(str, enum.Enum):
    ID_TRAIN_CLASSIFIER = "ID_TRAIN_CLASSIFIER"
    ID_FIT_DETECTOR = "ID_FIT_DETECTOR"
    ID_TEST = "ID_TEST"
    OOD_TEST = "OOD_TEST"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    role: Role
    fmt: TableFormat
    ood_name: str = ""

    def role_text(self) -> str:
        if self.role is Role.OOD_TEST:
            return f"OOD_TEST({self.ood_name})"
        return self.role.value


def _parse_role(text: str) -> tuple[Role, str]:
    if text.startswith("OOD_TEST(") and text.endswith(")"):
        return Role.OOD_TEST, text[len("OOD_TEST(") : -1]
    try:
        role = Role(text)
    except ValueError:
        raise IngestionError(f"unknown manifest role {text!r}") from None
    if role is Role.OOD_TEST:
        raise IngestionError("OOD_TEST entries must carry a name: OOD_TEST(name)")
    return role, ""


@dataclass(frozen=True)
class DatasetManifest:
    """Tagged table paths for one evaluation run.

    Entry paths are interpreted relative to ``base_dir`` (the directory the
    manifest was read from, or wherever it will be written).
    """

    entries: tuple[ManifestEntry, ...]
    name: str = ""
    base_dir: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.base_dir / p

    def single(self, role: Role) -> ManifestEntry:
        found = [e for e in self.entries if e.role is role]
        if len(found) != 1:
            raise ValidationError(
                f"manifest needs exactly one {role.value} entry, found {len(found)}"
            )
        return found[0]

    def ood_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role is Role.OOD_TEST]

    def load(self, entry: ManifestEntry) -> FeatureTable:
        return read_feature_table(self.resolve(entry), entry.fmt)

    def validate_for_eval(self) -> None:
        """One ID_TEST, at least one OOD_TEST, fit/test disjoint by path."""
        self.single(Role.ID_TEST)
        if not self.ood_entries():
            raise ValidationError("manifest has no OOD_TEST entry")
        self.check_disjoint()

    def check_disjoint(self, content_hash: bool = False) -> None:
        fit = [e for e in self.entries if e.role is Role.ID_FIT_DETECTOR]
        test = [e for e in self.entries if e.role is Role.ID_TEST]
        for ef in fit:
            for et in test:
                if self.resolve(ef).resolve() == self.resolve(et).resolve():
                    raise ValidationError(
                        f"detector-fit and test entries share the path {ef.path!r}"
                    )
                if content_hash and _sha256(self.resolve(ef)) == _sha256(
                    self.resolve(et)
                ):
                    raise ValidationError(
                        f"detector-fit table {ef.path!r} and test table "
                        f"{et.path!r} have identical contents"
                    )

    def write(self, path: str | Path) -> None:
        path = Path(path)
        lines = []
        if self.name:
            lines.append(f"# name: {self.name}")
        for e in self.entries:
            lines.append(f"{e.role_text()}\t{e.fmt.value}\t{e.path}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def read(path: str | Path) -> "DatasetManifest":
        path = Path(path)
        name = ""
        entries = []
        for lineno, line in enumerate(
            path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                comment = line.lstrip("#").strip()
                if comment.startswith("name:"):
                    name = comment[len("name:") :].strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(
                    f"{path}: line {lineno}: expected role<TAB>format<TAB>path"
                )
            role_text, fmt_text, entry_path = parts
            role, ood_name = _parse_role(role_text)
            try:
                fmt = TableFormat(fmt_text)
            except ValueError:
                raise IngestionError(
                    f"{path}: line {lineno}: unknown format {fmt_text!r}"
                ) from None
            entries.append(ManifestEntry(entry_path, role, fmt, ood_name))
        return DatasetManifest(tuple(entries), name=name, base_dir=path.parent)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitPolicy:
    """Deterministic three-way split of labeled ID data.

    ``train_fraction`` of each class goes to the classifier-train part (ID1);
    the remainder is split by ``detector_vs_test_fraction`` into detector-fit
    (ID2) and test (ID3). Fractional sizes round by flooring the earlier part.
    """

    train_fraction: float = 0.7
    detector_vs_test_fraction: float = 0.5
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("train_fraction", "detector_vs_test_fraction"):
            f = getattr(self, name)
            if not 0.0 < f < 1.0:
                raise ValidationError(f"{name} must be strictly inside (0,1), got {f}")
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")


def _part_sizes(m: int, f1: float, f2: float) -> list[int]:
    """Per-class part sizes: floor for the earlier part, remainder flows on."""
    n1 = int(np.floor(m * f1))
    rem = m - n1
    n2 = int(np.floor(rem * f2))
    sizes = [n1, n2, rem - n2]
    # A class with >= 3 samples must appear in every part; steal from the
    # largest part (earliest on ties) until none is empty.
    for i in range(3):
        while sizes[i] == 0:
            j = int(np.argmax(sizes))
            sizes[j] -= 1
            sizes[i] += 1
    return sizes


def split_id_data(
    table: FeatureTable, policy: SplitPolicy
) -> tuple[FeatureTable, FeatureTable, FeatureTable]:
    """Stratified (ID1, ID2, ID3) partition, deterministic under the seed.

    Classes with fewer samples than parts cannot cover all three parts; they
    are assigned preferentially to ID1 then ID3 with a warning.
    """
    if table.n < 3:
        raise ValidationError(f"cannot split a table with n={table.n} < 3")
    if not table.is_labeled:
        raise ValidationError("split requires a fully labeled table")

    rng = np.random.default_rng(
        np.random.SeedSequence(policy.seed, spawn_key=(_SPLIT_STREAM,))
    )
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in np.unique(table.labels):
        idx = rng.permutation(np.flatnonzero(table.labels == cls))
        m = idx.size
        if m < 3:
            warnings.warn(
                f"class {cls} has only {m} sample(s); assigning to ID1"
                + ("/ID3" if m == 2 else "")
            )
            sizes = [1, 0, 0] if m == 1 else [1, 0, 1]
        else:
            sizes = _part_sizes(m, policy.train_fraction, policy.detector_vs_test_fraction)
        bounds = np.cumsum([0] + sizes)
        for p in range(3):
            parts[p].append(idx[bounds[p] : bounds[p + 1]])

    out = []
    for chunks in parts:
        sel = np.sort(np.concatenate(chunks)) if chunks else np.array([], dtype=int)
        if sel.size == 0:
            raise ValidationError("a split part received no samples")
        out.append(table.take(sel))
    return out[0], out[1], out[2]
