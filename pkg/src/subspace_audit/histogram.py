"""Joint histograms over encoded features.

Records are discretized feature by feature into a fixed grid, and the joint
histogram over the Cartesian product of per-feature bins is the object every
query and baseline in this package consumes.  Counts and masses are stored
sparsely because real tables occupy a small fraction of the product grid,
which grows multiplicatively with each added feature.

All histogram types are immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Union

from .errors import EmptyInputError, ParameterError, SchemaError
from .fileio import atomic_write_text

Index = tuple[int, ...]

_FORMAT_HEADER = "# subspace-audit histogram v1"


@dataclass(frozen=True)
class FeatureSpec:
    """One encoded feature: an equal-width continuous grid or a category list."""

    name: str
    kind: str  # "continuous" | "categorical"
    lower: float = 0.0
    upper: float = 0.0
    bins: int = 0
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ParameterError("feature name must be non-empty")
        if self.kind == "continuous":
            if not self.lower < self.upper:
                raise ParameterError(f"feature {self.name!r}: lower must be below upper")
            if self.bins < 1:
                raise ParameterError(f"feature {self.name!r}: needs at least one bin")
        elif self.kind == "categorical":
            object.__setattr__(self, "categories", tuple(self.categories))
            if not self.categories:
                raise ParameterError(f"feature {self.name!r}: empty category list")
            if len(set(self.categories)) != len(self.categories):
                raise ParameterError(f"feature {self.name!r}: duplicate categories")
        else:
            raise ParameterError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def continuous(cls, name: str, lower: float, upper: float, bins: int) -> "FeatureSpec":
        return cls(name=name, kind="continuous", lower=float(lower), upper=float(upper), bins=int(bins))

    @classmethod
    def categorical(cls, name: str, categories: Iterable[str]) -> "FeatureSpec":
        return cls(name=name, kind="categorical", categories=tuple(categories))

    @property
    def bin_count(self) -> int:
        return self.bins if self.kind == "continuous" else len(self.categories)

    def bin_of(self, raw: str | None) -> int | None:
        """Bin index for a raw CSV value, or None when missing/unparsable.

        Continuous values use equal-width bins over [lower, upper]; values
        outside the range clamp to the boundary bins, and v == upper lands in
        the last bin.  Categorical values must match a declared category
        exactly.
        """
        if raw is None:
            return None
        text = raw.strip()
        if not text:
            return None
        if self.kind == "categorical":
            try:
                return self.categories.index(text)
            except ValueError:
                return None
        try:
            value = float(text)
        except ValueError:
            return None
        if math.isnan(value):
            return None
        if math.isinf(value):
            return 0 if value < 0 else self.bins - 1
        idx = math.floor(self.bins * (value - self.lower) / (self.upper - self.lower))
        return min(max(idx, 0), self.bins - 1)

    def centers(self) -> tuple[float, ...]:
        """Representative coordinate per bin: midpoints, or integer category codes."""
        if self.kind == "categorical":
            return tuple(float(i) for i in range(len(self.categories)))
        width = (self.upper - self.lower) / self.bins
        return tuple(self.lower + (i + 0.5) * width for i in range(self.bins))


@dataclass(frozen=True)
class BinningScheme:
    """Ordered feature grid; the joint domain has prod(per-feature bins) cells.

    Two schemes are compatible only when equal field by field, so histograms
    built from different configurations never silently mix.
    """

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ParameterError("scheme needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ParameterError("duplicate feature names in scheme")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.bin_count for f in self.features)

    @property
    def total_bins(self) -> int:
        n = 1
        for b in self.shape:
            n *= b
        return n

    def validate_index(self, idx: Index) -> None:
        shape = self.shape
        if len(idx) != len(shape):
            raise IndexError(f"index {idx} has {len(idx)} coordinates, scheme has {len(shape)}")
        for coord, width in zip(idx, shape):
            if not 0 <= coord < width:
                raise IndexError(f"index {idx} outside the {shape} grid")

    def flatten(self, idx: Index) -> int:
        """Row-major flat id of a multi-index."""
        flat = 0
        for coord, width in zip(idx, self.shape):
            flat = flat * width + coord
        return flat

    def unflatten(self, flat: int) -> Index:
        """Multi-index of a row-major flat id (mixed-radix decoding)."""
        out = []
        for width in reversed(self.shape):
            flat, coord = divmod(flat, width)
            out.append(coord)
        return tuple(reversed(out))

    def center_of(self, idx: Index) -> tuple[float, ...]:
        return tuple(f.centers()[i] for f, i in zip(self.features, idx))


@dataclass(frozen=True)
class JointHistogram:
    """Sparse raw counts over the joint grid; absent indices mean zero.

    `skipped` counts records that were dropped during ingestion because a
    feature value was missing or unparsable; they are reported, never imputed.
    """

    scheme: BinningScheme
    counts: Mapping[Index, int]
    total: int
    skipped: int = 0

    def __post_init__(self):
        counts = dict(self.counts)
        object.__setattr__(self, "counts", counts)
        for idx, c in counts.items():
            self.scheme.validate_index(idx)
            if c < 0:
                raise ParameterError(f"negative count at bin {idx}")
        if self.total != sum(counts.values()):
            raise ParameterError("total does not match the sum of counts")
        if self.skipped < 0:
            raise ParameterError("skipped count must be non-negative")

    def count(self, idx: Index) -> int:
        return self.counts.get(tuple(idx), 0)


@dataclass(frozen=True)
class ProbabilityHistogram:
    """Sparse non-negative masses over the joint grid.

    `normalize` produces genuine probability vectors (masses summing to one);
    `project` returns the same type restricted to a bin subset, whose total
    mass is then at most one.
    """

    scheme: BinningScheme
    masses: Mapping[Index, float]

    def __post_init__(self):
        masses = {idx: float(m) for idx, m in dict(self.masses).items()}
        object.__setattr__(self, "masses", masses)
        for idx, m in masses.items():
            self.scheme.validate_index(idx)
            if not m >= 0.0 or math.isinf(m):
                raise ParameterError(f"mass at bin {idx} must be finite and non-negative")

    def mass(self, idx: Index) -> float:
        return self.masses.get(tuple(idx), 0.0)

    def total_mass(self) -> float:
        return math.fsum(self.masses.values())


@dataclass(frozen=True)
class RecordFilter:
    """Equality test on one column; negate=True keeps the complement instead."""

    column: str
    value: str
    negate: bool = False

    def matches(self, row: Mapping[str, str | None]) -> bool:
        hit = row.get(self.column) == self.value
        return not hit if self.negate else hit


def bin_record(row: Mapping[str, str | None], scheme: BinningScheme) -> Index | None:
    """Joint bin of one record, or None when any feature value is unusable."""
    idx = []
    for feature in scheme.features:
        b = feature.bin_of(row.get(feature.name))
        if b is None:
            return None
        idx.append(b)
    return tuple(idx)


Source = Union[str, os.PathLike, IO[str], IO[bytes]]


def ingest_csv(source: Source, scheme: BinningScheme,
               record_filter: RecordFilter | None = None) -> JointHistogram:
    """Stream an RFC-4180 CSV (UTF-8, header row) into a joint histogram.

    Every surviving record increments exactly one bin.  Records with a
    missing or unparsable value in any scheme feature are excluded and
    tallied in the result's `skipped` field.

    Raises SchemaError when the header lacks a feature (or filter) column and
    EmptyInputError when no records survive — a zero-total histogram is never
    produced.
    """
    close, stream = _as_text_stream(source)
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames
        if header is None:
            raise EmptyInputError("CSV source is empty")
        required = [f.name for f in scheme.features]
        if record_filter is not None:
            required.append(record_filter.column)
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"CSV header is missing column(s): {', '.join(missing)}")
        counts: dict[Index, int] = {}
        total = skipped = matched = rows = 0
        for row in reader:
            rows += 1
            if record_filter is not None and not record_filter.matches(row):
                continue
            matched += 1
            idx = bin_record(row, scheme)
            if idx is None:
                skipped += 1
                continue
            counts[idx] = counts.get(idx, 0) + 1
            total += 1
    finally:
        if close:
            stream.close()
        elif isinstance(stream, io.TextIOWrapper) and stream is not source:
            stream.detach()
    if rows == 0:
        raise EmptyInputError("CSV source has a header but no data rows")
    if matched == 0:
        raise EmptyInputError("no records matched the filter")
    if total == 0:
        raise EmptyInputError("all matching records had missing or unparsable feature values")
    return JointHistogram(scheme=scheme, counts=counts, total=total, skipped=skipped)


def _as_text_stream(source: Source) -> tuple[bool, IO[str]]:
    if isinstance(source, (str, os.PathLike)):
        return True, open(source, "r", encoding="utf-8", newline="")
    if not hasattr(source, "read"):
        raise ParameterError("source must be a path or a readable file object")
    if isinstance(source, io.TextIOBase):
        return False, source
    probe = source.read(0)
    if isinstance(probe, str):
        return False, source  # text-mode duck type
    return False, io.TextIOWrapper(source, encoding="utf-8", newline="")


def normalize(hist: JointHistogram) -> ProbabilityHistogram:
    """Turn raw counts into bin masses on the same scheme."""
    if hist.total <= 0:
        raise EmptyInputError("cannot normalize a histogram with zero total")
    total = float(hist.total)
    masses = {idx: c / total for idx, c in hist.counts.items() if c > 0}
    return ProbabilityHistogram(scheme=hist.scheme, masses=masses)


def project(measure: ProbabilityHistogram, bins: Iterable[Index]) -> ProbabilityHistogram:
    """Restrict a measure to a subset of bins without renormalizing.

    The result keeps the masses of `measure` on `bins` and drops everything
    else, so it is a positive measure whose total is the restricted mass —
    not, in general, a probability measure.
    """
    subset = {tuple(idx) for idx in bins}
    if not subset:
        raise ParameterError("projection onto an empty bin set")
    for idx in subset:
        measure.scheme.validate_index(idx)
    kept = {idx: measure.masses[idx] for idx in subset if idx in measure.masses}
    return ProbabilityHistogram(scheme=measure.scheme, masses=kept)


# --- plain-text exchange format ---------------------------------------------
#
# Header block ('#'-prefixed): format tag, kind (counts|masses), totals, then
# one JSON line per feature.  Data lines: comma-joined multi-index, a tab, and
# the count or mass.  Bins are written in sorted order so identical histograms
# serialize byte-identically.


def format_histogram(hist: JointHistogram | ProbabilityHistogram) -> str:
    """Serialize a histogram to the plain-text exchange format."""
    lines = [_FORMAT_HEADER]
    if isinstance(hist, JointHistogram):
        lines.append("# kind: counts")
        lines.append(f"# total: {hist.total}")
        lines.append(f"# skipped: {hist.skipped}")
        entries: Mapping[Index, float] = hist.counts
        render = str
    else:
        lines.append("# kind: masses")
        entries = hist.masses
        render = repr
    for feature in hist.scheme.features:
        lines.append("# feature: " + json.dumps(_feature_to_json(feature)))
    for idx in sorted(entries):
        lines.append(",".join(str(i) for i in idx) + "\t" + render(entries[idx]))
    return "\n".join(lines) + "\n"


def parse_histogram(text: str) -> JointHistogram | ProbabilityHistogram:
    """Parse the plain-text exchange format back into a histogram."""
    lines = text.splitlines()
    if not lines or lines[0] != _FORMAT_HEADER:
        raise SchemaError("not a subspace-audit histogram file")
    kind = None
    total = skipped = None
    features: list[FeatureSpec] = []
    body_start = len(lines)
    for lineno, line in enumerate(lines[1:], start=1):
        if not line.startswith("#"):
            body_start = lineno
            break
        key, _, value = line[1:].partition(":")
        key = key.strip()
        value = value.strip()
        if key == "kind":
            kind = value
        elif key == "total":
            total = int(value)
        elif key == "skipped":
            skipped = int(value)
        elif key == "feature":
            features.append(_feature_from_json(value))
        else:
            raise SchemaError(f"unknown header line in histogram file: {line!r}")
    if kind not in ("counts", "masses"):
        raise SchemaError(f"histogram file declares no valid kind (got {kind!r})")
    if not features:
        raise SchemaError("histogram file declares no features")
    scheme = BinningScheme(features=tuple(features))
    entries: dict[Index, float] = {}
    for line in lines[body_start:]:
        if not line.strip():
            continue
        head, sep, tail = line.partition("\t")
        if not sep:
            raise SchemaError(f"malformed histogram line: {line!r}")
        idx = tuple(int(part) for part in head.split(","))
        entries[idx] = int(tail) if kind == "counts" else float(tail)
    try:
        if kind == "counts":
            declared = sum(entries.values()) if total is None else total
            return JointHistogram(scheme=scheme, counts={i: int(v) for i, v in entries.items()},
                                  total=declared, skipped=skipped or 0)
        return ProbabilityHistogram(scheme=scheme, masses=entries)
    except (ParameterError, IndexError) as exc:
        raise SchemaError(f"inconsistent histogram file: {exc}") from exc


def write_histogram(hist: JointHistogram | ProbabilityHistogram, path: str) -> None:
    atomic_write_text(str(path), format_histogram(hist))


def read_histogram(path: str) -> JointHistogram | ProbabilityHistogram:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_histogram(fh.read())


def _feature_to_json(feature: FeatureSpec) -> dict:
    if feature.kind == "continuous":
        return {"name": feature.name, "kind": "continuous",
                "lower": feature.lower, "upper": feature.upper, "bins": feature.bins}
    return {"name": feature.name, "kind": "categorical", "categories": list(feature.categories)}


def _feature_from_json(payload: str) -> FeatureSpec:
    try:
        data = json.loads(payload)
        if data["kind"] == "continuous":
            return FeatureSpec.continuous(data["name"], data["lower"], data["upper"], data["bins"])
        if data["kind"] == "categorical":
            return FeatureSpec.categorical(data["name"], data["categories"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"malformed feature line in histogram file: {payload!r}") from exc
    raise SchemaError(f"unknown feature kind in histogram file: {payload!r}")
