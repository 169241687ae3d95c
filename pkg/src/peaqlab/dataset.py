"""Subjective score tables, MOV feature tables and their joined view."""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fileio import atomic_write_text
from .errors import (
    DuplicateKey,
    EmptySelection,
    FeatureMismatch,
    InconsistentContentType,
    InconsistentFeatureSet,
    InputError,
    MissingColumn,
    NonPositiveCI,
    OutOfRangeScore,
    UnmatchedKeys,
)

SCORE_COLUMNS = ("item_id", "condition_id", "content_type", "mushra_mean", "ci95")
KEY_COLUMNS = ("item_id", "condition_id")


class ContentType(str, enum.Enum):
    MUSIC = "music"
    SPEECH = "speech"
    MIXED = "mixed"


CONTENT_SELECTORS = ("music", "speech", "mixed", "all")


@dataclass(frozen=True)
class ScoreRecord:
    item_id: str
    condition_id: str
    content_type: ContentType
    mushra_mean: float
    ci95: float
    listener_count: int | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.item_id, self.condition_id)


@dataclass(frozen=True)
class FeatureRecord:
    item_id: str
    condition_id: str
    features: Mapping[str, float]

    @property
    def key(self) -> tuple[str, str]:
        return (self.item_id, self.condition_id)


@dataclass(frozen=True)
class Record:
    """One (item, condition) data point: subjective score plus features."""

    item_id: str
    condition_id: str
    content_type: ContentType
    mushra_mean: float
    ci95: float
    features: Mapping[str, float]
    listener_count: int | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.item_id, self.condition_id)


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    feature_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def keys(self) -> list[tuple[str, str]]:
        return [r.key for r in self.records]

    @property
    def item_ids(self) -> np.ndarray:
        return np.array([r.item_id for r in self.records], dtype=object)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.mushra_mean for r in self.records], dtype=float)

    @property
    def ci95(self) -> np.ndarray:
        return np.array([r.ci95 for r in self.records], dtype=float)

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Feature matrix (rows x features) in the requested column order."""
        names = self.feature_names if names is None else tuple(names)
        unknown = [n for n in names if n not in self.feature_names]
        if unknown:
            raise FeatureMismatch(f"unknown feature(s) {unknown}; available: {list(self.feature_names)}")
        return np.array([[r.features[n] for n in names] for r in self.records], dtype=float).reshape(
            len(self.records), len(names)
        )

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.feature_names)


def _parse_float(raw: str, column: str, lineno: int) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InputError(f"line {lineno}: column {column!r} is not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"line {lineno}: column {column!r} is not finite: {raw!r}")
    return value


def _read_rows(source) -> tuple[list[str], list[tuple[int, dict]]]:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    # '#' lines carry run manifests and comments
    lines = [(i + 1, line) for i, line in enumerate(text.splitlines()) if not line.lstrip().startswith("#")]
    lines = [(i, line) for i, line in lines if line.strip()]
    if not lines:
        raise MissingColumn("file has no header")
    reader = csv.reader([line for _, line in lines])
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    out = []
    for (lineno, _), row in zip(lines[1:], rows[1:]):
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        out.append((lineno, dict(zip(header, (v.strip() for v in row)))))
    return header, out


def load_scores(path) -> list[ScoreRecord]:
    """Read and validate a ``scores.csv`` table.

    Required columns are ``item_id, condition_id, content_type, mushra_mean,
    ci95`` (half-width of the 95 % interval); ``listener_count`` is optional.
    Any malformed row rejects the whole file.
    """
    header, rows = _read_rows(path)
    missing = [c for c in SCORE_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"scores file lacks column(s) {missing}")
    records: list[ScoreRecord] = []
    seen: set[tuple[str, str]] = set()
    item_types: dict[str, ContentType] = {}
    for lineno, row in rows:
        key = (row["item_id"], row["condition_id"])
        if key in seen:
            raise DuplicateKey(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        try:
            ctype = ContentType(row["content_type"].lower())
        except ValueError:
            raise InputError(f"line {lineno}: unknown content_type {row['content_type']!r}") from None
        if item_types.setdefault(key[0], ctype) is not ctype:
            raise InconsistentContentType(
                f"line {lineno}: item {key[0]!r} is {ctype.value} but earlier rows say {item_types[key[0]].value}"
            )
        mean = _parse_float(row["mushra_mean"], "mushra_mean", lineno)
        if not 0.0 <= mean <= 100.0:
            raise OutOfRangeScore(f"line {lineno}: mushra_mean={mean:g} outside [0, 100] for {key}")
        ci = _parse_float(row["ci95"], "ci95", lineno)
        if ci <= 0.0:
            raise NonPositiveCI(f"line {lineno}: ci95={ci:g} must be > 0 for {key}")
        count = None
        if row.get("listener_count"):
            count = int(row["listener_count"])
        records.append(ScoreRecord(key[0], key[1], ctype, mean, ci, count))
    return records


def load_features(path) -> list[FeatureRecord]:
    """Read a ``features.csv`` table: key columns followed by feature columns."""
    header, rows = _read_rows(path)
    missing = [c for c in KEY_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"features file lacks column(s) {missing}")
    names = [h for h in header if h not in KEY_COLUMNS]
    records = []
    seen = set()
    for lineno, row in rows:
        key = (row["item_id"], row["condition_id"])
        if key in seen:
            raise DuplicateKey(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        feats = {n: _parse_float(row[n], n, lineno) for n in names}
        records.append(FeatureRecord(key[0], key[1], feats))
    return records


def join_features(scores: Sequence[ScoreRecord], features: Sequence[FeatureRecord]) -> Dataset:
    """Inner-join scores and features on (item_id, condition_id).

    The join must be complete; unmatched keys on either side raise
    :class:`UnmatchedKeys` listing every offender. Rows come out in canonical
    key order so that the result does not depend on input order.
    """
    names = None
    for f in features:
        current = tuple(sorted(f.features))
        if names is None:
            names = current
        elif current != names:
            raise InconsistentFeatureSet(
                f"feature row {f.key} has columns {list(current)}, expected {list(names)}"
            )
        bad = [n for n, v in f.features.items() if not math.isfinite(v)]
        if bad:
            raise InputError(f"feature row {f.key} has non-finite values in {bad}")
    if features:
        # keep the column order of the first feature row
        names = tuple(features[0].features)
    by_key = {f.key: f for f in features}
    score_keys = {s.key for s in scores}
    missing_features = score_keys - by_key.keys()
    missing_scores = by_key.keys() - score_keys
    if missing_features or missing_scores:
        raise UnmatchedKeys(missing_features, missing_scores)
    records = tuple(
        Record(
            s.item_id,
            s.condition_id,
            s.content_type,
            s.mushra_mean,
            s.ci95,
            dict(by_key[s.key].features),
            s.listener_count,
        )
        for s in sorted(scores, key=lambda s: s.key)
    )
    return Dataset(records, names or ())


def filter_content(ds: Dataset, selector: str) -> Dataset:
    """Restrict ``ds`` to one content type; ``"all"`` returns ``ds`` itself."""
    if selector not in CONTENT_SELECTORS:
        raise InputError(f"content selector must be one of {CONTENT_SELECTORS}, got {selector!r}")
    if selector == "all":
        return ds
    wanted = ContentType(selector)
    out = Dataset(tuple(r for r in ds.records if r.content_type is wanted), ds.feature_names)
    if not out.records:
        warnings.warn(EmptySelection(f"no rows with content type {selector!r}"), stacklevel=2)
    return out


def load_dataset(scores_path, features_path) -> Dataset:
    return join_features(load_scores(scores_path), load_features(features_path))


def _fmt(value: float) -> str:
    return repr(float(value))


def write_scores(records: Iterable, path_or_buf, comment: str | None = None) -> None:
    rows = list(records)
    with_counts = any(r.listener_count is not None for r in rows)
    header = list(SCORE_COLUMNS) + (["listener_count"] if with_counts else [])
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        line = [r.item_id, r.condition_id, r.content_type.value, _fmt(r.mushra_mean), _fmt(r.ci95)]
        if with_counts:
            line.append("" if r.listener_count is None else str(r.listener_count))
        writer.writerow(line)
    _emit(buf.getvalue(), path_or_buf)


def write_features(records: Iterable, names: Sequence[str], path_or_buf, comment: str | None = None) -> None:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(KEY_COLUMNS) + list(names))
    for r in records:
        writer.writerow([r.item_id, r.condition_id] + [_fmt(r.features[n]) for n in names])
    _emit(buf.getvalue(), path_or_buf)


def write_dataset(ds: Dataset, scores_path, features_path) -> None:
    write_scores(ds.records, scores_path)
    write_features(ds.records, ds.feature_names, features_path)


def _emit(text: str, path_or_buf) -> None:
    if isinstance(path_or_buf, (str, Path)):
        atomic_write_text(path_or_buf, text)
    else:
        path_or_buf.write(text)


def with_feature(ds: Dataset, name: str, values: Sequence[float]) -> Dataset:
    """Return a copy of ``ds`` with one extra (or replaced) feature column."""
    values = list(values)
    if len(values) != len(ds):
        raise InputError(f"expected {len(ds)} values for feature {name!r}, got {len(values)}")
    records = tuple(replace(r, features={**r.features, name: float(v)}) for r, v in zip(ds.records, values))
    names = ds.feature_names if name in ds.feature_names else ds.feature_names + (name,)
    return Dataset(records, names)
