"""AIS CSV parsing, per-vessel windowing, domain partitioning and GeoJSON export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, ParameterError, SchemaError

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "mmsi": "MMSI",
    "timestamp": "BaseDateTime",
    "lat": "LAT",
    "lon": "LON",
    "sog": "SOG",
    "cog": "COG",
    "heading": "Heading",
    "length": "Length",
    "width": "Width",
    "draught": "Draft",
}
MANDATORY = ("mmsi", "timestamp", "lat", "lon")
ALLOWED_FEATURES = ("sog", "cog", "heading", "lat", "lon", "length", "width", "draught")
DEFAULT_FEATURES = ("lat", "lon", "sog", "cog", "heading")

HEADING_UNAVAILABLE = 511.0


@dataclass(frozen=True)
class AisRecord:
    mmsi: int
    timestamp: float
    lat: float
    lon: float
    sog: float | None = None
    cog: float | None = None
    heading: float | None = None
    length: float | None = None
    width: float | None = None
    draught: float | None = None

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError("lat out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError("lon out of range")
        if not self.timestamp > 0:
            raise ValueError("timestamp not positive")

    def get(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class Rejection:
    row: int
    reason: str

    def __str__(self):
        return f"{self.row}\t{self.reason}"


@dataclass
class ParseResult:
    records: list[AisRecord]
    rejections: list[Rejection]


@dataclass
class AisSequence:
    """A fixed-length window of one vessel's track, stored T x d."""

    mmsi: int
    start_time: float
    values: np.ndarray
    feature_names: tuple[str, ...]
    mask: np.ndarray
    times: np.ndarray
    first_record: AisRecord | None = None
    scaler: object | None = None
    split: str | None = None

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise ContractError(
                f"values shape {self.values.shape} does not match {len(self.feature_names)} feature names"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ContractError(f"duplicate feature names {self.feature_names}")
        if self.mask.shape != self.values.shape:
            raise ContractError("mask shape must equal values shape")
        if self.times.shape != (self.values.shape[0],):
            raise ContractError("times must have one entry per step")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def feature(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def with_values(self, values: np.ndarray, **changes) -> "AisSequence":
        kw = dict(
            mmsi=self.mmsi, start_time=self.start_time, values=values, feature_names=self.feature_names,
            mask=self.mask, times=self.times, first_record=self.first_record, scaler=self.scaler,
            split=self.split,
        )
        kw.update(changes)
        return AisSequence(**kw)


@dataclass
class DomainSplit:
    source: list[AisSequence]
    target: list[AisSequence]
    rule: str
    discarded: list[AisSequence] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        return {"source": len(self.source), "target": len(self.target), "discarded": len(self.discarded)}


# ---------------------------------------------------------------- parsing


def _parse_float(text: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite value")
    return value


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_timestamp(text: str, epoch: bool) -> float:
    text = text.strip()
    if epoch:
        return float(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _record_from_row(values: dict[str, str], epoch: bool) -> AisRecord:
    mmsi_text = values["mmsi"].strip()
    if not (mmsi_text.isdigit() and len(mmsi_text) == 9):
        raise ValueError("mmsi is not a 9-digit identifier")
    try:
        ts = parse_timestamp(values["timestamp"], epoch)
    except ValueError:
        raise ValueError("unparseable timestamp") from None
    if not ts > 0:
        raise ValueError("timestamp not positive")
    lat = _parse_float(values["lat"])
    lon = _parse_float(values["lon"])
    if lat is None:
        raise ValueError("lat missing")
    if lon is None:
        raise ValueError("lon missing")
    if not -90.0 <= lat <= 90.0:
        raise ValueError("lat out of range")
    if not -180.0 <= lon <= 180.0:
        raise ValueError("lon out of range")

    opt = {name: _parse_float(values[name]) if name in values else None
           for name in ("sog", "cog", "heading", "length", "width", "draught")}
    if opt["sog"] is not None and opt["sog"] < 0:
        raise ValueError("sog negative")
    cog = opt["cog"]
    if cog is not None:
        if cog == 360.0:
            opt["cog"] = None  # NOAA "not available"
        elif not 0.0 <= cog < 360.0:
            raise ValueError("cog out of range")
    heading = opt["heading"]
    if heading is not None:
        if heading == HEADING_UNAVAILABLE:
            opt["heading"] = None
        elif not 0.0 <= heading < 360.0:
            raise ValueError("heading out of range")
    for dim in ("length", "width"):
        if opt[dim] is not None:
            if opt[dim] < 0:
                raise ValueError(f"{dim} negative")
            if opt[dim] == 0:
                opt[dim] = None  # 0 encodes "unknown" in NOAA extracts
    if opt["draught"] is not None and opt["draught"] < 0:
        raise ValueError("draught negative")
    return AisRecord(int(mmsi_text), ts, lat, lon, **opt)


def parse_ais_csv(source, column_map: dict[str, str] | None = None) -> ParseResult:
    """Parse AIS records from CSV text with a header row.

    ``column_map`` maps canonical field names to header names and overrides
    :data:`DEFAULT_COLUMNS`.  Rows failing type or bounds checks land in the
    rejection log with their 1-based data row number; a missing mandatory
    column raises :class:`SchemaError`.
    """
    columns = dict(DEFAULT_COLUMNS)
    columns.update(column_map or {})
    fh = _open_text(source)
    close = isinstance(source, (str, os.PathLike))
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("CSV input is empty (no header row)") from None
        positions = {}
        for name, col in columns.items():
            if col in header:
                positions[name] = header.index(col)
        missing = [columns[m] for m in MANDATORY if m not in positions]
        if missing:
            raise SchemaError(f"missing mandatory column(s): {', '.join(missing)}")

        records: list[AisRecord] = []
        rejections: list[Rejection] = []
        epoch = None
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                rejections.append(Rejection(row_no, "too few fields"))
                continue
            values = {name: row[pos] for name, pos in positions.items()}
            if epoch is None and values["timestamp"].strip():
                epoch = _looks_numeric(values["timestamp"])
            try:
                records.append(_record_from_row(values, bool(epoch)))
            except ValueError as exc:
                rejections.append(Rejection(row_no, str(exc)))
        return ParseResult(records, rejections)
    finally:
        if close:
            fh.close()


def write_rejection_log(rejections: Iterable[Rejection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejections:
            fh.write(f"{r}\n")


# ---------------------------------------------------------------- windowing


def _record_sort_key(r: AisRecord):
    return (r.timestamp,) + tuple(-1.0 if v is None else v for v in (
        r.lat, r.lon, r.sog, r.cog, r.heading, r.length, r.width, r.draught))


def build_sequences(
    records: Iterable[AisRecord],
    T: int = 64,
    stride: int = 32,
    features: Iterable[str] = DEFAULT_FEATURES,
    max_gap: float | None = 3600.0,
) -> list[AisSequence]:
    """Cut each vessel's chronologically sorted track into windows of ``T`` records.

    Tracks are split wherever consecutive records are more than ``max_gap``
    seconds apart; trailing remainders shorter than ``T`` are dropped.
    Missing feature values appear as NaN with ``mask == False``.
    """
    features = tuple(features)
    if T < 2:
        raise ParameterError(f"window length T must be >= 2, got {T}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    bad = [f for f in features if f not in ALLOWED_FEATURES]
    if bad:
        raise ParameterError(f"unsupported feature(s) {bad}; allowed: {ALLOWED_FEATURES}")

    by_vessel: dict[int, list[AisRecord]] = {}
    for r in records:
        by_vessel.setdefault(r.mmsi, []).append(r)

    out: list[AisSequence] = []
    for mmsi in sorted(by_vessel):
        track = sorted(by_vessel[mmsi], key=_record_sort_key)
        deduped: list[AisRecord] = []
        for r in track:
            if deduped and r.timestamp == deduped[-1].timestamp:
                continue
            deduped.append(r)
        segments: list[list[AisRecord]] = [[]]
        for r in deduped:
            seg = segments[-1]
            if seg and max_gap is not None and r.timestamp - seg[-1].timestamp > max_gap:
                segments.append([r])
            else:
                seg.append(r)
        for seg in segments:
            for start in range(0, len(seg) - T + 1, stride):
                window = seg[start:start + T]
                vals = np.array(
                    [[np.nan if r.get(f) is None else r.get(f) for f in features] for r in window],
                    dtype=np.float64,
                )
                out.append(AisSequence(
                    mmsi=mmsi,
                    start_time=window[0].timestamp,
                    values=vals,
                    feature_names=features,
                    mask=~np.isnan(vals),
                    times=np.array([r.timestamp for r in window], dtype=np.float64),
                    first_record=window[0],
                ))
    return out


# ---------------------------------------------------------------- partitioning


@dataclass
class PartitionRule:
    """Classifies a sequence as ``"source"``, ``"target"`` or ``None`` (discard).

    ``classify`` may also return a collection of labels; a sequence labelled
    both source and target is a contract violation.
    """

    classify: Callable[[AisSequence], object]
    description: str

    def __call__(self, seq: AisSequence):
        return self.classify(seq)


def _origin(seq: AisSequence) -> tuple[float, float]:
    if seq.first_record is not None:
        return seq.first_record.lat, seq.first_record.lon
    return float(seq.feature("lat")[0]), float(seq.feature("lon")[0])


def meridian_rule(lon: float, west: str = "source") -> PartitionRule:
    east = "target" if west == "source" else "source"

    def classify(seq):
        return west if _origin(seq)[1] < lon else east

    return PartitionRule(classify, f"meridian lon={lon}: west->{west}, east->{east}")


def bbox_rule(source_box, target_box) -> PartitionRule:
    """Boxes are ``(lat_min, lat_max, lon_min, lon_max)``; unmatched sequences are discarded."""

    def inside(box, lat, lon):
        return box[0] <= lat <= box[1] and box[2] <= lon <= box[3]

    def classify(seq):
        lat, lon = _origin(seq)
        labels = set()
        if inside(source_box, lat, lon):
            labels.add("source")
        if inside(target_box, lat, lon):
            labels.add("target")
        return labels

    return PartitionRule(classify, f"bbox source={tuple(source_box)} target={tuple(target_box)}")


def attribute_rule(attribute: str, threshold: float, below: str = "source") -> PartitionRule:
    """Split by a static vessel attribute of the first record (e.g. ``length``)."""
    above = "target" if below == "source" else "source"

    def classify(seq):
        rec = seq.first_record
        value = rec.get(attribute) if rec is not None else None
        if value is None:
            return None
        return below if value < threshold else above

    return PartitionRule(classify, f"{attribute} < {threshold} -> {below}, else {above}")


def partition_domains(sequences: Iterable[AisSequence], rule) -> DomainSplit:
    if not isinstance(rule, PartitionRule):
        rule = PartitionRule(rule, getattr(rule, "__name__", "custom rule"))
    source, target, discarded = [], [], []
    for seq in sequences:
        label = rule(seq)
        labels = {label} if isinstance(label, str) or label is None else set(label)
        labels.discard(None)
        if labels - {"source", "target"}:
            raise ContractError(f"partition rule returned unknown label(s) {labels}")
        if labels == {"source", "target"}:
            raise ContractError(f"partition rule assigned sequence mmsi={seq.mmsi} start={seq.start_time} to both domains")
        if labels == {"source"}:
            source.append(seq)
        elif labels == {"target"}:
            target.append(seq)
        else:
            discarded.append(seq)
    split = DomainSplit(source, target, rule.description, discarded)
    log.info("partitioned sequences: %s", split.counts())
    return split


# ---------------------------------------------------------------- export


def to_geojson(sequences: Iterable[AisSequence]) -> dict:
    features = []
    for seq in sequences:
        if "lat" not in seq.feature_names or "lon" not in seq.feature_names:
            log.warning("skipping sequence mmsi=%s: no lat/lon features", seq.mmsi)
            continue
        lat = seq.feature("lat")
        lon = seq.feature("lon")
        coords = [[float(x), float(y)] for x, y in zip(lon, lat)]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"mmsi": int(seq.mmsi), "start_time": float(seq.start_time)},
        })
    return {"type": "FeatureCollection", "features": features}


def export_geojson(sequences: Iterable[AisSequence], path) -> dict:
    """Write one LineString per sequence with ``[lon, lat]`` positions."""
    doc = to_geojson(sequences)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return doc
