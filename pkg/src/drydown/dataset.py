"""Domain model and CSV ingestion for dry-down experiments.

Three input streams are supported, all CSV (UTF-8, `.` decimal separator,
ISO-8601 dates):

* ``features.csv``      experiment,pot,genotype,treatment,time,<feature columns...>
* ``manual_areas.csv``  experiment,pot,genotype,treatment,date,total_area_mm2
* ``weights.csv``       experiment,pot,time,weight_g,irrigation_g

Manual measurement dates carry no time of day; they are anchored at the
start of their day when matched against image timestamps, so a 0.5-day
window pairs them with any morning image from the same day.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time as dtime
from pathlib import Path

from .errors import MissingColumn, NonMonotoneTime, NonNumericValue, UnknownTreatment

CONTROL = "Control"
STRESSED = "Stressed"
TREATMENTS = (CONTROL, STRESSED)

#: The four image features used as linear-model predictors.
MANDATORY_FEATURES = ("area_sens", "hull_area", "bounding_rectangle", "height")

FEATURE_META_COLUMNS = ("experiment", "pot", "genotype", "treatment", "time")
MANUAL_COLUMNS = ("experiment", "pot", "genotype", "treatment", "date", "total_area_mm2")
WEIGHT_COLUMNS = ("experiment", "pot", "time", "weight_g", "irrigation_g")


@dataclass(frozen=True, order=True)
class PlantId:
    experiment: str
    pot: int
    genotype: str = ""
    treatment: str = ""

    @property
    def key(self):
        """Identity key: (experiment, pot). Genotype/treatment are attributes."""
        return (self.experiment, self.pot)

    @property
    def label(self):
        return f"{self.experiment}:{self.pot}"


@dataclass(frozen=True)
class FeatureRecord:
    plant: PlantId
    time: datetime
    features: dict  # ordered name -> float | None (absent value)

    def feature(self, name):
        value = self.features.get(name)
        return value


@dataclass(frozen=True)
class ManualAreaRecord:
    plant: PlantId
    time: date
    total_area: float  # mm^2


@dataclass(frozen=True)
class WeightRecord:
    plant: PlantId
    time: datetime
    weight: float      # g
    irrigation: float  # g of water added since previous record


@dataclass(frozen=True)
class ObservationPair:
    plant: PlantId
    time: date
    features: FeatureRecord
    observed_area: float


@dataclass
class AlignmentResult:
    pairs: list
    dropped: list  # ManualAreaRecord without any feature record in the window

    @property
    def n_pairs(self):
        return len(self.pairs)

    @property
    def n_dropped(self):
        return len(self.dropped)


@dataclass
class Experiment:
    id: str
    start: date
    end: date
    plants: set
    features: list
    manual: list
    weights: list

    def day_of(self, t):
        """Fractional days since the experiment start (midnight)."""
        if isinstance(t, datetime):
            delta = t - datetime.combine(self.start, dtime.min)
            return delta.total_seconds() / 86400.0
        return (t - self.start).days * 1.0


def normalize_treatment(value):
    folded = str(value).strip().casefold()
    for canonical in TREATMENTS:
        if folded == canonical.casefold():
            return canonical
    raise UnknownTreatment(value)


def _parse_float(text, row, column, required=True):
    text = text.strip() if text is not None else ""
    if text == "":
        if required:
            raise NonNumericValue(row, column, text)
        return None
    try:
        value = float(text)
    except ValueError:
        raise NonNumericValue(row, column, text) from None
    if not math.isfinite(value):
        raise NonNumericValue(row, column, text)
    return value


def _parse_int(text, row, column):
    value = _parse_float(text, row, column)
    if value != int(value):
        raise NonNumericValue(row, column, text)
    return int(value)


def _parse_datetime(text, row, column):
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise NonNumericValue(row, column, text) from None


def _parse_date(text, row, column):
    try:
        return datetime.fromisoformat(text.strip()).date()
    except ValueError:
        raise NonNumericValue(row, column, text) from None


def _open_rows(source):
    """Yield csv rows from a path, file object, or string content."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        with open(source, newline="", encoding="utf-8") as handle:
            yield from csv.reader(handle)
    elif isinstance(source, str):
        yield from csv.reader(io.StringIO(source))
    else:
        yield from csv.reader(source)


def _header_index(header, required):
    index = {name: i for i, name in enumerate(header)}
    for name in required:
        if name not in index:
            raise MissingColumn(name)
    return index


def parse_features(source):
    """Parse a features CSV into FeatureRecord rows (row order preserved).

    Unknown columns are retained as features under their header names; the
    four mandatory predictor columns must exist in the header. Empty cells in
    non-mandatory columns become absent (None) values.
    """
    rows = _open_rows(source)
    header = next(rows, None)
    if header is None:
        raise MissingColumn("experiment")
    index = _header_index(header, FEATURE_META_COLUMNS + MANDATORY_FEATURES)
    feature_names = [c for c in header if c not in FEATURE_META_COLUMNS]

    records = []
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        plant = PlantId(
            experiment=row[index["experiment"]].strip(),
            pot=_parse_int(row[index["pot"]], n, "pot"),
            genotype=row[index["genotype"]].strip(),
            treatment=normalize_treatment(row[index["treatment"]]),
        )
        when = _parse_datetime(row[index["time"]], n, "time")
        features = {}
        for name in feature_names:
            required = name in MANDATORY_FEATURES
            features[name] = _parse_float(row[index[name]], n, name, required=required)
        records.append(FeatureRecord(plant=plant, time=when, features=features))
    return records


def parse_manual_areas(source):
    rows = _open_rows(source)
    header = next(rows, None)
    if header is None:
        raise MissingColumn("experiment")
    index = _header_index(header, MANUAL_COLUMNS)
    records = []
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        plant = PlantId(
            experiment=row[index["experiment"]].strip(),
            pot=_parse_int(row[index["pot"]], n, "pot"),
            genotype=row[index["genotype"]].strip(),
            treatment=normalize_treatment(row[index["treatment"]]),
        )
        records.append(
            ManualAreaRecord(
                plant=plant,
                time=_parse_date(row[index["date"]], n, "date"),
                total_area=_parse_float(row[index["total_area_mm2"]], n, "total_area_mm2"),
            )
        )
    return records


def parse_weights(source, plants=None):
    """Parse a weights CSV.

    `plants` optionally maps (experiment, pot) to a full PlantId so records
    carry genotype/treatment; without it the id holds experiment and pot only.
    """
    rows = _open_rows(source)
    header = next(rows, None)
    if header is None:
        raise MissingColumn("experiment")
    index = _header_index(header, WEIGHT_COLUMNS)
    records = []
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        key = (row[index["experiment"]].strip(), _parse_int(row[index["pot"]], n, "pot"))
        plant = plants.get(key) if plants else None
        if plant is None:
            plant = PlantId(experiment=key[0], pot=key[1])
        records.append(
            WeightRecord(
                plant=plant,
                time=_parse_datetime(row[index["time"]], n, "time"),
                weight=_parse_float(row[index["weight_g"]], n, "weight_g"),
                irrigation=_parse_float(row[index["irrigation_g"]], n, "irrigation_g"),
            )
        )
    return records


def plant_registry(features):
    """Map (experiment, pot) -> PlantId from feature records."""
    registry = {}
    for rec in features:
        registry.setdefault(rec.plant.key, rec.plant)
    return registry


def align_observations(features, manual, window_days=0.5):
    """Pair each manual area measurement with the nearest feature record.

    For each manual record the feature record of the same plant whose
    timestamp is nearest (within `window_days` of the date, anchored at the
    start of the day) is selected; ties break toward the earlier timestamp.
    Manual records with no candidate are dropped and reported, not raised.

    Deterministic and independent of input row order.
    """
    by_plant = {}
    for rec in features:
        by_plant.setdefault(rec.plant.key, []).append(rec)
    for records in by_plant.values():
        records.sort(key=lambda r: r.time)

    pairs, dropped = [], []
    for obs in sorted(manual, key=lambda m: (m.plant.key, m.time)):
        anchor = datetime.combine(obs.time, dtime.min)
        candidates = by_plant.get(obs.plant.key, ())
        best = None
        best_gap = None
        for rec in candidates:
            gap = abs((rec.time - anchor).total_seconds()) / 86400.0
            if gap <= window_days and (best_gap is None or gap < best_gap):
                best, best_gap = rec, gap
        if best is None:
            dropped.append(obs)
        else:
            pairs.append(
                ObservationPair(
                    plant=obs.plant,
                    time=obs.time,
                    features=best,
                    observed_area=obs.total_area,
                )
            )
    return AlignmentResult(pairs=pairs, dropped=dropped)


@dataclass
class Violation:
    kind: str
    detail: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    replication: dict = field(default_factory=dict)  # (genotype, treatment) -> plant count

    @property
    def ok(self):
        return not self.violations

    def to_text(self):
        lines = []
        if self.ok:
            lines.append("validation: OK (no violations)")
        else:
            lines.append(f"validation: {len(self.violations)} violation(s)")
            for v in self.violations:
                lines.append(f"  [{v.kind}] {v.detail}")
        lines.append("replication (genotype, treatment -> plants):")
        for (genotype, treatment), count in sorted(self.replication.items()):
            lines.append(f"  {genotype} {treatment}: {count}")
        return "\n".join(lines)

    def to_json_dict(self):
        return {
            "ok": self.ok,
            "violations": [{"kind": v.kind, "detail": v.detail} for v in self.violations],
            "replication": [
                {"genotype": g, "treatment": t, "plants": c}
                for (g, t), c in sorted(self.replication.items())
            ],
        }


def validate_experiment(experiment):
    """Check design consistency; returns a report, never raises."""
    report = ValidationReport()

    seen = {}
    for plant in sorted(experiment.plants):
        if plant.key in seen and seen[plant.key] != plant:
            report.violations.append(
                Violation("duplicate_pot", f"pot {plant.pot} in {plant.experiment} "
                          f"declared with conflicting genotype/treatment")
            )
        seen.setdefault(plant.key, plant)

    # genotype/treatment must be constant across all records of a pot
    attrs = {}
    for rec in list(experiment.features) + list(experiment.manual):
        known = attrs.setdefault(rec.plant.key, rec.plant)
        if (known.genotype, known.treatment) != (rec.plant.genotype, rec.plant.treatment):
            report.violations.append(
                Violation(
                    "inconsistent_plant",
                    f"pot {rec.plant.pot} in {rec.plant.experiment} appears with both "
                    f"({known.genotype}, {known.treatment}) and "
                    f"({rec.plant.genotype}, {rec.plant.treatment})",
                )
            )

    by_plant = {}
    for rec in experiment.weights:
        by_plant.setdefault(rec.plant.key, []).append(rec)
    for key, records in sorted(by_plant.items()):
        times = [r.time for r in records]
        if any(b <= a for a, b in zip(times, times[1:])):
            report.violations.append(
                Violation("weight_time_order",
                          f"weight timestamps not strictly increasing for pot {key[1]} in {key[0]}")
            )

    for plant in experiment.plants:
        if plant.genotype and plant.treatment:
            k = (plant.genotype, plant.treatment)
            report.replication[k] = report.replication.get(k, 0) + 1
    return report


# --- serialization -------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    return repr(float(value))


def write_features_csv(records, path):
    feature_names = list(records[0].features) if records else list(MANDATORY_FEATURES)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(FEATURE_META_COLUMNS) + feature_names)
        for rec in records:
            writer.writerow(
                [rec.plant.experiment, rec.plant.pot, rec.plant.genotype,
                 rec.plant.treatment, rec.time.isoformat()]
                + [_fmt(rec.features.get(name)) for name in feature_names]
            )


def write_manual_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(MANUAL_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.plant.experiment, rec.plant.pot, rec.plant.genotype,
                 rec.plant.treatment, rec.time.isoformat(), _fmt(rec.total_area)]
            )


def write_weights_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(WEIGHT_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.plant.experiment, rec.plant.pot, rec.time.isoformat(),
                 _fmt(rec.weight), _fmt(rec.irrigation)]
            )


def load_experiment(directory, features_csv="features.csv",
                    manual_csv="manual_areas.csv", weights_csv="weights.csv"):
    """Assemble an Experiment from the three CSVs in `directory`."""
    directory = Path(directory)
    features = parse_features(directory / features_csv)
    manual_path = directory / manual_csv
    manual = parse_manual_areas(manual_path) if manual_path.exists() else []
    registry = plant_registry(features)
    for rec in manual:
        registry.setdefault(rec.plant.key, rec.plant)
    weights_path = directory / weights_csv
    weights = parse_weights(weights_path, plants=registry) if weights_path.exists() else []

    dates = [rec.time.date() for rec in features]
    dates += [rec.time for rec in manual]
    dates += [rec.time.date() for rec in weights]
    if not dates:
        raise NonMonotoneTime("experiment has no dated records")
    experiment_ids = {rec.plant.experiment for rec in features}
    return Experiment(
        id=sorted(experiment_ids)[0] if experiment_ids else "",
        start=min(dates),
        end=max(dates),
        plants=set(registry.values()),
        features=features,
        manual=manual,
        weights=weights,
    )


def write_validation_report(report, text_path, json_path):
    Path(text_path).write_text(report.to_text() + "\n", encoding="utf-8")
    Path(json_path).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
