import random
from datetime import date, datetime

import pytest

from drydown import synth
from drydown.dataset import (
    FeatureRecord,
    ManualAreaRecord,
    PlantId,
    align_observations,
    load_experiment,
    parse_features,
    parse_manual_areas,
    parse_weights,
    plant_registry,
    validate_experiment,
    write_features_csv,
)
from drydown.errors import MissingColumn, NonNumericValue, UnknownTreatment

HEADER = "experiment,pot,genotype,treatment,time,area_sens,hull_area,bounding_rectangle,height"


def test_parse_features_single_row():
    csv = HEADER + "\nE1,1,G01,Control,2023-05-01T11:00:00,1000,2500,4000,300\n"
    records = parse_features(csv)
    assert len(records) == 1
    rec = records[0]
    assert rec.plant == PlantId("E1", 1, "G01", "Control")
    assert rec.features["area_sens"] == 1000
    assert rec.features["hull_area"] == 2500
    assert rec.features["bounding_rectangle"] == 4000
    assert rec.features["height"] == 300


def test_parse_features_missing_mandatory_column():
    csv = ("experiment,pot,genotype,treatment,time,area_sens,bounding_rectangle,height\n"
           "E1,1,G01,Control,2023-05-01T11:00:00,1,2,3\n")
    with pytest.raises(MissingColumn) as err:
        parse_features(csv)
    assert err.value.column == "hull_area"


def test_parse_features_unknown_columns_preserved():
    csv = (HEADER + ",weird_extra\n"
           "E1,1,G01,Control,2023-05-01T11:00:00,1,2,3,4,99\n")
    records = parse_features(csv)
    assert records[0].features["weird_extra"] == 99


def test_parse_features_treatment_case_folded():
    csv = HEADER + "\nE1,1,G01,sTReSSeD,2023-05-01T11:00:00,1,2,3,4\n"
    assert parse_features(csv)[0].plant.treatment == "Stressed"
    with pytest.raises(UnknownTreatment):
        parse_features(HEADER + "\nE1,1,G01,watered,2023-05-01T11:00:00,1,2,3,4\n")


def test_parse_features_non_numeric_names_row_and_column():
    csv = HEADER + "\nE1,1,G01,Control,2023-05-01T11:00:00,1,abc,3,4\n"
    with pytest.raises(NonNumericValue) as err:
        parse_features(csv)
    assert err.value.row == 2
    assert err.value.column == "hull_area"


def test_parse_features_optional_column_may_be_empty():
    csv = HEADER + ",optional\nE1,1,G01,Control,2023-05-01T11:00:00,1,2,3,4,\n"
    assert parse_features(csv)[0].features["optional"] is None


def test_synthetic_file_counts(tmp_path):
    config = synth.SynthConfig(seed=3, n_days=12)
    synth.write_synthetic(config, tmp_path)
    records = parse_features(tmp_path / "features.csv")
    assert len(records) == 96 * 12
    per_plant = {}
    for rec in records:
        per_plant.setdefault(rec.plant.key, []).append(rec)
    assert len(per_plant) == 96
    assert all(len(v) == 12 for v in per_plant.values())


def test_features_round_trip(tmp_path, default_cohort):
    experiment, _ = default_cohort
    path = tmp_path / "roundtrip.csv"
    write_features_csv(experiment.features, path)
    assert parse_features(path) == experiment.features


def _feature_at(day_fraction, pot=1):
    base = datetime(2023, 5, 1)
    stamp = datetime.fromtimestamp(base.timestamp() + day_fraction * 86400)
    plant = PlantId("E1", pot, "G01", "Control")
    return FeatureRecord(plant=plant, time=stamp,
                         features={"area_sens": 1.0, "hull_area": 1.0,
                                   "bounding_rectangle": 1.0, "height": 1.0})


def _manual_on(day, area=500.0, pot=1):
    plant = PlantId("E1", pot, "G01", "Control")
    return ManualAreaRecord(plant=plant, time=date(2023, 5, 1 + day), total_area=area)


def test_align_picks_nearest_within_window():
    features = [_feature_at(4.9), _feature_at(5.8)]
    result = align_observations(features, [_manual_on(5)], window_days=0.5)
    assert result.n_pairs == 1
    assert result.pairs[0].features is features[0]
    assert result.n_dropped == 0


def test_align_drops_outside_window():
    result = align_observations([_feature_at(6.2)], [_manual_on(5)], window_days=0.5)
    assert result.n_pairs == 0
    assert result.n_dropped == 1
    assert result.dropped[0].time == date(2023, 5, 6)


def test_align_synthetic_full_coverage(default_cohort):
    experiment, _ = default_cohort
    result = align_observations(experiment.features, experiment.manual, 0.5)
    assert result.n_pairs == len(experiment.manual)
    assert result.n_dropped == 0


def test_align_order_independent(default_cohort):
    experiment, _ = default_cohort
    features = list(experiment.features)
    manual = list(experiment.manual)
    baseline = align_observations(features, manual, 0.5)
    rng = random.Random(5)
    rng.shuffle(features)
    rng.shuffle(manual)
    shuffled = align_observations(features, manual, 0.5)
    assert shuffled.pairs == baseline.pairs


def test_align_window_bound_holds(default_cohort):
    experiment, _ = default_cohort
    result = align_observations(experiment.features, experiment.manual, 0.5)
    for pair in result.pairs:
        anchor = datetime(pair.time.year, pair.time.month, pair.time.day)
        gap = abs((pair.features.time - anchor).total_seconds()) / 86400.0
        assert gap <= 0.5


def test_validate_well_formed(default_cohort):
    experiment, _ = default_cohort
    report = validate_experiment(experiment)
    assert report.ok
    for (_, treatment), count in report.replication.items():
        assert count == (4 if treatment == "Control" else 8)


def test_validate_flags_genotype_conflict(default_cohort):
    experiment, _ = default_cohort
    bad = experiment.features[0]
    conflicting = FeatureRecord(
        plant=PlantId(bad.plant.experiment, 7, "OTHER", bad.plant.treatment),
        time=bad.time, features=bad.features,
    )
    patched = type(experiment)(
        id=experiment.id, start=experiment.start, end=experiment.end,
        plants=experiment.plants, features=experiment.features + [conflicting],
        manual=experiment.manual, weights=experiment.weights,
    )
    report = validate_experiment(patched)
    assert any(v.kind == "inconsistent_plant" and "pot 7" in v.detail
               for v in report.violations)


def test_validate_flags_weight_order(default_cohort):
    experiment, _ = default_cohort
    records = [r for r in experiment.weights if r.plant.pot == 3]
    swapped = list(experiment.weights)
    i = swapped.index(records[0])
    j = swapped.index(records[1])
    swapped[i] = type(records[0])(plant=records[0].plant, time=records[1].time,
                                  weight=records[0].weight, irrigation=0.0)
    swapped[j] = type(records[1])(plant=records[1].plant, time=records[0].time,
                                  weight=records[1].weight, irrigation=0.0)
    patched = type(experiment)(
        id=experiment.id, start=experiment.start, end=experiment.end,
        plants=experiment.plants, features=experiment.features,
        manual=experiment.manual, weights=swapped,
    )
    report = validate_experiment(patched)
    assert any(v.kind == "weight_time_order" and "pot 3" in v.detail
               for v in report.violations)


def test_load_experiment(tmp_path):
    synth.write_synthetic(synth.SynthConfig(seed=2, n_genotypes=2, n_days=6), tmp_path)
    experiment = load_experiment(tmp_path)
    assert experiment.id == "SYN01"
    assert len(experiment.plants) == 2 * 12
    registry = plant_registry(experiment.features)
    assert all(rec.plant == registry[rec.plant.key] for rec in experiment.weights)


def test_parse_weights_standalone(tmp_path):
    synth.write_synthetic(synth.SynthConfig(seed=2, n_genotypes=1, n_days=5), tmp_path)
    records = parse_weights(tmp_path / "weights.csv")
    assert records
    assert records[0].plant.genotype == ""  # no registry supplied
