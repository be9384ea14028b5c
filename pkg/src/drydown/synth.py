"""Synthetic dry-down campaigns with known ground truth.

The real platform datasets are not published, so every end-to-end check in
this package runs against generated experiments: logistic potential growth
per genotype, stress acting through the threshold response curve on both
expansion and transpiration, pot weights decremented by the simulated
transpiration (mass balance holds exactly), and image features built as
invertible noisy functions of the true area. All stochastic draws flow from
one seeded generator in a fixed order, so a config + seed pins every output
byte.

Feature construction: clean hull/bounding-box/height signals are produced
first, then the projected-area channel is solved from the configured true
linear relation area = b0 + b . features, so that with all noise scales at
zero an OLS fit recovers the coefficients exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time as dtime, timedelta
from pathlib import Path

import numpy as np

from .dataset import (
    CONTROL,
    STRESSED,
    Experiment,
    FeatureRecord,
    ManualAreaRecord,
    PlantId,
    WeightRecord,
    write_features_csv,
    write_manual_csv,
    write_weights_csv,
)
from .errors import ConfigInvalid
from .response_fit import response_curve

#: Printed parameter ranges used to seed default genotype truths.
LE_RANGE = (-4.55, -2.65)
TR_RANGE = (-8.83, -4.99)

TRUE_COEFFICIENTS = {
    "intercept": 100.0,
    "area_sens": 1.0,
    "hull_area": 0.05,
    "bounding_rectangle": 0.03,
    "height": 2.0,
}

N_DISTRACTORS = 66  # total feature count is 4 named + 66 = 70


@dataclass
class SynthConfig:
    experiment_id: str = "SYN01"
    start: date = date(2023, 5, 1)
    n_genotypes: int = 8
    replicates_control: int = 4
    replicates_stressed: int = 8
    n_days: int = 14
    manual_every: int = 2
    le_by_genotype: dict = field(default_factory=dict)  # optional overrides
    tr_by_genotype: dict = field(default_factory=dict)
    initial_area_fraction: float = 0.02   # logistic value at day 0 ~ asym * this
    asymptote_range: tuple = (2.4e5, 3.4e5)  # mm^2
    feature_noise: float = 0.09   # relative, on the 4 named features
    manual_noise: float = 0.05    # relative, on manual areas
    weight_noise: float = 4.0     # g/day process noise on transpiration
    ttsw: float = 600.0           # g, pot transpirable reservoir
    pot_base_weight: float = 4200.0  # g, pot weight at exhausted reservoir
    transpiration_per_area: float = 2.0e-3  # g/day per mm^2
    transpiration_base: float = 40.0        # g/day
    seed: int = 0

    def genotypes(self):
        return [f"G{i + 1:02d}" for i in range(self.n_genotypes)]


@dataclass
class GroundTruth:
    genotype_params: dict   # genotype -> {"LE", "TR", "asymptote", "tmid", "rate"}
    coefficients: dict      # the true linear feature -> area relation
    true_areas: dict        # plant label -> list of daily true areas
    true_transpiration: dict  # plant label -> list of daily rates (stressed+control)
    ttsw: dict              # plant label -> true reservoir size (stressed only)
    ftsw: dict              # plant label -> list of daily true ftsw

    def to_json_dict(self):
        return {
            "genotype_params": self.genotype_params,
            "coefficients": self.coefficients,
            "true_areas": self.true_areas,
            "true_transpiration": self.true_transpiration,
            "ttsw": self.ttsw,
            "ftsw": self.ftsw,
        }


def _validate(config):
    if config.n_genotypes < 1 or config.n_days < 4:
        raise ConfigInvalid("need >= 1 genotype and >= 4 days")
    if config.replicates_control < 1 or config.replicates_stressed < 1:
        raise ConfigInvalid("replicate counts must be >= 1")
    for name in ("feature_noise", "manual_noise", "weight_noise"):
        if getattr(config, name) < 0:
            raise ConfigInvalid(f"{name} must be >= 0")
    for mapping, (lo, hi) in ((config.le_by_genotype, (-15.0, -0.5)),
                              (config.tr_by_genotype, (-15.0, -0.5))):
        for genotype, value in mapping.items():
            if not lo <= value <= hi:
                raise ConfigInvalid(
                    f"true parameter {value} for {genotype} outside fitting bounds"
                )


def generate_experiment(config=None):
    """Simulate one campaign; returns (Experiment, GroundTruth)."""
    config = config or SynthConfig()
    _validate(config)
    rng = np.random.default_rng(config.seed)

    genotypes = config.genotypes()
    params = {}
    for g in genotypes:
        le = config.le_by_genotype.get(g, float(rng.uniform(*LE_RANGE)))
        tr = config.tr_by_genotype.get(g, float(rng.uniform(*TR_RANGE)))
        asym = float(rng.uniform(*config.asymptote_range))
        tmid = float(rng.uniform(0.5, 0.7)) * config.n_days
        # rate such that the logistic sits at initial_area_fraction on day 0
        rate = float(np.log(1.0 / config.initial_area_fraction - 1.0) / tmid)
        params[g] = {"LE": le, "TR": tr, "asymptote": asym, "tmid": tmid, "rate": rate}

    plants = []
    pot = 0
    for g in genotypes:
        for treatment, reps in ((CONTROL, config.replicates_control),
                                (STRESSED, config.replicates_stressed)):
            for _ in range(reps):
                pot += 1
                plants.append(PlantId(config.experiment_id, pot, g, treatment))

    beta = TRUE_COEFFICIENTS
    distractor_spec = []
    for j in range(N_DISTRACTORS):
        # even channels are noisy transforms of area, odd ones pure noise
        if j % 2 == 0:
            distractor_spec.append(
                ("transform", float(rng.uniform(0.1, 3.0)),
                 float(rng.choice([0.5, 1.0, 1.5])))
            )
        else:
            distractor_spec.append(
                ("noise", float(rng.uniform(0.0, 100.0)), float(rng.uniform(1.0, 20.0)))
            )

    features, manual, weights = [], [], []
    truth = GroundTruth(
        genotype_params=params,
        coefficients=dict(beta),
        true_areas={},
        true_transpiration={},
        ttsw={},
        ftsw={},
    )

    for plant in plants:
        p = params[plant.genotype]
        size_factor = float(rng.uniform(0.9, 1.1))
        hull_factor = 1.5 + float(rng.uniform(-0.2, 0.2))
        box_factor = 2.3 + float(rng.uniform(-0.3, 0.3))
        height0 = float(rng.uniform(100.0, 200.0))
        height_rate = float(rng.uniform(10.0, 25.0))

        logistic = p["asymptote"] / (
            1.0 + np.exp(-p["rate"] * (np.arange(config.n_days + 1) - p["tmid"]))
        )
        potential_gain = np.diff(logistic) * size_factor

        stressed = plant.treatment == STRESSED
        ttsw_true = config.ttsw * float(rng.uniform(0.95, 1.05)) if stressed else config.ttsw
        atsw = ttsw_true
        area = float(logistic[0] * size_factor)

        areas, rates, ftsws = [], [], []
        weight = config.pot_base_weight + atsw
        weights.append(
            WeightRecord(plant=plant,
                         time=datetime.combine(config.start, dtime(7, 0)),
                         weight=weight, irrigation=0.0)
        )

        for d in range(config.n_days):
            ftsw = min(max(atsw / ttsw_true, 0.0), 1.0) if stressed else 1.0
            areas.append(area)
            ftsws.append(ftsw)

            clean_height = height0 + height_rate * d
            clean_hull = hull_factor * area
            clean_box = box_factor * area
            clean_sens = (
                area
                - beta["intercept"]
                - beta["hull_area"] * clean_hull
                - beta["bounding_rectangle"] * clean_box
                - beta["height"] * clean_height
            ) / beta["area_sens"]

            noise = rng.normal(0.0, 1.0, size=4)
            record_features = {
                "area_sens": max(clean_sens * (1.0 + config.feature_noise * noise[0]), 0.0),
                "hull_area": max(clean_hull * (1.0 + config.feature_noise * noise[1]), 0.0),
                "bounding_rectangle": max(clean_box * (1.0 + config.feature_noise * noise[2]), 0.0),
                "height": max(clean_height * (1.0 + config.feature_noise * noise[3]), 0.0),
            }
            for j, (kind, c1, c2) in enumerate(distractor_spec):
                name = f"feat_{j + 5:02d}"
                if kind == "transform":
                    value = c1 * area**c2 * (1.0 + 0.1 * float(rng.normal()))
                else:
                    value = c1 + c2 * float(rng.normal())
                record_features[name] = value
            features.append(
                FeatureRecord(
                    plant=plant,
                    time=datetime.combine(config.start + timedelta(days=d), dtime(11, 0)),
                    features=record_features,
                )
            )

            if d % config.manual_every == 0:
                observed = area * (1.0 + config.manual_noise * float(rng.normal()))
                manual.append(
                    ManualAreaRecord(
                        plant=plant,
                        time=config.start + timedelta(days=d),
                        total_area=max(observed, 1.0),
                    )
                )

            # water balance step for the coming day
            potential_t = config.transpiration_base + config.transpiration_per_area * area
            if stressed:
                rate = potential_t * response_curve(p["TR"], ftsw)
            else:
                rate = potential_t
            rate += float(rng.normal(0.0, config.weight_noise))
            rate = max(rate, 0.0)
            if stressed:
                rate = min(rate, atsw)
                atsw -= rate
                irrigation = 0.0
            else:
                irrigation = rate  # refilled to pot capacity
            rates.append(rate)
            weight = weight - rate + irrigation
            weights.append(
                WeightRecord(
                    plant=plant,
                    time=datetime.combine(config.start + timedelta(days=d + 1), dtime(7, 0)),
                    weight=weight,
                    irrigation=irrigation,
                )
            )

            gain = potential_gain[d]
            if stressed:
                gain *= response_curve(p["LE"], ftsw)
            area += float(gain)

        truth.true_areas[plant.label] = areas
        truth.true_transpiration[plant.label] = rates
        truth.ftsw[plant.label] = ftsws
        if stressed:
            truth.ttsw[plant.label] = ttsw_true

    experiment = Experiment(
        id=config.experiment_id,
        start=config.start,
        end=config.start + timedelta(days=config.n_days),
        plants=set(plants),
        features=features,
        manual=manual,
        weights=weights,
    )
    return experiment, truth


def write_synthetic(config, directory):
    """Generate and write features.csv, manual_areas.csv, weights.csv and
    ground_truth.json into `directory`. Byte-identical for a given config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    experiment, truth = generate_experiment(config)
    write_features_csv(experiment.features, directory / "features.csv")
    write_manual_csv(experiment.manual, directory / "manual_areas.csv")
    write_weights_csv(experiment.weights, directory / "weights.csv")
    with open(directory / "ground_truth.json", "w", encoding="utf-8") as handle:
        json.dump(truth.to_json_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return experiment, truth
