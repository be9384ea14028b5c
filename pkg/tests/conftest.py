import numpy as np
import pytest

from drydown import synth
from drydown.dataset import FeatureRecord, ObservationPair, PlantId
from datetime import date, datetime


@pytest.fixture(scope="session")
def default_cohort():
    """One default synthetic campaign shared by read-only tests."""
    return synth.generate_experiment(synth.SynthConfig(seed=7))


def make_pairs(X, y, predictor_names, extra_features=None):
    """Observation pairs from a plain design matrix, for model-level tests."""
    pairs = []
    for i in range(len(y)):
        features = {name: float(X[i, j]) for j, name in enumerate(predictor_names)}
        if extra_features:
            features.update({k: float(v[i]) for k, v in extra_features.items()})
        plant = PlantId("T01", i + 1, "G01", "Control")
        record = FeatureRecord(
            plant=plant, time=datetime(2023, 5, 1, 11), features=features
        )
        pairs.append(
            ObservationPair(
                plant=plant, time=date(2023, 5, 1), features=record,
                observed_area=float(y[i]),
            )
        )
    return pairs


def random_pairs(rng, n, predictor_names, coef=None, intercept=0.0, noise=0.0):
    p = len(predictor_names)
    X = rng.uniform(10.0, 1000.0, size=(n, p))
    coef = np.asarray(coef) if coef is not None else rng.uniform(-2.0, 2.0, size=p)
    y = intercept + X @ coef + noise * rng.normal(size=n)
    return make_pairs(X, y, predictor_names), X, y
