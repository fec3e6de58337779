import os

import numpy as np
import pytest

from gscore.dataset import ColumnSchema, ModelSpec, build_design, load_csv
from gscore.glm import fit as fit_glm

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURE_CSV = os.path.join(HERE, "data", "fixture20.csv")
FIXTURE_SCHEMA = ColumnSchema(outcome="y", arm="arm", covariates=("w1",))


@pytest.fixture(scope="session")
def fixture_data():
    data, dropped = load_csv(FIXTURE_CSV, FIXTURE_SCHEMA)
    assert dropped == 0
    return data


@pytest.fixture(scope="session")
def fixture_design(fixture_data):
    spec = ModelSpec(family="bernoulli-logit", covariates=("w1",))
    return build_design(fixture_data, spec)


@pytest.fixture(scope="session")
def fixture_fit(fixture_data, fixture_design):
    return fit_glm(fixture_design, fixture_data.outcome)


def random_trial(rng, n=60, family="gaussian-identity", q=2):
    """Small synthetic trial for property-style loops."""
    from gscore.dataset import TrialDataset

    arm = rng.permutation(np.array([1] * (n // 2) + [2] * (n - n // 2)))
    W = rng.standard_normal((n, q))
    eta = 0.3 * (arm == 2) + W @ (0.4 * np.ones(q)) * 0.5
    if family == "bernoulli-logit":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    elif family == "poisson-log":
        y = rng.poisson(np.exp(np.clip(eta, None, 3.0))).astype(float)
    else:
        y = eta + rng.standard_normal(n)
    names = tuple(f"w{j + 1}" for j in range(q))
    return TrialDataset(outcome=y, arm=arm, covariates=W,
                        covariate_names=names)
