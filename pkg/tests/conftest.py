import warnings

import numpy as np
import pytest
from hypothesis import settings

from dropout_linreg.errors import TheoremGateWarning
from dropout_linreg.model import LinearModel
from dropout_linreg.operators import SOperator

settings.register_profile("pkg", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("pkg")

REF_X = np.array([[1.0, 1.0], [0.0, 1.0]])
REF_BETA = np.array([1.0, -1.0])
REF_ALPHA, REF_P = 0.05, 0.5


@pytest.fixture
def ref_model():
    return LinearModel(REF_X, REF_BETA)


@pytest.fixture
def ref_op(ref_model):
    return SOperator(ref_model, REF_ALPHA, REF_P)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _quiet_gate_warnings():
    # The reference step size deliberately misses the covariance-theorem gate.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TheoremGateWarning)
        yield


def random_symmetric(rng, d):
    G = rng.standard_normal((d, d))
    return G + G.T


def random_psd(rng, d):
    G = rng.standard_normal((d, d))
    return G.T @ G
