import json

import numpy as np
import pytest

from shyver import data_path
from shyver.model import load_model


@pytest.fixture
def two_mode():
    return load_model(data_path("two_mode.json"))


@pytest.fixture
def heat():
    return load_model(data_path("heat.json"))


@pytest.fixture
def two_mode_doc():
    return json.loads(data_path("two_mode.json").read_text())


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
