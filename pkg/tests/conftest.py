import numpy as np
import pytest

from peaqlab.dataset import write_dataset
from peaqlab.synthetic import synthetic_dataset


@pytest.fixture(scope="session")
def synth_ds():
    return synthetic_dataset(seed=0)


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory, synth_ds):
    d = tmp_path_factory.mktemp("synth")
    scores, features = d / "scores.csv", d / "features.csv"
    write_dataset(synth_ds, scores, features)
    return scores, features


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
