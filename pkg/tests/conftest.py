from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_input_text():
    return (GOLDEN / "gemm_input.ir").read_text()


@pytest.fixture(scope="session")
def golden_transformed_text():
    return (GOLDEN / "gemm_transformed.ir").read_text()


@pytest.fixture(scope="session")
def default_space():
    from loadpipe.tuner import default_space as make

    return make()


@pytest.fixture(scope="session")
def default_truth(default_space):
    from loadpipe.tuner import GroundTruth

    truth = GroundTruth(default_space)
    truth.costs
    return truth
