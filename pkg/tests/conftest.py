import numpy as np
import pytest

from risktree.fixtures import BUILDERS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def say(capsys):
    """Print a line to the terminal even while output is captured."""
    def _say(line):
        with capsys.disabled():
            print("\n" + line, end="")
    return _say


@pytest.fixture(scope="session")
def fixture_models():
    return {name: build() for name, build in BUILDERS.items()}
