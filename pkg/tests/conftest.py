import pathlib

import pytest

REPO_ROOT = pathlib.Path(__file__).resolve().parents[1]
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR
