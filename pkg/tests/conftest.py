import os

import pytest

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')


@pytest.fixture
def fixture_path():
    def resolve(name: str) -> str:
        return os.path.join(FIXTURES_DIR, name)
    return resolve
