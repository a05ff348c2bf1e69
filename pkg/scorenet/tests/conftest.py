import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dataset_helpers import TINY_CONFIG, generate_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> Path:
    """Two small scenes, 2 walks x 4 prefixes x 3 candidates each = 48 tuples."""
    return generate_dataset(TINY_CONFIG, tmp_path_factory.mktemp("tiny") / "data")
