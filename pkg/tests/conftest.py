from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_table_path() -> Path:
    return FIXTURES / "fixture_7x512.ppte"


@pytest.fixture
def tiny_table_path() -> Path:
    return FIXTURES / "tiny_table_7x16.ppte"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def unique_voxel_coords(rng: np.random.Generator, n: int,
                        voxel_size: float = 0.1) -> np.ndarray:
    """Coordinates at distinct voxel centers, immune to quantization ties."""
    side = int(np.ceil(n ** (1 / 3))) + 2
    cells = rng.choice(side ** 3, size=n, replace=False)
    ijk = np.stack(np.unravel_index(cells, (side, side, side)), axis=1)
    return (ijk + 0.5) * voxel_size
