import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracle helpers

from fractalpose.image import GrayImage
from fractalpose.synth import load_sample_image


@pytest.fixture(scope="session")
def sample_image() -> GrayImage:
    return load_sample_image()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, h: int, w: int) -> GrayImage:
    return GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))
