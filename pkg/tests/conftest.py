from pathlib import Path

import numpy as np
import pytest

from sdjls import make_model

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"

RATES_INNER = np.array([[-2.0, 2.0], [2.0, -2.0]])
RATES_OUTER = np.array([[-4.0, 4.0], [4.0, -4.0]])


@pytest.fixture(scope="session")
def benchmark_model():
    """Bundled two-mode autonomous benchmark (ball-of-radius-sqrt(3) partition)."""
    return make_model(
        [np.array([[-1.0, 5.0], [-0.5, 0.9]]), np.array([[-4.0, 2.0], [-2.0, 0.1]])],
        [RATES_INNER, RATES_OUTER],
        thresholds=[3.0],
        x0=np.array([-1.0, 1.0]),
        mode0=1,
    )


@pytest.fixture(scope="session")
def controlled_model():
    """Bundled two-mode benchmark with scalar input (mode 2 unstable)."""
    return make_model(
        [np.array([[-1.0, 2.0], [-2.0, 1.0]]), np.array([[1.0, 2.0], [2.0, 1.0]])],
        [RATES_INNER, RATES_OUTER],
        thresholds=[3.0],
        x0=np.array([-1.0, 1.0]),
        mode0=1,
        input_matrices=[np.array([[1.0], [3.0]]), np.array([[-5.0], [6.0]])],
    )


@pytest.fixture(scope="session")
def models_dir():
    return MODELS_DIR
