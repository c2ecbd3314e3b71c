import csv
import sys
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def autompg_path() -> Path:
    path = REPO / "data" / "autompg.csv"
    if not path.exists():
        pytest.skip("data/autompg.csv not present; run scripts/prepare_data.py")
    return path


@pytest.fixture(scope="session")
def stock_standin_path() -> Path:
    path = REPO / "data" / "google_standin.csv"
    if not path.exists():
        pytest.skip("data/google_standin.csv not present; run scripts/prepare_data.py")
    return path


def write_linear_csv(path: Path, n_rows: int = 200, seed: int = 7) -> Path:
    """y = 2x + 1 on x ~ U(-1, 1), one feature column plus target."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n_rows)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y"])
        for xi in x:
            writer.writerow([repr(float(xi)), repr(float(2.0 * xi + 1.0))])
    return path


@pytest.fixture()
def linear_csv(tmp_path) -> Path:
    return write_linear_csv(tmp_path / "linear.csv")
