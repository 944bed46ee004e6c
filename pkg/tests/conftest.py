import numpy as np
import pandas as pd
import pytest

from loadmdn.data import UKSMEC_SCHEMA, split_chronological
from loadmdn.synthetic import BranchGenerator


def write_uksmec_fixture(path, days: int = 60, household: str = "MAC000002", seed: int = 0, extra_household=True,
                         noise: bool = True):
    """Half-hourly readings in the raw export layout: a daily cycle plus gamma noise.

    Without noise the series is exactly 24h-periodic, so each target equals its lag_24h input.
    """
    rng = np.random.default_rng(seed)
    ts = pd.date_range("2013-03-01", periods=days * 48, freq="30min")
    hour = ts.hour.to_numpy() + ts.minute.to_numpy() / 60.0
    kwh = np.round(0.1 + 0.12 * np.sin(2 * np.pi * (hour - 7) / 24) ** 2 + noise * rng.gamma(2.0, 0.03, len(ts)), 3)
    frame = pd.DataFrame({UKSMEC_SCHEMA["household"]: household,
                          UKSMEC_SCHEMA["timestamp"]: ts.strftime("%Y-%m-%d %H:%M:%S.0000000"),
                          UKSMEC_SCHEMA["kwh"]: kwh})
    if extra_household:
        other = frame.iloc[:96].copy()
        other[UKSMEC_SCHEMA["household"]] = "MAC000003"
        frame = pd.concat([other, frame], ignore_index=True)
    frame.to_csv(path, index=False)
    return frame


@pytest.fixture
def uksmec_csv(tmp_path):
    path = tmp_path / "raw.csv"
    write_uksmec_fixture(path)
    return path


UKSMEC_TOML = """
[data]
household_column = "LCLid"
timestamp_column = "DateTime"
kwh_column = "KWH/hh (per half hour)"
"""


@pytest.fixture
def uksmec_config(tmp_path):
    path = tmp_path / "uksmec.toml"
    path.write_text(UKSMEC_TOML)
    return path


@pytest.fixture(scope="session")
def small_synthetic():
    return split_chronological(BranchGenerator().dataset(400, 3))


def point_mass_model(data):
    """gauss-homo net that returns its first standardized input exactly, with the minimum scale.

    On a set whose target equals its first feature (and shares its scaler) the
    predictive is a point mass at the truth up to the 1e-8 scale floor.
    """
    from loadmdn.mixture import SIGMA_FLOOR
    from loadmdn.training import ModelSpec, TrainedModel

    n = data.n_features
    W0 = np.zeros((2, n))
    W0[0, 0], W0[1, 0] = 1.0, -1.0
    params = {"W0": W0, "b0": np.zeros(2), "W1": np.array([[1.0, -1.0]]), "b1": np.zeros(1)}
    return TrainedModel(ModelSpec("gauss-homo", hidden_sizes=(2,)), params, data.x_scaler, data.y_scaler,
                        SIGMA_FLOOR)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
