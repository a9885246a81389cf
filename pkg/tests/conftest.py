import datetime as dt
import json
from pathlib import Path

import numpy as np
import pytest

from rainadapt.dataset import PARAMETERS, WeatherRecord

FIXTURES = Path(__file__).parent / "fixtures"

# Filled in by test_acceptance.py, printed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# A plausible mid-latitude summer day, used as the template for hand-built records.
BASE_DAY = {
    "T2M": 25.0, "T2MDEW": 18.0, "T2MWET": 21.5, "TS": 26.0, "T2M_RANGE": 8.0,
    "T2M_MAX": 29.0, "T2M_MIN": 21.0, "QV2M": 13.0, "RH2M": 70.0, "PS": 100.5,
    "WS10M": 3.0, "WS10M_MAX": 5.0, "WS10M_MIN": 1.0, "WS10M_RANGE": 4.0,
    "WD10M": 180.0, "PRECTOTCORR": 2.5,
}


def make_record(day: int = 0, site: str = "test", **overrides) -> WeatherRecord:
    vals = dict(BASE_DAY)
    for k, v in overrides.items():
        vals[k.upper()] = v
    return WeatherRecord.from_values(site, dt.date(2003, 1, 1) + dt.timedelta(days=day),
                                     [vals[p] for p in PARAMETERS])


def power_body(days: dict[str, dict[str, float]]) -> str:
    """Daily-point JSON in the upstream layout from {YYYYMMDD: {param: value}}."""
    series = {p: {d: v[p] for d, v in days.items()} for p in PARAMETERS}
    return json.dumps({"type": "Feature", "properties": {"parameter": series}})


@pytest.fixture
def record():
    return make_record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
