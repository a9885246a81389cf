"""NASA POWER daily-point client, CSV cache, and a synthetic shifted-domain generator."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import os
import re
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import requests

from .dataset import FEATURES, N_FEATURES, PARAMETERS, Dataset, WeatherRecord
from .errors import MalformedResponse, NetworkError, ParseError, ServiceError

log = logging.getLogger(__name__)

POWER_ENDPOINT = "https://power.larc.nasa.gov/api/temporal/daily/point"
CACHE_HEADER = ("site_id", "date", *PARAMETERS)


@dataclass(frozen=True)
class Site:
    name: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of [-180, 180]")

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.name.lower()).strip("_")


@dataclass(frozen=True)
class DateRange:
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"date range start {self.start} is after end {self.end}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def days(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(self.n_days)]


CITIES = {
    "Dhaka": Site("Dhaka", 23.8103, 90.4125),
    "Paris": Site("Paris", 48.8566, 2.3522),
    "Los Angeles": Site("Los Angeles", 34.0522, -118.2437),
    "Tokyo": Site("Tokyo", 35.6762, 139.6503),
}
DEFAULT_RANGE = DateRange(dt.date(2003, 1, 1), dt.date(2023, 1, 1))


def build_power_url(site: Site, range_: DateRange, community: str = "ag") -> str:
    return (
        f"{POWER_ENDPOINT}?parameters={','.join(PARAMETERS)}"
        f"&community={community}"
        f"&latitude={site.latitude:.4f}&longitude={site.longitude:.4f}"
        f"&start={range_.start:%Y%m%d}&end={range_.end:%Y%m%d}"
        f"&format=json"
    )


def parse_power_response(body: str | bytes, site_id: str = "") -> list[WeatherRecord]:
    """Turn a daily-point JSON body into records sorted by date.

    Accepts the full GeoJSON feature (``properties.parameter``) or a bare
    ``{"parameter": ...}`` mapping. Fill values are passed through untouched.
    """
    try:
        doc = json.loads(body)
    except (ValueError, TypeError) as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedResponse("response is not a JSON object")
    props = doc.get("properties", doc)
    series = props.get("parameter") if isinstance(props, dict) else None
    if not isinstance(series, dict):
        raise MalformedResponse("no 'parameter' mapping in response")

    missing = [p for p in PARAMETERS if p not in series]
    if missing:
        raise MalformedResponse(f"missing parameter series: {', '.join(missing)}")
    keys = None
    for p in PARAMETERS:
        s = series[p]
        if not isinstance(s, dict):
            raise MalformedResponse(f"series {p} is not a date mapping")
        if keys is None:
            keys = set(s)
        elif set(s) != keys or len(s) != len(keys):
            raise MalformedResponse(f"series {p} does not cover the same dates as {PARAMETERS[0]}")

    records = []
    for key in sorted(keys):
        try:
            date = dt.datetime.strptime(key, "%Y%m%d").date()
        except ValueError:
            raise MalformedResponse(f"bad date key {key!r}") from None
        try:
            values = [float(series[p][key]) for p in PARAMETERS]
        except (TypeError, ValueError):
            raise MalformedResponse(f"non-numeric value on {key}") from None
        records.append(WeatherRecord.from_values(site_id, date, values))
    return records


_RETRY_STATUS = {429, 500, 502, 503, 504}


def fetch_daily(
    site: Site,
    range_: DateRange,
    *,
    community: str = "ag",
    attempts: int = 3,
    backoff: float = 1.0,
    timeout: float = 120.0,
    get: Callable[..., requests.Response] = requests.get,
    sleep: Callable[[float], None] = time.sleep,
) -> list[WeatherRecord]:
    """Download one site's daily series, retrying transient failures.

    Waits ``backoff * 2**k`` seconds before retry ``k + 1``. Connection errors
    and 429/5xx responses are retried; other HTTP errors fail at once.
    """
    url = build_power_url(site, range_, community)
    last: Exception | None = None
    for attempt in range(attempts):
        if attempt:
            sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = get(url, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            log.warning("%s: attempt %d/%d failed: %s", site.name, attempt + 1, attempts, exc)
            last = NetworkError(f"{site.name}: {exc}")
            continue
        if resp.status_code == 200:
            return parse_power_response(resp.text, site.name)
        err = ServiceError(resp.status_code, f"{site.name}")
        if resp.status_code not in _RETRY_STATUS:
            raise err
        log.warning("%s: attempt %d/%d got HTTP %d", site.name, attempt + 1, attempts, resp.status_code)
        last = err
    assert last is not None
    raise last


def _fmt(v: float) -> str:
    return np.format_float_positional(v, trim="-")


def cache_store(path: str | os.PathLike, records: Sequence[WeatherRecord]) -> None:
    """Write records as CSV via a temp file and atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CACHE_HEADER)
    for r in records:
        w.writerow([r.site_id, r.date.isoformat(), *(_fmt(v) for v in r.values())])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cache_load(path: str | os.PathLike) -> list[WeatherRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        rows = csv.reader(f)
        header = next(rows, None)
        if header is None or tuple(header) != CACHE_HEADER:
            raise ParseError(1, "unexpected header")
        records = []
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(CACHE_HEADER):
                raise ParseError(lineno, f"expected {len(CACHE_HEADER)} fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            records.append(WeatherRecord.from_values(row[0], date, values))
    return records


def cache_path(cache_dir: str | os.PathLike, site: Site, range_: DateRange) -> Path:
    return Path(cache_dir) / f"{site.slug}_{range_.start:%Y%m%d}_{range_.end:%Y%m%d}.csv"


# Synthetic data ------------------------------------------------------------

# Rough tropical-city climatology per feature (mean, std), FEATURES order.
SYNTH_MEAN = np.array([26.0, 20.0, 23.0, 27.0, 8.0, 31.0, 22.0, 15.0, 75.0,
                       100.5, 2.5, 4.0, 1.2, 2.8, 180.0])
SYNTH_STD = np.array([4.0, 5.0, 4.0, 4.5, 2.0, 4.0, 4.0, 4.0, 12.0,
                      0.6, 1.0, 1.5, 0.6, 1.0, 70.0])
# Loadings of each standardized feature on latent (heat, moisture, wind, pressure)
# factors; every feature also gets idiosyncratic noise with weight SYNTH_IDIO.
SYNTH_LOADINGS = np.array([
    [1.0, 0.0, 0.0, 0.0],    # T2M
    [0.6, 0.8, 0.0, 0.0],    # T2MDEW
    [0.8, 0.6, 0.0, 0.0],    # T2MWET
    [1.0, 0.0, 0.0, 0.0],    # TS
    [0.0, -0.6, 0.3, 0.0],   # T2M_RANGE
    [0.9, -0.3, 0.0, 0.0],   # T2M_MAX
    [0.9, 0.3, 0.0, 0.0],    # T2M_MIN
    [0.5, 0.85, 0.0, 0.0],   # QV2M
    [-0.3, 0.9, 0.0, 0.0],   # RH2M
    [-0.2, 0.0, 0.0, 1.0],   # PS
    [0.0, 0.0, 1.0, 0.0],    # WS10M
    [0.0, 0.0, 0.9, 0.0],    # WS10M_MAX
    [0.0, 0.0, 0.8, 0.0],    # WS10M_MIN
    [0.0, 0.0, 0.7, 0.0],    # WS10M_RANGE
    [0.0, 0.0, 0.0, 0.0],    # WD10M
])
SYNTH_IDIO = 0.35
_I = {name: i for i, name in enumerate(FEATURES)}
SYNTH_START = dt.date(2003, 1, 1)


@dataclass(frozen=True, eq=False)
class ShiftSpec:
    n_source: int = 7305
    n_target: int = 7305
    feature_shift: np.ndarray = None  # type: ignore[assignment]
    response_scale: float = 1.5
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        shift = 1.5 * SYNTH_STD if self.feature_shift is None else self.feature_shift
        shift = np.asarray(shift, dtype=np.float64)
        if shift.shape != (N_FEATURES,):
            raise ValueError(f"feature_shift must have {N_FEATURES} entries")
        object.__setattr__(self, "feature_shift", shift)
        if self.n_source < 10 or self.n_target < 10:
            raise ValueError("n_source and n_target must be at least 10")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be non-negative")

    @classmethod
    def sigma_shift(cls, sigmas: float, **kw) -> ShiftSpec:
        return cls(feature_shift=sigmas * SYNTH_STD, **kw)


def synthetic_response(X: np.ndarray) -> np.ndarray:
    """Noise-free rainfall surface used by the generator (mm/day, before clipping).

    ``4 + 2 tanh(z_rh * z_qv) + 1.5 sin(z_dew) cos(z_ws / 2)`` where ``z`` are
    features standardized by the fixed source climatology. Values lie in [0.5, 7.5].
    """
    z = (X - SYNTH_MEAN) / SYNTH_STD
    return (
        4.0
        + 2.0 * np.tanh(z[:, _I["RH2M"]] * z[:, _I["QV2M"]])
        + 1.5 * np.sin(z[:, _I["T2MDEW"]]) * np.cos(0.5 * z[:, _I["WS10M"]])
    )


def _synthetic_domain(n: int, seed: int, shift: np.ndarray, scale: float, noise_std: float,
                      site_id: str) -> Dataset:
    rng = np.random.default_rng(seed)
    factors = rng.standard_normal((n, SYNTH_LOADINGS.shape[1]))
    idio = rng.standard_normal((n, N_FEATURES))
    noise = noise_std * rng.standard_normal(n)
    norm = np.sqrt((SYNTH_LOADINGS ** 2).sum(axis=1) + SYNTH_IDIO ** 2)
    z = (factors @ SYNTH_LOADINGS.T + SYNTH_IDIO * idio) / norm
    X = SYNTH_MEAN + SYNTH_STD * z
    X = X + shift
    y = np.maximum(scale * synthetic_response(X) + noise, 0.0)
    prov = tuple((site_id, SYNTH_START + dt.timedelta(days=i)) for i in range(n))
    return Dataset(X, y, prov)


def gen_synthetic_pair(spec: ShiftSpec, source_id: str = "synthetic-source",
                       target_id: str = "synthetic-target") -> tuple[Dataset, Dataset]:
    """Seeded source/target datasets with covariate and response shift.

    Standardized features are unit-variance mixtures of four latent weather
    factors plus idiosyncratic noise, mapped to ``SYNTH_MEAN``/``SYNTH_STD``
    units. Both domains draw latent features and noise from fresh
    ``default_rng(spec.seed)`` streams, so a zero shift with unit response scale
    and equal counts yields identical features and targets. Target features are
    offset by ``feature_shift`` and the target response is scaled by
    ``response_scale``. Targets are clipped at 0.
    """
    zero = np.zeros(N_FEATURES)
    src = _synthetic_domain(spec.n_source, spec.seed, zero, 1.0, spec.noise_std, source_id)
    tgt = _synthetic_domain(spec.n_target, spec.seed, spec.feature_shift, spec.response_scale,
                            spec.noise_std, target_id)
    return src, tgt
