"""Temperature-residual pipeline.

Per station: least-squares seasonal fit (linear trend plus two annual
harmonics), AR(10) on the deseasonalized series, then day-of-year averaged
and demeaned residual curves, presmoothed with a 23-term Fourier basis.
The cross-station residual curves feed the asymmetric-norm component
algorithms at chosen tau levels. February 29 is dropped throughout, so a
year always has 365 days.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .components import ComponentSet, bottom_up, explained_variance, principal_expectile, top_down
from .core import as_tau
from .exceptions import ContractError, DegenerateInputError, DomainError

__all__ = [
    "StationSeries",
    "DetrendModel",
    "ResidualCurveMatrix",
    "AnalysisResult",
    "load_station_csv",
    "fit_detrend",
    "residual_curves",
    "fourier_smooth",
    "analyze",
    "make_synthetic_station",
    "write_station_csv",
]

DAYS = 365
N_HARMONICS = 11  # constant + 11 sine/cosine pairs = 23 basis functions
AR_ORDER = 10
_ALGOS = {"topdown": top_down, "bottomup": bottom_up, "pec": principal_expectile}


def day_of_year_365(date: dt.date) -> int:
    """Day of year in the 365-day calendar (Feb 29 must be dropped upstream)."""
    doy = date.timetuple().tm_yday
    if date.month > 2 and _is_leap(date.year):
        return doy - 1
    return doy


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def _calendar_index(date: dt.date, origin: dt.date) -> int:
    """Day count from origin in the 365-day calendar."""
    return (date.year - origin.year) * DAYS + day_of_year_365(date) - day_of_year_365(origin)


@dataclass
class StationSeries:
    """Daily average temperatures for one station, Feb 29 excluded."""

    station_id: str
    dates: list
    temps: np.ndarray
    has_gaps: bool = False
    dropped_feb29: int = 0

    def __post_init__(self):
        if len(self.dates) != len(self.temps):
            raise ContractError("dates and temps must have equal length")
        if len(self.dates) == 0:
            raise ContractError(f"station {self.station_id}: empty series")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ContractError(
                    f"station {self.station_id}: dates must be strictly increasing")
        self.temps = np.asarray(self.temps, dtype=float)
        if not np.all(np.isfinite(self.temps)):
            raise DomainError(f"station {self.station_id}: non-finite temperature")
        origin = self.dates[0]
        idx = np.array([_calendar_index(d, origin) for d in self.dates])
        self.has_gaps = bool(np.any(np.diff(idx) > 1))
        self._index = idx


@dataclass
class DetrendModel:
    """Seasonal + AR(10) decomposition of one station's series."""

    station_id: str
    seasonal: np.ndarray        # a, b, c1, d1, c2, d2
    ar_coefs: np.ndarray        # beta_1..beta_10
    residuals: np.ndarray
    residual_days: np.ndarray   # day-of-year (1..365) per residual

    @property
    def seasonal_amplitudes(self) -> np.ndarray:
        c1, d1, c2, d2 = self.seasonal[2:]
        return np.array([np.hypot(c1, d1), np.hypot(c2, d2)])


@dataclass
class ResidualCurveMatrix:
    """Stations by 365 day-of-year curves, demeaned and Fourier-presmoothed."""

    values: np.ndarray
    station_ids: list
    unsmoothed: np.ndarray = field(repr=False, default=None)


def _seasonal_design(t: np.ndarray) -> np.ndarray:
    cols = [np.ones_like(t), t]
    for l in (1, 2):
        w = 2.0 * np.pi * l * t / DAYS
        cols.append(np.sin(w))
        cols.append(np.cos(w))
    return np.column_stack(cols)


def fit_detrend(series: StationSeries) -> DetrendModel:
    """Seasonal OLS, then AR(10) least squares on the deseasonalized series.

    Lag windows never cross calendar gaps. Requires at least two years plus
    the lag window of data.
    """
    n = len(series.temps)
    if n < 2 * DAYS + AR_ORDER:
        raise ContractError(
            f"station {series.station_id}: need at least {2 * DAYS + AR_ORDER} "
            f"observations, got {n}")
    t = series._index.astype(float)
    X = _seasonal_design(t)
    coef, _, rank, _ = np.linalg.lstsq(X, series.temps, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateInputError(
            f"station {series.station_id}: collinear seasonal regressors")
    deseason = series.temps - X @ coef

    pos = {int(i): j for j, i in enumerate(series._index)}
    rows = []
    targets = []
    kept = []
    for j, i in enumerate(series._index):
        lags = [pos.get(int(i) - l) for l in range(1, AR_ORDER + 1)]
        if all(l is not None for l in lags):
            rows.append(deseason[lags])
            targets.append(deseason[j])
            kept.append(j)
    if len(rows) < AR_ORDER + 1:
        raise ContractError(
            f"station {series.station_id}: too few contiguous windows for AR({AR_ORDER})")
    L = np.asarray(rows)
    y = np.asarray(targets)
    if np.std(deseason) <= 1e-10 * (1.0 + np.std(series.temps)):
        # the seasonal part explains everything; an AR fit on rounding
        # noise would return arbitrary coefficients
        beta = np.zeros(AR_ORDER)
    else:
        beta, _, rank, _ = np.linalg.lstsq(L, y, rcond=None)
        if rank < AR_ORDER:
            raise DegenerateInputError(
                f"station {series.station_id}: degenerate AR regressors")
    resid = y - L @ beta
    days = np.array([day_of_year_365(series.dates[j]) for j in kept])
    return DetrendModel(station_id=series.station_id, seasonal=coef,
                        ar_coefs=beta, residuals=resid, residual_days=days)


def _fourier_q() -> np.ndarray:
    d = np.arange(1, DAYS + 1, dtype=float)
    cols = [np.ones(DAYS)]
    for l in range(1, N_HARMONICS + 1):
        w = 2.0 * np.pi * l * d / DAYS
        cols.append(np.sin(w))
        cols.append(np.cos(w))
    basis = np.column_stack(cols)
    return np.linalg.qr(basis)[0]


def fourier_smooth(curves: np.ndarray) -> np.ndarray:
    """Orthogonal projection of 365-point rows onto the 23-term Fourier basis."""
    M = np.atleast_2d(np.asarray(curves, dtype=float))
    if M.shape[1] != DAYS:
        raise ContractError(f"curves must have {DAYS} columns")
    Q = _fourier_q()
    return (M @ Q) @ Q.T


def residual_curves(models) -> ResidualCurveMatrix:
    """Day-of-year averaged, per-station demeaned, presmoothed residual curves."""
    models = list(models)
    if not models:
        raise ContractError("at least one station required")
    raw = np.empty((len(models), DAYS))
    for i, model in enumerate(models):
        sums = np.zeros(DAYS)
        counts = np.zeros(DAYS)
        np.add.at(sums, model.residual_days - 1, model.residuals)
        np.add.at(counts, model.residual_days - 1, 1.0)
        if np.any(counts == 0):
            day = int(np.argmin(counts)) + 1
            raise DegenerateInputError(
                f"station {model.station_id}: no observations for day {day}")
        row = sums / counts
        raw[i] = row - row.mean()
    return ResidualCurveMatrix(values=fourier_smooth(raw),
                               station_ids=[m.station_id for m in models],
                               unsmoothed=raw)


@dataclass
class AnalysisResult:
    component_set: ComponentSet
    explained: list
    total_explained: float


def analyze(curves: ResidualCurveMatrix, taus, k: int, algorithms=("topdown", "bottomup", "pec"),
            rng: np.random.Generator | None = None) -> dict:
    """Component fits of the residual curves per (tau, algorithm).

    Total explained variance is the cumulative value for the error-minimizing
    algorithms and the per-component sum for principal expectile components.
    """
    for name in algorithms:
        if name not in _ALGOS:
            raise ContractError(f"unknown algorithm {name!r}")
    out = {}
    for tau in taus:
        t = as_tau(tau)
        for name in algorithms:
            fit_rng = (np.random.default_rng(0) if rng is None else rng)
            if name == "pec":
                cs = _ALGOS[name](curves.values, k, t, rng=fit_rng)
            else:
                cs = _ALGOS[name](curves.values, k, t, restarts=20, rng=fit_rng)
            ev = explained_variance(curves.values, cs)
            total = float(sum(ev)) if name == "pec" else float(ev[-1])
            out[(t, name)] = AnalysisResult(cs, [float(v) for v in ev],
                                            min(1.0, total))
    return out


def load_station_csv(path) -> list[StationSeries]:
    """Long-format reader: station_id, ISO date, temperature per row.

    Rows for Feb 29 are dropped and counted. Errors name the offending row.
    """
    by_station: dict[str, list] = {}
    dropped: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0].strip().lower() == "station_id"):
                continue
            if len(row) != 3:
                raise ContractError(f"row {lineno}: expected 3 fields, got {len(row)}")
            sid = row[0].strip()
            try:
                date = dt.date.fromisoformat(row[1].strip())
            except ValueError as exc:
                raise ContractError(f"row {lineno}: bad date {row[1]!r}") from exc
            try:
                temp = float(row[2])
            except ValueError as exc:
                raise ContractError(f"row {lineno}: bad temperature {row[2]!r}") from exc
            if date.month == 2 and date.day == 29:
                dropped[sid] = dropped.get(sid, 0) + 1
                continue
            by_station.setdefault(sid, []).append((date, temp, lineno))
    if not by_station:
        raise ContractError("no usable rows in the input file")
    series = []
    for sid in sorted(by_station):
        rows = sorted(by_station[sid])
        for (d1, _, l1), (d2, _, l2) in zip(rows, rows[1:]):
            if d1 == d2:
                raise ContractError(f"row {l2}: duplicate date {d2} for station {sid}")
        series.append(StationSeries(
            station_id=sid,
            dates=[r[0] for r in rows],
            temps=np.array([r[1] for r in rows]),
            dropped_feb29=dropped.get(sid, 0),
        ))
    return series


def _calendar_dates(start_year: int, n_days: int) -> list:
    dates = []
    d = dt.date(start_year, 1, 1)
    while len(dates) < n_days:
        if not (d.month == 2 and d.day == 29):
            dates.append(d)
        d += dt.timedelta(days=1)
    return dates


def make_synthetic_station(station_id: str, n_years: int, seasonal, ar_coefs,
                           innovation_sd: float, rng: np.random.Generator,
                           start_year: int = 1970) -> StationSeries:
    """Station series drawn from the seasonal + AR(10) model with known
    coefficients; used by round-trip tests and fixtures."""
    seasonal = np.asarray(seasonal, dtype=float)
    beta = np.zeros(AR_ORDER)
    ar = np.asarray(ar_coefs, dtype=float)
    beta[: len(ar)] = ar
    n = n_years * DAYS
    burn = 2 * DAYS
    innov = rng.standard_normal(n + burn) * innovation_sd
    x = np.zeros(n + burn)
    for i in range(AR_ORDER, n + burn):
        x[i] = beta @ x[i - AR_ORDER: i][::-1] + innov[i]
    x = x[burn:]
    t = np.arange(n, dtype=float)
    temps = _seasonal_design(t) @ seasonal + x
    return StationSeries(station_id=station_id,
                         dates=_calendar_dates(start_year, n),
                         temps=temps)


def write_station_csv(path, series_list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "date", "temp"])
        for s in series_list:
            for d, v in zip(s.dates, s.temps):
                writer.writerow([s.station_id, d.isoformat(), repr(float(v))])
