"""Intraday bar ingestion and panel alignment.

Input is one CSV per asset, either ``timestamp,open,high,low,close,volume``
or ``timestamp,close``, header optional. Only the close column is used.
Timestamps are interpreted as exchange-local wall clock (default zone
America/New_York); tz-aware inputs are converted into that zone and the
offset is dropped, so every downstream comparison is on one clock.

The alignment step restricts every series to the regular trading window
(09:30 inclusive to 16:00 exclusive by default), builds a shared grid from
timestamps present in at least half of the assets, and forward-fills the
remaining gaps, logging every filled cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DuplicateTimestamp,
    EmptyGrid,
    EmptySlice,
    MalformedRow,
    NonPositivePrice,
    UnfillableAsset,
)

DEFAULT_TIMEZONE = "America/New_York"


class Vehicle(Enum):
    """Investment vehicle classes covered by the analysis."""

    STOCK = "stock"
    US_ETF = "etf"
    CRYPTO = "crypto"

    @classmethod
    def parse(cls, token: str) -> "Vehicle":
        key = token.strip().lower().replace("_", "").replace("-", "")
        aliases = {"stock": cls.STOCK, "etf": cls.US_ETF, "usetf": cls.US_ETF,
                   "crypto": cls.CRYPTO}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown vehicle {token!r}") from None


class Sector(Enum):
    """13 sector labels: 11 stock sectors plus the two non-stock classes."""

    CRYPTO = "Crypto"
    US_ETF = "UsEtf"
    COMMUNICATION_SERVICES = "CommunicationServices"
    UTILITIES = "Utilities"
    REAL_ESTATE = "RealEstate"
    MATERIALS = "Materials"
    INFORMATION_TECHNOLOGY = "InformationTechnology"
    INDUSTRIALS = "Industrials"
    HEALTHCARE = "Healthcare"
    FINANCIALS = "Financials"
    ENERGY = "Energy"
    CONSUMER_STAPLES = "ConsumerStaples"
    CONSUMER_DISCRETIONARY = "ConsumerDiscretionary"

    @classmethod
    def parse(cls, token: str) -> "Sector":
        key = token.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ConfigError(f"unknown sector {token!r}")


#: Maximum tolerated missing fraction per vehicle.
DEFAULT_MISSING_THRESHOLDS: Mapping[Vehicle, float] = {
    Vehicle.STOCK: 0.01,
    Vehicle.CRYPTO: 0.10,
    Vehicle.US_ETF: 0.12,
}


@dataclass(frozen=True)
class AssetMeta:
    """Static asset metadata: ticker, vehicle class and sector label."""

    ticker: str
    vehicle: Vehicle
    sector: Sector

    def __post_init__(self):
        if not self.ticker:
            raise ConfigError("empty ticker")
        if (self.vehicle is Vehicle.CRYPTO) != (self.sector is Sector.CRYPTO):
            raise ConfigError(
                f"{self.ticker}: crypto vehicle and Crypto sector must coincide")
        if (self.vehicle is Vehicle.US_ETF) != (self.sector is Sector.US_ETF):
            raise ConfigError(
                f"{self.ticker}: ETF vehicle and UsEtf sector must coincide")


@dataclass(frozen=True)
class TradingWindow:
    """Half-open daily time-of-day window [start, end)."""

    start: time = time(9, 30)
    end: time = time(16, 0)

    def __post_init__(self):
        if self.start >= self.end:
            raise ConfigError("trading window start must precede end")

    @property
    def start_minute(self) -> int:
        return self.start.hour * 60 + self.start.minute

    @property
    def end_minute(self) -> int:
        return self.end.hour * 60 + self.end.minute


DEFAULT_TRADING_WINDOW = TradingWindow()


@dataclass(frozen=True)
class RawSeries:
    """One asset's close series, strictly increasing timestamps."""

    ticker: str
    timestamps: np.ndarray  # datetime64[s], exchange-local wall clock
    closes: np.ndarray      # float64, > 0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        px = np.asarray(self.closes, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "closes", px)
        if ts.shape != px.shape or ts.ndim != 1:
            raise DataError(f"{self.ticker}: timestamps/closes shape mismatch")
        if ts.size > 1 and not (np.diff(ts.astype("int64")) > 0).all():
            raise DataError(f"{self.ticker}: timestamps not strictly increasing")
        if px.size and (not np.isfinite(px).all() or (px <= 0).any()):
            raise DataError(f"{self.ticker}: closes must be finite and positive")

    def __len__(self) -> int:
        return int(self.timestamps.size)


class FillRecord(NamedTuple):
    ticker: str
    timestamp: np.datetime64
    method: str  # "ffill" | "bfill"


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    missing_fraction: float
    threshold: float


@dataclass(frozen=True)
class AlignedPanel:
    """Fully populated price matrix on one shared timestamp grid.

    Rows follow ``assets`` order (ascending ticker); columns follow ``grid``.
    Every cell that was not directly observed appears in ``fill_log``.
    """

    assets: tuple[AssetMeta, ...]
    grid: np.ndarray                 # datetime64[s], strictly increasing
    prices: np.ndarray               # float64 [n_assets, n_timestamps]
    fill_log: tuple[FillRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype="datetime64[s]")
        prices = np.asarray(self.prices, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "fill_log", tuple(self.fill_log))
        if len(self.assets) < 2:
            raise DataError("panel needs at least 2 assets")
        if grid.size < 3:
            raise DataError("panel needs at least 3 timestamps")
        if grid.size > 1 and not (np.diff(grid.astype("int64")) > 0).all():
            raise DataError("panel grid not strictly increasing")
        if prices.shape != (len(self.assets), grid.size):
            raise DataError("price matrix shape does not match assets x grid")
        if not np.isfinite(prices).all() or (prices <= 0).any():
            raise DataError("panel prices must be finite and positive")

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(a.ticker for a in self.assets)

    def row(self, ticker: str) -> np.ndarray:
        return self.prices[self.tickers.index(ticker)]

    def restrict(self, tickers: Iterable[str]) -> "AlignedPanel":
        """Sub-panel containing only the given tickers (same grid)."""
        wanted = set(tickers)
        idx = [i for i, a in enumerate(self.assets) if a.ticker in wanted]
        missing = wanted - {self.assets[i].ticker for i in idx}
        if missing:
            raise DataError(f"tickers not in panel: {sorted(missing)}")
        kept = {self.assets[i].ticker for i in idx}
        return AlignedPanel(
            assets=tuple(self.assets[i] for i in idx),
            grid=self.grid,
            prices=self.prices[idx],
            fill_log=tuple(r for r in self.fill_log if r.ticker in kept),
        )


@dataclass(frozen=True)
class SubPeriod:
    """Named calendar interval, inclusive on both ends."""

    name: str
    start: date
    end: date

    def __post_init__(self):
        if not self.name:
            raise ConfigError("sub-period name must be non-empty")
        if self.start > self.end:
            raise ConfigError(f"sub-period {self.name}: start after end")


FULL_PERIOD = "full"


# --- CSV loading ------------------------------------------------------------

def _parse_timestamp(text: str, tz: ZoneInfo | None) -> datetime:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)  # accepts "YYYY-MM-DD HH:MM" too
    if dt.tzinfo is not None:
        if tz is None:
            tz = ZoneInfo(DEFAULT_TIMEZONE)
        dt = dt.astimezone(tz).replace(tzinfo=None)
    return dt


def load_bars(path: Path | str, ticker: str, *,
              tz: str | None = DEFAULT_TIMEZONE) -> RawSeries:
    """Parse one bar CSV into a RawSeries of closes, sorted ascending.

    Accepts 6-column OHLCV or 2-column (timestamp, close) rows; an optional
    header row is skipped. Raises MalformedRow, DuplicateTimestamp or
    NonPositivePrice on defective rows.
    """
    path = Path(path)
    zone = ZoneInfo(tz) if tz else None
    rows: list[tuple[datetime, float]] = []
    n_cols: int | None = None
    with path.open(newline="") as fh:
        for line_no, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if n_cols is None:
                # first non-blank row: may be a header
                try:
                    _parse_timestamp(record[0], zone)
                except ValueError:
                    continue
                n_cols = len(record)
                if n_cols not in (2, 6):
                    raise MalformedRow(line_no, f"expected 2 or 6 columns, got {n_cols}")
            if len(record) != n_cols:
                raise MalformedRow(line_no, f"expected {n_cols} columns, got {len(record)}")
            try:
                ts = _parse_timestamp(record[0], zone)
            except ValueError as exc:
                raise MalformedRow(line_no, str(exc)) from None
            close_field = record[1] if n_cols == 2 else record[4]
            try:
                close = float(close_field)
            except ValueError:
                raise MalformedRow(line_no, f"bad close {close_field!r}") from None
            if not math.isfinite(close):
                raise MalformedRow(line_no, f"non-finite close {close_field!r}")
            if close <= 0:
                raise NonPositivePrice(ts)
            rows.append((ts, close))
    if not rows:
        raise MalformedRow(1, "no data rows")
    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DuplicateTimestamp(a)
    return RawSeries(
        ticker=ticker,
        timestamps=np.array([r[0] for r in rows], dtype="datetime64[s]"),
        closes=np.array([r[1] for r in rows], dtype=np.float64),
    )


# --- filtering and alignment -------------------------------------------------

def in_window(series: RawSeries, window: TradingWindow = DEFAULT_TRADING_WINDOW
              ) -> np.ndarray:
    """Boolean mask of observations inside the daily trading window."""
    minutes = ((series.timestamps - series.timestamps.astype("datetime64[D]"))
               .astype("timedelta64[m]").astype(np.int64))
    return (minutes >= window.start_minute) & (minutes < window.end_minute)


def filter_by_missing(series: RawSeries, grid: Sequence | np.ndarray,
                      vehicle: Vehicle, *,
                      thresholds: Mapping[Vehicle, float] | None = None
                      ) -> FilterDecision:
    """Accept/reject an asset by the fraction of grid timestamps it misses."""
    grid_arr = np.asarray(grid, dtype="datetime64[s]")
    if grid_arr.size == 0:
        raise EmptyGrid("cannot filter against an empty grid")
    limits = DEFAULT_MISSING_THRESHOLDS if thresholds is None else thresholds
    threshold = float(limits[vehicle])
    observed = np.intersect1d(series.timestamps, grid_arr).size
    fraction = 1.0 - observed / grid_arr.size
    return FilterDecision(accepted=fraction <= threshold,
                          missing_fraction=float(fraction),
                          threshold=threshold)


def shared_grid(series_list: Sequence[RawSeries],
                window: TradingWindow = DEFAULT_TRADING_WINDOW,
                *, quorum: float = 0.5) -> np.ndarray:
    """Union of in-window timestamps present in at least ``quorum`` of assets."""
    if not series_list:
        raise EmptyGrid("no series")
    chunks = []
    for s in series_list:
        ts = s.timestamps[in_window(s, window)]
        if ts.size:
            chunks.append(ts)
    if not chunks:
        raise EmptyGrid("no in-window observations in any series")
    stamps, counts = np.unique(np.concatenate(chunks), return_counts=True)
    return stamps[counts >= quorum * len(series_list)]


def align(accepted: Sequence[RawSeries], metas: Sequence[AssetMeta],
          window: TradingWindow = DEFAULT_TRADING_WINDOW,
          *, quorum: float = 0.5) -> AlignedPanel:
    """Align accepted series onto one shared in-window grid.

    Gaps are forward-filled from the asset's last prior in-window
    observation; a leading gap is back-filled from its first observation.
    Every filled cell lands in the panel's fill log.
    """
    if len(accepted) < 2:
        raise DataError("align needs at least 2 accepted series")
    meta_by_ticker = {m.ticker: m for m in metas}
    missing_meta = [s.ticker for s in accepted if s.ticker not in meta_by_ticker]
    if missing_meta:
        raise ConfigError(f"no metadata for tickers: {sorted(missing_meta)}")

    ordered = sorted(accepted, key=lambda s: s.ticker)
    windowed: list[tuple[str, np.ndarray, np.ndarray]] = []
    for s in ordered:
        mask = in_window(s, window)
        if not mask.any():
            raise UnfillableAsset(s.ticker)
        windowed.append((s.ticker, s.timestamps[mask], s.closes[mask]))

    grid = shared_grid(ordered, window, quorum=quorum)
    if grid.size == 0:
        raise EmptyGrid("no timestamp reaches the asset quorum")
    if grid.size < 3:
        raise EmptyGrid(f"grid has only {grid.size} timestamps; need at least 3")

    prices = np.empty((len(windowed), grid.size), dtype=np.float64)
    fills: list[FillRecord] = []
    for row, (ticker, ts, px) in enumerate(windowed):
        idx = np.searchsorted(ts, grid, side="right") - 1
        clipped = np.clip(idx, 0, ts.size - 1)
        values = px[clipped]
        exact = ts[clipped] == grid
        prices[row] = values
        for col in np.nonzero(~exact)[0]:
            method = "bfill" if idx[col] < 0 else "ffill"
            fills.append(FillRecord(ticker, grid[col], method))

    return AlignedPanel(
        assets=tuple(meta_by_ticker[t] for t, _, _ in windowed),
        grid=grid,
        prices=prices,
        fill_log=tuple(fills),
    )


def slice_panel(panel: AlignedPanel, sub: SubPeriod) -> AlignedPanel:
    """Restrict a panel to [sub.start, sub.end] by calendar date."""
    days = panel.grid.astype("datetime64[D]")
    mask = (days >= np.datetime64(sub.start)) & (days <= np.datetime64(sub.end))
    kept = int(mask.sum())
    if kept == 0:
        raise EmptySlice(f"{sub.name}: no panel timestamps in range")
    if kept < 3:
        raise EmptySlice(f"{sub.name}: only {kept} timestamps in range")
    grid = panel.grid[mask]
    in_range = set(grid.tolist())
    return AlignedPanel(
        assets=panel.assets,
        grid=grid,
        prices=panel.prices[:, mask],
        fill_log=tuple(r for r in panel.fill_log
                       if r.timestamp.astype("datetime64[s]").item() in in_range),
    )


# --- config files -------------------------------------------------------------

def read_sector_map(path: Path | str) -> dict[str, AssetMeta]:
    """Parse a "TICKER vehicle sector" map, one asset per line."""
    path = Path(path)
    out: dict[str, AssetMeta] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read sector map {path}: {exc}") from None
    for line_no, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 3:
            raise ConfigError(f"{path}:{line_no}: expected 'TICKER vehicle sector'")
        ticker = parts[0].upper()
        if ticker in out:
            raise ConfigError(f"{path}:{line_no}: duplicate ticker {ticker}")
        out[ticker] = AssetMeta(ticker, Vehicle.parse(parts[1]), Sector.parse(parts[2]))
    if not out:
        raise ConfigError(f"sector map {path} is empty")
    return out


def read_subperiods(path: Path | str) -> tuple[SubPeriod, ...]:
    """Parse "name,start_date,end_date" lines with ISO dates."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read sub-period file {path}: {exc}") from None
    subs: list[SubPeriod] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"{path}:{line_no}: expected 'name,start,end'")
        name = parts[0]
        if name in seen:
            raise ConfigError(f"{path}:{line_no}: duplicate sub-period {name!r}")
        if name == FULL_PERIOD:
            raise ConfigError(f"{path}:{line_no}: name {FULL_PERIOD!r} is reserved")
        try:
            start, end = date.fromisoformat(parts[1]), date.fromisoformat(parts[2])
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: {exc}") from None
        subs.append(SubPeriod(name, start, end))
        seen.add(name)
    return tuple(subs)
