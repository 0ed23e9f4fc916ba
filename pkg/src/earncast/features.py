"""Feature engineering: technical indicators, the numeric feature schema,
and embedding-vector operations (matryoshka truncation, mean pooling,
missing-modality encoding).

All operations are pure; shared inputs are treated as immutable.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .dataset import DatasetManifest, EarningsInstance, PriceBar

DEFAULT_EMBED_DIM = 128
DEGENERATE_NORM = 1e-12

# Fixed, ordered numeric schema. Every model sees exactly this column order.
MACRO_FIELDS = ("gdp_growth", "inflation_rate")
MARKET_FIELDS = ("nifty_open", "nifty_close", "nifty_volume")
TECHNICAL_FIELDS = ("sma20", "sma50", "rsi14")
FUNDAMENTAL_FIELDS = (
    # financial statement items
    "sales",
    "expenses",
    "operating_profit",
    "other_income",
    "interest_expense",
    "depreciation",
    "profit_before_tax",
    "tax_rate",
    "net_profit",
    "eps",
    "dividend_payout",
    "equity_capital",
    "reserves",
    "borrowings",
    "other_liabilities",
    "total_liabilities",
    "fixed_assets",
    "cwip",
    "investments",
    "other_assets",
    "total_assets",
    # cash flow items
    "cash_from_operating",
    "cash_from_investing",
    "cash_from_financing",
    "net_cash_flow",
    # additional metrics (mostly populated for financing companies)
    "revenue",
    "financing_profit",
    "financing_margin",
    "deposits",
    "borrowing",
)
NUMERIC_SCHEMA: tuple[str, ...] = (
    MACRO_FIELDS + MARKET_FIELDS + TECHNICAL_FIELDS + FUNDAMENTAL_FIELDS + ("open_d",)
)
_SCHEMA_INDEX = {name: i for i, name in enumerate(NUMERIC_SCHEMA)}


class FeatureError(ValueError):
    pass


class SeriesTooShortError(FeatureError):
    pass


class MissingMarketDataError(FeatureError):
    pass


class DegenerateEmbeddingError(FeatureError):
    """Truncated prefix has (near-)zero norm; the embedding is unusable."""


@dataclass(frozen=True)
class NumericFeatureVector:
    """Schema-complete numeric features; NaN marks an explicitly missing value."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(NUMERIC_SCHEMA),):
            raise FeatureError(
                f"numeric vector must have {len(NUMERIC_SCHEMA)} entries, got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NumericFeatureVector):
            return NotImplemented
        return np.array_equal(self.values, other.values, equal_nan=True)

    def __getitem__(self, name: str) -> float:
        return float(self.values[_SCHEMA_INDEX[name]])

    @classmethod
    def from_dict(cls, d: dict) -> "NumericFeatureVector":
        unknown = set(d) - set(NUMERIC_SCHEMA)
        if unknown:
            raise FeatureError(f"unknown numeric fields: {sorted(unknown)}")
        vals = np.full(len(NUMERIC_SCHEMA), np.nan)
        for k, v in d.items():
            if v is not None:
                vals[_SCHEMA_INDEX[k]] = float(v)
        return cls(vals)

    def to_dict(self) -> dict:
        return {
            name: (None if np.isnan(v) else float(v))
            for name, v in zip(NUMERIC_SCHEMA, self.values)
        }


# ---------------------------------------------------------------------------
# technical indicators


def sma(prices: Sequence[float], window: int) -> np.ndarray:
    """Simple moving average; leading window-1 entries are NaN.

    Entry t (t >= window-1) is the arithmetic mean of prices[t-window+1 .. t].
    """
    p = np.asarray(prices, dtype=np.float64)
    if window < 1:
        raise FeatureError(f"window must be >= 1, got {window}")
    if p.ndim != 1 or len(p) < window:
        raise SeriesTooShortError(f"need at least {window} prices, got {p.shape}")
    out = np.full(len(p), np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(p, window)
    out[window - 1 :] = windows.mean(axis=1)
    return out


def rsi14(prices: Sequence[float]) -> np.ndarray:
    """14-period Relative Strength Index with Wilder smoothing, in [0, 100].

    First averages are the simple mean of the first 14 gains/losses, then
    avg <- (13*avg + current) / 14. A window with zero average gain AND zero
    average loss maps to 50.
    """
    period = 14
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or len(p) < period + 1:
        raise SeriesTooShortError(f"need at least {period + 1} prices, got {p.shape}")
    delta = np.diff(p)
    gains = np.where(delta > 0, delta, 0.0)
    losses = np.where(delta < 0, -delta, 0.0)

    out = np.full(len(p), np.nan)
    avg_gain = gains[:period].mean()
    avg_loss = losses[:period].mean()
    out[period] = _rsi_value(avg_gain, avg_loss)
    for t in range(period + 1, len(p)):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


# ---------------------------------------------------------------------------
# embedding operations


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension real vector with modality provenance."""

    values: np.ndarray
    modality: str
    truncated_from: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise FeatureError(f"embedding must be a non-empty 1-D vector, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FeatureError("embedding contains non-finite values")
        if self.modality not in ("text", "image", "pooled"):
            raise FeatureError(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            self.modality == other.modality
            and self.truncated_from == other.truncated_from
            and np.array_equal(self.values, other.values)
        )


def truncate_matryoshka(e: Embedding, k: int = DEFAULT_EMBED_DIM) -> Embedding:
    """Keep the first k components and renormalize to unit Euclidean norm."""
    if not 1 <= k <= e.dim:
        raise FeatureError(f"k must be in [1, {e.dim}], got {k}")
    prefix = e.values[:k]
    norm = float(np.linalg.norm(prefix))
    if norm < DEGENERATE_NORM:
        raise DegenerateEmbeddingError(
            f"first {k} components have norm {norm:.3e}; embedding unusable"
        )
    return Embedding(prefix / norm, modality=e.modality, truncated_from=e.dim)


def mean_pool(embs: Sequence[Embedding]) -> Embedding:
    """Componentwise arithmetic mean of same-dimension embeddings.

    Pooling is done at full dimension, before any truncation.
    """
    if len(embs) == 0:
        raise FeatureError("cannot pool an empty embedding list")
    dims = {e.dim for e in embs}
    if len(dims) != 1:
        raise FeatureError(f"dimension mismatch in pooled embeddings: {sorted(dims)}")
    stacked = np.stack([e.values for e in embs])
    return Embedding(stacked.mean(axis=0), modality="pooled")


def encode_missing_modality(dim: int, modality: str = "pooled") -> tuple[Embedding, float]:
    """Zero vector plus an explicit missing-indicator feature (1.0)."""
    if dim < 1:
        raise FeatureError(f"dim must be >= 1, got {dim}")
    return Embedding(np.zeros(dim), modality=modality), 1.0


# ---------------------------------------------------------------------------
# market context and numeric feature assembly


@dataclass
class MarketContext:
    """Point-in-time market data: per-company price bars, index bars, macro
    series, and annual fundamentals. Every read is optionally audited so the
    no-lookahead property can be asserted from outside.

    Audit entries are tuples (kind, key, through_date, max_date_served).
    """

    company_prices: dict[str, tuple["PriceBar", ...]]
    index_prices: tuple["PriceBar", ...]
    gdp_growth: tuple[tuple[dt.date, float], ...]
    inflation_rate: tuple[tuple[dt.date, float], ...]
    fundamentals: dict[str, dict[int, dict[str, float]]] = field(default_factory=dict)
    audit_log: list | None = field(default=None, compare=False, repr=False)

    def _audit(self, kind: str, key: str, through: dt.date, served: dt.date | None):
        if self.audit_log is not None:
            self.audit_log.append((kind, key, through, served))

    def company_bars_through(self, company_id: str, through: dt.date) -> tuple["PriceBar", ...]:
        bars = self.company_prices.get(company_id, ())
        out = tuple(b for b in bars if b.date <= through)
        self._audit("company_prices", company_id, through, out[-1].date if out else None)
        return out

    def index_bar_asof(self, through: dt.date) -> "PriceBar | None":
        out = None
        for b in self.index_prices:
            if b.date > through:
                break
            out = b
        self._audit("index_prices", "nifty", through, out.date if out else None)
        return out

    def macro_asof(self, name: str, strictly_before: dt.date) -> float:
        """Latest value published strictly before the date; NaN when none."""
        series = getattr(self, name)
        value, served = np.nan, None
        for d, v in series:
            if d >= strictly_before:
                break
            value, served = v, d
        self._audit(name, name, strictly_before, served)
        return value

    def fundamentals_asof(self, company_id: str, call_date: dt.date) -> dict[str, float]:
        """Most recent fiscal year strictly before the call year; empty when none."""
        years = self.fundamentals.get(company_id, {})
        eligible = [y for y in years if y < call_date.year]
        if not eligible:
            self._audit("fundamentals", company_id, call_date, None)
            return {}
        year = max(eligible)
        self._audit("fundamentals", company_id, call_date, dt.date(year, 12, 31))
        return years[year]

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_json_file(cls, path: str | Path) -> "MarketContext":
        from .dataset import PriceBar  # local import to avoid a cycle

        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)

        def bars(entries) -> tuple[PriceBar, ...]:
            return tuple(
                PriceBar(
                    date=dt.date.fromisoformat(e["date"]),
                    open=float(e["open"]),
                    close=float(e["close"]),
                    volume=float(e["volume"]),
                )
                for e in entries
            )

        def macro(entries) -> tuple[tuple[dt.date, float], ...]:
            return tuple((dt.date.fromisoformat(e["date"]), float(e["value"])) for e in entries)

        return cls(
            company_prices={k: bars(v) for k, v in raw.get("companies", {}).items()},
            index_prices=bars(raw.get("index", [])),
            gdp_growth=macro(raw.get("gdp_growth", [])),
            inflation_rate=macro(raw.get("inflation_rate", [])),
        )

    def to_json_file(self, path: str | Path) -> None:
        def bars(entries: Iterable["PriceBar"]):
            return [
                {"date": b.date.isoformat(), "open": b.open, "close": b.close, "volume": b.volume}
                for b in entries
            ]

        def macro(entries):
            return [{"date": d.isoformat(), "value": v} for d, v in entries]

        payload = {
            "companies": {k: bars(v) for k, v in sorted(self.company_prices.items())},
            "index": bars(self.index_prices),
            "gdp_growth": macro(self.gdp_growth),
            "inflation_rate": macro(self.inflation_rate),
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def for_manifest(cls, manifest: "DatasetManifest") -> "MarketContext":
        """Load the manifest's market_ref file and merge company fundamentals."""
        if manifest.market_ref is None:
            raise MissingMarketDataError("manifest has no market_ref")
        if manifest.base_dir is None:
            raise MissingMarketDataError("manifest has no base directory to resolve market_ref")
        ctx = cls.from_json_file(Path(manifest.base_dir) / manifest.market_ref)
        ctx.fundamentals = {c.company_id: c.fundamentals for c in manifest.companies}
        return ctx


def assemble_numeric(instance: "EarningsInstance", market_context: MarketContext) -> NumericFeatureVector:
    """Build the schema-complete numeric vector for one earnings instance.

    Indicators use the company's closes up to and including the call day only;
    fundamentals come from the most recent fiscal year strictly before the
    call; macro values are the latest published strictly before the call.
    Values that cannot be computed are explicit NaN markers, never zeros.
    """
    d = instance.call_date
    values: dict[str, float] = {}

    values["gdp_growth"] = market_context.macro_asof("gdp_growth", d)
    values["inflation_rate"] = market_context.macro_asof("inflation_rate", d)

    index_bar = market_context.index_bar_asof(d)
    if index_bar is None:
        raise MissingMarketDataError(f"no index bar on or before {d}")
    values["nifty_open"] = index_bar.open
    values["nifty_close"] = index_bar.close
    values["nifty_volume"] = index_bar.volume

    bars = market_context.company_bars_through(instance.company_id, d)
    if not bars:
        raise MissingMarketDataError(f"no price bars for {instance.company_id} on or before {d}")
    closes = np.array([b.close for b in bars])
    values["sma20"] = float(sma(closes, 20)[-1]) if len(closes) >= 20 else np.nan
    values["sma50"] = float(sma(closes, 50)[-1]) if len(closes) >= 50 else np.nan
    values["rsi14"] = float(rsi14(closes)[-1]) if len(closes) >= 15 else np.nan

    fundamentals = market_context.fundamentals_asof(instance.company_id, d)
    for name in FUNDAMENTAL_FIELDS:
        v = fundamentals.get(name)
        values[name] = np.nan if v is None else float(v)

    values["open_d"] = instance.open_d
    vals = np.array([values[name] for name in NUMERIC_SCHEMA])
    return NumericFeatureVector(vals)
