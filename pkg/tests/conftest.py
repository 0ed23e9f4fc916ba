import datetime as dt
from pathlib import Path

import numpy as np
import pytest

from earncast import synth
from earncast.dataset import (
    CompanyRecord,
    DatasetManifest,
    EarningsInstance,
    PriceBar,
    load_manifest,
)
from earncast.features import MarketContext


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Small synthetic dataset shared by pipeline-level tests."""
    out = tmp_path_factory.mktemp("synth")
    manifest_path, stats = synth.generate(synth.SynthConfig(n_instances=120, seed=5), out)
    return manifest_path, stats


@pytest.fixture(scope="session")
def synth_manifest(synth_dataset):
    manifest_path, _ = synth_dataset
    return load_manifest(manifest_path)


def make_instance(
    company_id="TCS",
    call_date=dt.date(2024, 1, 15),
    open_d=100.0,
    open_d1=102.0,
    transcript_text="hello world",
    **kwargs,
) -> EarningsInstance:
    return EarningsInstance(
        company_id=company_id,
        call_date=call_date,
        open_d=open_d,
        open_d1=open_d1,
        transcript_text=transcript_text,
        **kwargs,
    )


def make_bars(start: dt.date, closes, opens=None, volume=1000.0):
    """Weekday-only bar series from explicit close (and optional open) values."""
    bars = []
    day = start
    for i, close in enumerate(closes):
        while day.weekday() >= 5:
            day += dt.timedelta(days=1)
        open_ = close if opens is None else opens[i]
        bars.append(PriceBar(date=day, open=float(open_), close=float(close), volume=volume))
        day += dt.timedelta(days=1)
    return tuple(bars)


def make_context(company_id="TCS", closes=None, start=dt.date(2023, 1, 2), **overrides):
    closes = np.linspace(95, 105, 60) if closes is None else closes
    bars = make_bars(start, closes)
    defaults = dict(
        company_prices={company_id: bars},
        index_prices=bars,
        gdp_growth=((dt.date(2023, 1, 1), 6.1), (dt.date(2023, 10, 1), 6.5)),
        inflation_rate=((dt.date(2023, 1, 1), 5.2),),
        fundamentals={},
    )
    defaults.update(overrides)
    return MarketContext(**defaults)
