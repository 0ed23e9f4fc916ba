"""Synthetic earnings-call dataset with a known, tunable direction signal.

Prices follow seeded geometric random walks, so next-day direction is a fair
coin; text/image embeddings are random unit vectors whose FIRST component's
sign agrees with the realized direction with probability ``signal_agreement``
(default 0.8). That makes stage-1 learnability and the cascade's advantage
checkable: a model that recovers the sign feature beats numeric-only.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import embfile
from .dataset import (
    CompanyRecord,
    DatasetManifest,
    EarningsInstance,
    PriceBar,
    SplitSpec,
    direction_label,
    save_manifest,
)
from .features import FUNDAMENTAL_FIELDS, MarketContext

_FINANCING_FIELDS = ("revenue", "financing_profit", "financing_margin", "deposits", "borrowing")

SERIES_START = dt.date(2019, 1, 1)
SERIES_END = dt.date(2025, 6, 30)
CALL_START = dt.date(2019, 7, 1)
CALL_END = dt.date(2025, 5, 31)


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int
    seed: int = 0
    native_dim: int = 256
    signal_agreement: float = 0.8
    missing_text_rate: float = 0.12
    missing_image_rate: float = 0.12
    # close-to-close vol is deliberately smaller than the overnight gap vol:
    # technical features can see the day-d close, so only the gap portion of
    # the next open is genuinely unpredictable from numeric data, and that is
    # the part the call-content signal (embeddings) speaks to
    daily_vol: float = 0.012
    open_gap_vol: float = 0.022
    start_spread: float = 0.12  # log-sd of company base prices around 100
    # mild pull of log price toward its company anchor keeps multi-year
    # series from drifting orders of magnitude away from their start
    mean_reversion: float = 0.03

    def __post_init__(self):
        if self.n_instances < 10:
            raise ValueError("need at least 10 instances")
        if not 0.5 <= self.signal_agreement <= 1.0:
            raise ValueError("signal_agreement must be in [0.5, 1]")


@dataclass
class SynthStats:
    n_instances: int
    n_companies: int
    label_balance: float
    text_sign_agreement: float
    image_sign_agreement: float
    n_missing_text: int
    n_missing_image: int
    split_counts: dict = field(default_factory=dict)

    def summary(self) -> str:
        return (
            f"instances={self.n_instances} companies={self.n_companies} "
            f"up-share={self.label_balance:.3f} "
            f"text-agreement={self.text_sign_agreement:.3f} "
            f"image-agreement={self.image_sign_agreement:.3f} "
            f"missing text/image={self.n_missing_text}/{self.n_missing_image} "
            f"split={self.split_counts}"
        )


def _trading_days(start: dt.date, end: dt.date) -> list[dt.date]:
    days = []
    cur = start
    one = dt.timedelta(days=1)
    while cur <= end:
        if cur.weekday() < 5:
            days.append(cur)
        cur += one
    return days


def _walk_bars(days, start_price: float, cfg: SynthConfig, rng) -> list[PriceBar]:
    n = len(days)
    anchor = np.log(start_price)
    steps = rng.normal(0.0, cfg.daily_vol, size=n)
    log_closes = np.empty(n)
    level = anchor
    for t in range(n):
        level += cfg.mean_reversion * (anchor - level) + steps[t]
        log_closes[t] = level
    closes = np.exp(log_closes)
    gaps = np.exp(rng.normal(0.0, cfg.open_gap_vol, size=n))
    opens = np.empty(n)
    opens[0] = start_price * gaps[0]
    opens[1:] = closes[:-1] * gaps[1:]
    volumes = rng.integers(100_000, 10_000_000, size=n).astype(float)
    return [
        PriceBar(date=d, open=float(o), close=float(c), volume=v)
        for d, o, c, v in zip(days, opens, closes, volumes)
    ]


def _fundamentals_for(company_idx: int, years, rng) -> dict[int, dict[str, float]]:
    base = float(rng.lognormal(np.log(1500.0), 0.8))
    is_financing = company_idx % 4 == 0
    out: dict[int, dict[str, float]] = {}
    for year in years:
        scale = base * float(np.exp(rng.normal(0.06, 0.12)))
        sales = scale * float(rng.uniform(0.8, 1.2))
        expenses = sales * float(rng.uniform(0.6, 0.9))
        profit_before_tax = sales - expenses + scale * float(rng.uniform(-0.05, 0.1))
        tax_rate = float(rng.uniform(18.0, 32.0))
        vals = {
            "sales": sales,
            "expenses": expenses,
            "operating_profit": sales - expenses,
            "other_income": scale * float(rng.uniform(0.0, 0.08)),
            "interest_expense": scale * float(rng.uniform(0.0, 0.12)),
            "depreciation": scale * float(rng.uniform(0.01, 0.08)),
            "profit_before_tax": profit_before_tax,
            "tax_rate": tax_rate,
            "net_profit": profit_before_tax * (1.0 - tax_rate / 100.0),
            "eps": float(rng.uniform(1.0, 120.0)),
            "dividend_payout": float(rng.uniform(0.0, 60.0)),
            "equity_capital": scale * float(rng.uniform(0.05, 0.3)),
            "reserves": scale * float(rng.uniform(0.5, 3.0)),
            "borrowings": scale * float(rng.uniform(0.1, 1.5)),
            "other_liabilities": scale * float(rng.uniform(0.1, 0.8)),
            "fixed_assets": scale * float(rng.uniform(0.3, 2.0)),
            "cwip": scale * float(rng.uniform(0.0, 0.3)),
            "investments": scale * float(rng.uniform(0.0, 1.0)),
            "other_assets": scale * float(rng.uniform(0.1, 1.0)),
            "cash_from_operating": scale * float(rng.uniform(-0.2, 0.5)),
            "cash_from_investing": scale * float(rng.uniform(-0.5, 0.2)),
            "cash_from_financing": scale * float(rng.uniform(-0.3, 0.3)),
        }
        vals["total_liabilities"] = (
            vals["equity_capital"] + vals["reserves"] + vals["borrowings"] + vals["other_liabilities"]
        )
        vals["total_assets"] = vals["total_liabilities"]
        vals["net_cash_flow"] = (
            vals["cash_from_operating"] + vals["cash_from_investing"] + vals["cash_from_financing"]
        )
        if is_financing:
            vals["revenue"] = sales
            vals["financing_profit"] = sales - expenses
            vals["financing_margin"] = float(rng.uniform(1.0, 12.0))
            vals["deposits"] = scale * float(rng.uniform(1.0, 5.0))
            vals["borrowing"] = scale * float(rng.uniform(0.2, 2.0))
        # sporadic gaps: a real feed leaves holes, keep them explicit
        for name in list(vals):
            if name not in _FINANCING_FIELDS and rng.random() < 0.02:
                del vals[name]
        out[year] = vals
    assert set().union(*[set(v) for v in out.values()]) <= set(FUNDAMENTAL_FIELDS)
    return out


def _signed_unit(rng, dim: int, sign: float) -> np.ndarray:
    v = rng.normal(size=dim)
    v[0] = sign * abs(v[0])
    return v / np.linalg.norm(v)


def generate(cfg: SynthConfig, out_dir: str | Path) -> tuple[Path, SynthStats]:
    """Write a complete synthetic dataset (manifest, market data, raw text,
    embedding files) under out_dir; returns (manifest path, generator stats)."""
    out_dir = Path(out_dir)
    (out_dir / "embeddings").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    n = cfg.n_instances
    n_companies = max(2, n // 8)
    company_ids = [f"SYN{i:03d}" for i in range(n_companies)]
    days = _trading_days(SERIES_START, SERIES_END)
    day_index = {d: i for i, d in enumerate(days)}

    company_bars = {
        cid: _walk_bars(days, float(rng.lognormal(np.log(100.0), cfg.start_spread)), cfg, rng)
        for cid in company_ids
    }
    index_bars = _walk_bars(days, 18_000.0, cfg, rng)
    quarters = [dt.date(y, m, 1) for y in range(2018, 2026) for m in (1, 4, 7, 10)]
    months = [dt.date(y, m, 1) for y in range(2018, 2026) for m in range(1, 13)]
    ctx = MarketContext(
        company_prices={cid: tuple(bars) for cid, bars in company_bars.items()},
        index_prices=tuple(index_bars),
        gdp_growth=tuple((d, float(rng.normal(6.0, 1.2))) for d in quarters),
        inflation_rate=tuple((d, float(rng.normal(5.0, 1.0))) for d in months),
    )
    ctx.to_json_file(out_dir / "market.json")

    companies = tuple(
        CompanyRecord(
            company_id=cid,
            name=f"Synthetic Industries {i:03d}",
            fundamentals=_fundamentals_for(i, range(2018, 2025), rng),
        )
        for i, cid in enumerate(company_ids)
    )

    # stratified call dates so every temporal split region is populated
    split = SplitSpec()
    n_val = max(1, round(0.15 * n))
    n_test = max(1, round(0.15 * n))
    regions = (["train"] * (n - n_val - n_test)) + (["val"] * n_val) + (["test"] * n_test)
    eligible = {
        "train": [d for d in days if CALL_START <= d <= split.train_end],
        "val": [d for d in days if split.train_end < d <= split.val_end],
        "test": [d for d in days if split.val_end < d <= CALL_END],
    }
    region_sizes = {r: regions.count(r) for r in ("train", "val", "test")}

    def quota_flags(count: int) -> list[bool]:
        # exact agreement quota, shuffled; pinning the rate per split region
        # keeps the evaluation ceiling at signal_agreement instead of letting
        # binomial luck move it
        flags = np.zeros(count, dtype=bool)
        flags[: int(round(cfg.signal_agreement * count))] = True
        rng.shuffle(flags)
        return list(flags)

    text_quota = {r: quota_flags(sz) for r, sz in region_sizes.items()}
    image_quota = {r: quota_flags(sz) for r, sz in region_sizes.items()}
    up_minus_down = {r: 0 for r in region_sizes}

    used: set[tuple[str, dt.date]] = set()
    instances = []
    labels = []
    text_agree_hits: list[bool] = []
    image_agree_hits: list[bool] = []
    n_missing_text = n_missing_image = 0
    split_counts = {"train": 0, "val": 0, "test": 0}

    for j in range(n):
        cid = company_ids[j % n_companies]
        region = regions[j]
        bars = company_bars[cid]
        balance_cap = max(2, round(0.06 * region_sizes[region]))
        label = None
        for attempt in range(1000):
            d = eligible[region][int(rng.integers(0, len(eligible[region])))]
            # enough history for indicators, and a next trading day for the target
            if (cid, d) in used or not 60 <= day_index[d] < len(days) - 1:
                continue
            label = direction_label(bars[day_index[d]].open, bars[day_index[d] + 1].open)
            skew = up_minus_down[region] + (1 if label == 1 else -1)
            if attempt < 500 and abs(skew) > balance_cap:
                continue  # soft per-region balance
            break
        else:
            raise RuntimeError(f"could not place instance {j} in region {region}")
        used.add((cid, d))
        split_counts[region] += 1
        up_minus_down[region] += 1 if label == 1 else -1

        open_d = bars[day_index[d]].open
        open_d1 = bars[day_index[d] + 1].open
        labels.append(label)
        true_sign = 1.0 if label == 1 else -1.0

        miss_roll = rng.random()
        missing_text = miss_roll < cfg.missing_text_rate
        missing_image = cfg.missing_text_rate <= miss_roll < cfg.missing_text_rate + cfg.missing_image_rate

        iid = f"{cid}_{d.isoformat()}"
        transcript = transcript_ref = tables = tables_ref = text_emb_ref = None
        if not missing_text:
            transcript_ref = f"texts/{iid}_transcript.txt"
            tables_ref = f"texts/{iid}_tables.md"
            transcript = (
                f"Earnings call for {cid} held on {d.isoformat()}. Management walked "
                f"through quarterly segment performance, margin trajectory and the "
                f"demand outlook, followed by analyst questions on capital allocation."
            )
            tables = (
                "| metric | value |\n|---|---|\n"
                f"| quarter revenue | {rng.integers(100, 9999)} |\n"
                f"| quarter margin | {rng.integers(5, 40)}% |\n"
            )
            sign = true_sign if text_quota[region].pop() else -true_sign
            text_agree_hits.append(sign == true_sign)
            text_emb_ref = f"embeddings/{iid}_text.emb"
            embfile.write_embeddings(
                out_dir / text_emb_ref,
                _signed_unit(rng, cfg.native_dim, sign).astype(np.float32),
                embfile.MODALITY_TEXT,
            )
        else:
            n_missing_text += 1

        image_refs: tuple[str, ...] = ()
        if not missing_image:
            sign = true_sign if image_quota[region].pop() else -true_sign
            image_agree_hits.append(sign == true_sign)
            n_slides = int(rng.integers(4, 17))
            rows = np.stack([_signed_unit(rng, cfg.native_dim, sign) for _ in range(n_slides)])
            ref = f"embeddings/{iid}_images.emb"
            embfile.write_embeddings(out_dir / ref, rows.astype(np.float32), embfile.MODALITY_IMAGE)
            image_refs = (ref,)
        else:
            n_missing_image += 1

        instances.append(
            EarningsInstance(
                company_id=cid,
                call_date=d,
                open_d=float(open_d),
                open_d1=float(open_d1),
                transcript_text=transcript,
                transcript_ref=transcript_ref,
                table_markdown=tables,
                table_markdown_ref=tables_ref,
                text_embedding_ref=text_emb_ref,
                image_embedding_refs=image_refs,
            )
        )

    manifest = DatasetManifest(
        instances=tuple(instances),
        companies=companies,
        market_ref="market.json",
    )
    manifest_path = save_manifest(manifest, out_dir)
    stats = SynthStats(
        n_instances=n,
        n_companies=n_companies,
        label_balance=float(np.mean(labels)),
        text_sign_agreement=float(np.mean(text_agree_hits)) if text_agree_hits else float("nan"),
        image_sign_agreement=float(np.mean(image_agree_hits)) if image_agree_hits else float("nan"),
        n_missing_text=n_missing_text,
        n_missing_image=n_missing_image,
        split_counts=split_counts,
    )
    return manifest_path, stats
