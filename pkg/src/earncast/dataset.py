"""Earnings-call dataset model: manifest loading/validation, direction
labels, and leak-free temporal splits.

Manifest layout on disk (UTF-8 JSON, ISO-8601 dates):

    {
      "version": "1",
      "market_ref": "market.json",
      "companies": [{"company_id": "...", "name": "...", "fundamentals": {"2023": {...}}}],
      "instances": [{
          "company_id": "...", "call_date": "YYYY-MM-DD",
          "transcript_ref": "texts/....txt" | null,
          "table_markdown_ref": "texts/....md" | null,
          "text_embedding_ref": "embeddings/....emb" | null,
          "image_embedding_refs": ["embeddings/....emb", ...],
          "image_refs": [...],
          "numeric": {...} | null,
          "open_d": 101.3, "open_d1": 102.9
      }]
    }

Raw text lives in one UTF-8 file per instance per kind (transcript, tables),
referenced by path relative to the manifest; the manifest itself stays small.
Everything is immutable after load and safe to share across threads.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .features import NumericFeatureVector

MANIFEST_VERSION = "1"

# Paper-period defaults: training up to 2024-02-07, validation through
# 2024-08-09, test from 2024-08-10 onward.
DEFAULT_TRAIN_END = dt.date(2024, 2, 7)
DEFAULT_VAL_END = dt.date(2024, 8, 9)


class DatasetError(Exception):
    pass


class SchemaError(DatasetError):
    """A record violates the manifest schema; message names the offender."""


class DuplicateInstanceError(DatasetError):
    pass


@dataclass(frozen=True)
class PriceBar:
    date: dt.date
    open: float
    close: float
    volume: float

    def __post_init__(self):
        if not (self.open > 0 and self.close > 0):
            raise SchemaError(f"non-positive price in bar at {self.date}")
        if self.volume < 0:
            raise SchemaError(f"negative volume in bar at {self.date}")


def validate_bar_series(bars) -> None:
    """Dates within one series must be strictly increasing."""
    for prev, cur in zip(bars, bars[1:]):
        if cur.date <= prev.date:
            raise SchemaError(f"price series dates not strictly increasing at {cur.date}")


@dataclass(frozen=True)
class EarningsInstance:
    """One earnings event with its modalities and the next-day target."""

    company_id: str
    call_date: dt.date
    open_d: float
    open_d1: float
    transcript_text: str | None = None
    table_markdown: str | None = None
    transcript_ref: str | None = None
    table_markdown_ref: str | None = None
    text_embedding_ref: str | None = None
    image_embedding_refs: tuple[str, ...] = ()
    image_refs: tuple[str, ...] = ()
    numeric: NumericFeatureVector | None = None

    def __post_init__(self):
        if not self.company_id:
            raise SchemaError("instance with empty company_id")
        if not (self.open_d > 0 and self.open_d1 > 0):
            raise SchemaError(f"{self.instance_id}: non-positive open price")
        if self.transcript_text is None and not self.image_embedding_refs:
            raise SchemaError(
                f"{self.instance_id}: needs a transcript or presentation embeddings"
            )

    @property
    def instance_id(self) -> str:
        return f"{self.company_id}_{self.call_date.isoformat()}"

    @property
    def has_text(self) -> bool:
        return self.text_embedding_ref is not None

    @property
    def has_images(self) -> bool:
        return len(self.image_embedding_refs) > 0

    def with_numeric(self, numeric: NumericFeatureVector) -> "EarningsInstance":
        return replace(self, numeric=numeric)


@dataclass(frozen=True)
class CompanyRecord:
    company_id: str
    name: str = ""
    # fiscal year -> {fundamental field -> value}
    fundamentals: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.company_id:
            raise SchemaError("company record with empty company_id")


@dataclass(frozen=True)
class DatasetManifest:
    instances: tuple[EarningsInstance, ...]
    companies: tuple[CompanyRecord, ...]
    version: str = MANIFEST_VERSION
    market_ref: str | None = None
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        known = {c.company_id for c in self.companies}
        seen: set[tuple[str, dt.date]] = set()
        for inst in self.instances:
            if inst.company_id not in known:
                raise SchemaError(f"{inst.instance_id}: company not in companies list")
            key = (inst.company_id, inst.call_date)
            if key in seen:
                raise DuplicateInstanceError(f"duplicate instance {inst.instance_id}")
            seen.add(key)

    def resolve(self, ref: str) -> Path:
        if self.base_dir is None:
            return Path(ref)
        return Path(self.base_dir) / ref


@dataclass(frozen=True)
class SplitSpec:
    train_end: dt.date = DEFAULT_TRAIN_END
    val_end: dt.date = DEFAULT_VAL_END

    def __post_init__(self):
        if not self.train_end < self.val_end:
            raise SchemaError(f"train_end {self.train_end} must precede val_end {self.val_end}")


def direction_label(open_d: float, open_d1: float) -> int:
    """1 if the next-day opening price strictly exceeds the call-day one.

    Equality maps to 0: the predicate is strict exceedance.
    """
    if not (open_d > 0 and open_d1 > 0):
        raise DatasetError(f"non-positive price pair ({open_d}, {open_d1})")
    return 1 if open_d1 > open_d else 0


def temporal_split(
    manifest: DatasetManifest, spec: SplitSpec = SplitSpec()
) -> tuple[list[EarningsInstance], list[EarningsInstance], list[EarningsInstance]]:
    """Partition instances by call date: train <= train_end < val <= val_end < test."""
    train, val, test = [], [], []
    for inst in manifest.instances:
        if inst.call_date <= spec.train_end:
            train.append(inst)
        elif inst.call_date <= spec.val_end:
            val.append(inst)
        else:
            test.append(inst)
    return train, val, test


# ---------------------------------------------------------------------------
# manifest I/O


def _parse_instance(raw: dict, base_dir: Path, pos: int) -> EarningsInstance:
    try:
        company_id = raw["company_id"]
        call_date = dt.date.fromisoformat(raw["call_date"])
        open_d = float(raw["open_d"])
        open_d1 = float(raw["open_d1"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"instance #{pos}: {exc!r}") from exc

    def read_text(ref: str | None) -> str | None:
        if ref is None:
            return None
        path = base_dir / ref
        try:
            return path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DatasetError(f"{company_id}_{call_date}: cannot read {path}: {exc}") from exc

    numeric_raw = raw.get("numeric")
    return EarningsInstance(
        company_id=company_id,
        call_date=call_date,
        open_d=open_d,
        open_d1=open_d1,
        transcript_ref=raw.get("transcript_ref"),
        table_markdown_ref=raw.get("table_markdown_ref"),
        transcript_text=read_text(raw.get("transcript_ref")),
        table_markdown=read_text(raw.get("table_markdown_ref")),
        text_embedding_ref=raw.get("text_embedding_ref"),
        image_embedding_refs=tuple(raw.get("image_embedding_refs") or ()),
        image_refs=tuple(raw.get("image_refs") or ()),
        numeric=None if numeric_raw is None else NumericFeatureVector.from_dict(numeric_raw),
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and fully validate a dataset manifest; raises DatasetError on failure."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {path} is not valid JSON: {exc}") from exc

    base_dir = path.parent
    companies = tuple(
        CompanyRecord(
            company_id=c.get("company_id", ""),
            name=c.get("name", ""),
            fundamentals={
                int(year): {k: float(v) for k, v in vals.items() if v is not None}
                for year, vals in (c.get("fundamentals") or {}).items()
            },
        )
        for c in raw.get("companies", [])
    )
    instances = tuple(
        _parse_instance(r, base_dir, i) for i, r in enumerate(raw.get("instances", []))
    )
    return DatasetManifest(
        instances=instances,
        companies=companies,
        version=str(raw.get("version", MANIFEST_VERSION)),
        market_ref=raw.get("market_ref"),
        base_dir=base_dir,
    )


def _instance_to_json(inst: EarningsInstance) -> dict:
    return {
        "company_id": inst.company_id,
        "call_date": inst.call_date.isoformat(),
        "transcript_ref": inst.transcript_ref,
        "table_markdown_ref": inst.table_markdown_ref,
        "text_embedding_ref": inst.text_embedding_ref,
        "image_embedding_refs": list(inst.image_embedding_refs),
        "image_refs": list(inst.image_refs),
        "numeric": None if inst.numeric is None else inst.numeric.to_dict(),
        "open_d": inst.open_d,
        "open_d1": inst.open_d1,
    }


def save_manifest(
    manifest: DatasetManifest, out_dir: str | Path, filename: str = "manifest.json"
) -> Path:
    """Serialize the manifest plus per-instance raw-text files under out_dir.

    Embedding files are referenced, not copied; load(save(load(x))) round-trips.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    instances_json = []
    for inst in manifest.instances:
        rec = _instance_to_json(inst)
        for text, key in ((inst.transcript_text, "transcript_ref"),
                          (inst.table_markdown, "table_markdown_ref")):
            ref = rec[key]
            if text is None:
                continue
            if ref is None:
                suffix = "transcript.txt" if key == "transcript_ref" else "tables.md"
                ref = f"texts/{inst.instance_id}_{suffix}"
                rec[key] = ref
            target = out_dir / ref
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        instances_json.append(rec)

    payload = {
        "version": manifest.version,
        "market_ref": manifest.market_ref,
        "companies": [
            {
                "company_id": c.company_id,
                "name": c.name,
                "fundamentals": {
                    str(year): vals for year, vals in sorted(c.fundamentals.items())
                },
            }
            for c in manifest.companies
        ],
        "instances": instances_json,
    }
    target = out_dir / filename
    target.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")
    return target
