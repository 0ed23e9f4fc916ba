"""Zero-shot vision-language baseline: prompt construction, a thin HTTP JSON
client for an external multimodal completion endpoint, response parsing, and
an on-disk response cache keyed by (instance, model, prompt hash) so reruns
never re-query.

Wire contract (single adapter): POST ``{"model", "prompt", "numeric",
"images": [{"name", "b64"}]}`` -> 200 with ``{"text": "..."}``. The endpoint
credential is taken from the EARNCAST_API_TOKEN environment variable only.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import metrics
from .cascade import attach_numeric
from .dataset import DatasetManifest, EarningsInstance, SplitSpec
from .features import MarketContext, NumericFeatureVector

PROMPT_TEMPLATE = (
    "You are an expert financial analyst. Using the earnings call transcript, "
    "images from the presentation slides, technical indicators, macroeconomic "
    "variables, market data, fundamental indicators, and the opening price on "
    "the earnings release day, estimate the opening stock price of the company "
    "on the day next to the day of the earnings call. Only provide the answer "
    "as a real number. No need for any justification.\n"
    "Input Text: {input_text}\n"
    "Input Numeric: {input_numeric}\n"
    "Input Images: {input_images}"
)

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_STRICT_RE = re.compile(r"\s*[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?\s*$")

TOKEN_ENV_VAR = "EARNCAST_API_TOKEN"


class PriceParseError(ValueError):
    pass


class NoValidPredictionsError(RuntimeError):
    pass


@dataclass(frozen=True)
class VlmRequest:
    prompt_text: str
    numeric_json: dict
    image_refs: tuple[str, ...]
    endpoint: str
    model_name: str
    timeout: float = 30.0

    def __post_init__(self):
        head = PROMPT_TEMPLATE.split("{", 1)[0]
        if not self.prompt_text.startswith(head):
            raise ValueError("prompt does not begin with the analyst template")

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.prompt_text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model_name: str
    timeout: float = 30.0
    strict_parse: bool = False
    concurrency: int = 4
    cache_dir: str | Path | None = None


def build_prompt(
    instance: EarningsInstance,
    numeric: NumericFeatureVector,
    *,
    endpoint: str = "",
    model_name: str = "",
    timeout: float = 30.0,
) -> VlmRequest:
    """Fill the analyst template with this instance's text, numeric fields and
    image list. Never includes the prediction target or any post-call data."""
    text_parts = [p for p in (instance.transcript_text, instance.table_markdown) if p]
    numeric_dict = numeric.to_dict()
    prompt = PROMPT_TEMPLATE.format(
        input_text="\n\n".join(text_parts),
        input_numeric=json.dumps(numeric_dict),
        input_images=json.dumps(list(instance.image_refs)),
    )
    return VlmRequest(
        prompt_text=prompt,
        numeric_json=numeric_dict,
        image_refs=instance.image_refs,
        endpoint=endpoint,
        model_name=model_name,
        timeout=timeout,
    )


def parse_price(response_text: str, strict: bool = False) -> float:
    """First real number in the response; strict mode demands a bare number."""
    if strict:
        if not _STRICT_RE.fullmatch(response_text):
            raise PriceParseError(f"not a bare number: {response_text[:80]!r}")
        value = float(response_text.strip())
    else:
        match = _NUMBER_RE.search(response_text)
        if match is None:
            raise PriceParseError(f"no number found in response: {response_text[:80]!r}")
        value = float(match.group())
    if not (value == value and abs(value) != float("inf")):
        raise PriceParseError(f"non-finite value parsed from {response_text[:80]!r}")
    return value


def _default_post(url: str, payload: dict, timeout: float) -> str:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(TOKEN_ENV_VAR)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    resp = requests.post(url, json=payload, timeout=timeout, headers=headers)
    resp.raise_for_status()
    return resp.json()["text"]


class VlmClient:
    """Cached, retrying client. The cache layout is
    ``<cache_dir>/<model>/<instance_id>.json``; a hit requires a matching
    prompt hash. Writes are temp-file-then-rename, safe under concurrency."""

    def __init__(self, config: EndpointConfig, post_fn=None):
        self.config = config
        self.post_fn = post_fn or _default_post
        self.requests_sent = 0
        self._lock = threading.Lock()

    def _cache_path(self, instance_id: str) -> Path | None:
        if self.config.cache_dir is None:
            return None
        safe_model = re.sub(r"[^A-Za-z0-9._-]", "_", self.config.model_name) or "model"
        return Path(self.config.cache_dir) / safe_model / f"{instance_id}.json"

    def _cache_read(self, path: Path | None, prompt_hash: str) -> str | None:
        if path is None or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        if entry.get("prompt_hash") != prompt_hash:
            return None
        return entry.get("response_text")

    def _cache_write(self, path: Path | None, prompt_hash: str, response_text: str,
                     parsed: float | None) -> None:
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "prompt_hash": prompt_hash,
            "response_text": response_text,
            "parsed": parsed,
            "model": self.config.model_name,
            "timestamp": time.time(),
        }
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps(entry, indent=1), encoding="utf-8")
        os.replace(tmp, path)

    def _payload(self, request: VlmRequest, base_dir: Path | None) -> dict:
        images = []
        for ref in request.image_refs:
            path = Path(base_dir) / ref if base_dir is not None else Path(ref)
            try:
                images.append(
                    {"name": Path(ref).name,
                     "b64": base64.b64encode(path.read_bytes()).decode("ascii")}
                )
            except OSError:
                images.append({"name": Path(ref).name, "b64": ""})
        return {
            "model": request.model_name,
            "prompt": request.prompt_text,
            "numeric": request.numeric_json,
            "images": images,
        }

    def complete(self, instance_id: str, request: VlmRequest,
                 base_dir: Path | None = None) -> str:
        cache_path = self._cache_path(instance_id)
        cached = self._cache_read(cache_path, request.prompt_hash)
        if cached is not None:
            return cached
        payload = self._payload(request, base_dir)
        last_err = None
        for _ in range(2):  # one retry on transport failure
            with self._lock:
                self.requests_sent += 1
            try:
                text = self.post_fn(self.config.url, payload, request.timeout)
                break
            except (requests.RequestException, OSError, KeyError, ValueError) as exc:
                last_err = exc
        else:
            raise ConnectionError(f"{instance_id}: endpoint failed twice: {last_err}")
        parsed = None
        try:
            parsed = parse_price(text, self.config.strict_parse)
        except PriceParseError:
            pass
        self._cache_write(cache_path, request.prompt_hash, text, parsed)
        return text


@dataclass
class BaselineResult:
    metrics: metrics.MetricSet
    n_requested: int
    n_skipped: int
    per_instance: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics.to_dict(),
            "n_requested": self.n_requested,
            "n_skipped": self.n_skipped,
            "per_instance": self.per_instance,
        }


def run_baseline(
    manifest: DatasetManifest,
    split: SplitSpec,
    config: EndpointConfig,
    *,
    post_fn=None,
    market_ctx: MarketContext | None = None,
    log_path: str | Path | None = None,
) -> BaselineResult:
    """Query the endpoint for every test instance and score the answers.

    Instances whose transport fails twice or whose response does not parse are
    skipped, counted, and reported; metrics cover the parseable remainder.
    """
    instances = attach_numeric(manifest, market_ctx)
    test = [i for i in instances if i.call_date > split.val_end]
    client = VlmClient(config, post_fn=post_fn)

    def one(inst: EarningsInstance):
        request = build_prompt(
            inst,
            inst.numeric,
            endpoint=config.url,
            model_name=config.model_name,
            timeout=config.timeout,
        )
        try:
            text = client.complete(inst.instance_id, request, base_dir=manifest.base_dir)
        except ConnectionError as exc:
            return inst, None, f"transport: {exc}"
        try:
            return inst, parse_price(text, config.strict_parse), None
        except PriceParseError as exc:
            return inst, None, f"parse: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
        outcomes = list(pool.map(one, test))

    rows, preds, targets = [], [], []
    n_skipped = 0
    for inst, value, err in outcomes:
        entry = {
            "instance_id": inst.instance_id,
            "prediction": value,
            "target": inst.open_d1,
            "error": err,
        }
        if value is not None:
            entry["relative_error"] = abs(value - inst.open_d1) / inst.open_d1
            preds.append(value)
            targets.append(inst.open_d1)
        else:
            n_skipped += 1
        rows.append(entry)

    if log_path is not None:
        Path(log_path).write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n", encoding="utf-8"
        )
    if not preds:
        raise NoValidPredictionsError(f"no valid predictions ({n_skipped} instances skipped)")
    mset = metrics.regression_metrics(preds, targets)
    return BaselineResult(
        metrics=mset, n_requested=len(test), n_skipped=n_skipped, per_instance=rows
    )
