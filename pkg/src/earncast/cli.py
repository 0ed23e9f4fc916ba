"""Operator CLI: dataset validation, training runs, synthetic data, the
zero-shot VLM baseline, and report rendering.

Exit codes are a stable scripting contract: 0 success, 1 usage error, 2 data
error, 3 training/runtime error. Flags override config-file values, which
override built-in defaults.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import cascade, dataset, llm, synth
from .embfile import EmbeddingFormatError, read_embeddings
from .features import FeatureError, MarketContext
from .models import ModelError, TrainConfig, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        raise UsageError(message)


@dataclass
class RunConfig:
    manifest: Path
    out_dir: Path
    seed: int = 7
    variants: list[cascade.Variant] | None = None  # None -> all five
    train_end: dt.date = dataset.DEFAULT_TRAIN_END
    val_end: dt.date = dataset.DEFAULT_VAL_END
    embed_dim: int = 128
    train: TrainConfig | None = None

    def resolved_train(self) -> TrainConfig:
        base = self.train if self.train is not None else TrainConfig()
        return base.with_seed(self.seed)

    def split(self) -> dataset.SplitSpec:
        return dataset.SplitSpec(train_end=self.train_end, val_end=self.val_end)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc


def _merge_run_config(args) -> RunConfig:
    file_cfg = _load_config_file(args.config)

    def pick(flag_value, file_key, default):
        if flag_value is not None:
            return flag_value
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    manifest = pick(args.manifest, "manifest", None)
    out_dir = pick(args.out, "out_dir", None)
    if manifest is None or out_dir is None:
        raise UsageError("run requires --manifest and --out (flag or config file)")

    variant = pick(args.variant, "variant", "all")
    if variant == "all":
        variants = None
    else:
        try:
            variants = [cascade.Variant.parse(variant)]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    train_cfg = TrainConfig.from_dict(file_cfg["train"]) if "train" in file_cfg else None
    return RunConfig(
        manifest=Path(manifest),
        out_dir=Path(out_dir),
        seed=int(pick(args.seed, "seed", 7)),
        variants=variants,
        train_end=dt.date.fromisoformat(str(pick(args.train_end, "train_end", dataset.DEFAULT_TRAIN_END.isoformat()))),
        val_end=dt.date.fromisoformat(str(pick(args.val_end, "val_end", dataset.DEFAULT_VAL_END.isoformat()))),
        embed_dim=int(pick(args.embed_dim, "embed_dim", 128)),
        train=train_cfg,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    problems = []
    warnings = []

    for inst in manifest.instances:
        refs = list(inst.image_embedding_refs)
        if inst.text_embedding_ref:
            refs.append(inst.text_embedding_ref)
        for ref in refs:
            path = manifest.resolve(ref)
            try:
                read_embeddings(path)
            except (OSError, EmbeddingFormatError) as exc:
                problems.append(f"{inst.instance_id}: {exc}")

    if manifest.market_ref is not None:
        try:
            ctx = MarketContext.for_manifest(manifest)
            for inst in manifest.instances:
                bars = ctx.company_prices.get(inst.company_id, ())
                if not bars or bars[-1].date < inst.call_date:
                    warnings.append(
                        f"{inst.instance_id}: call date beyond available price data (lookahead risk)"
                    )
        except (OSError, FeatureError, dataset.DatasetError) as exc:
            problems.append(f"market data: {exc}")

    for line in warnings:
        print(f"warning: {line}")
    for line in problems:
        print(f"error: {line}", file=sys.stderr)
    if problems:
        return EXIT_DATA
    print(
        f"OK: {len(manifest.instances)} instances, {len(manifest.companies)} companies, "
        f"version {manifest.version}"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _merge_run_config(args)
    manifest = dataset.load_manifest(cfg.manifest)
    report = cascade.run_ablation(
        manifest,
        cfg.split(),
        cfg.resolved_train(),
        variants=cfg.variants,
        embed_dim=cfg.embed_dim,
    )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    for variant, model in report.models.items():
        mdir = out / "models" / variant.name
        mdir.mkdir(parents=True, exist_ok=True)
        save_model(model.regressor, mdir / "regressor.ecm")
        if model.text_classifier is not None:
            save_model(model.text_classifier, mdir / "text_classifier.ecm")
        if model.image_classifier is not None:
            save_model(model.image_classifier, mdir / "image_classifier.ecm")
        (mdir / "schema.json").write_text(
            json.dumps(
                {
                    "columns": list(model.schema.columns),
                    "numeric_impute": list(model.schema.numeric_impute),
                    "embed_dim": model.embed_dim,
                },
                indent=1,
            ),
            encoding="utf-8",
        )
    print(report.to_text(), end="")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        cfg = synth.SynthConfig(
            n_instances=args.n,
            seed=args.seed,
            native_dim=args.dim,
            signal_agreement=args.agreement,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    manifest_path, stats = synth.generate(cfg, args.out)
    print(f"wrote {manifest_path}")
    print(stats.summary())
    return EXIT_OK


def cmd_llm_baseline(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    split = dataset.SplitSpec(
        train_end=dt.date.fromisoformat(args.train_end),
        val_end=dt.date.fromisoformat(args.val_end),
    )
    config = llm.EndpointConfig(
        url=args.endpoint,
        model_name=args.model,
        timeout=args.timeout,
        strict_parse=args.strict,
        concurrency=args.concurrency,
        cache_dir=args.cache,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = llm.run_baseline(manifest, split, config, log_path=out_dir / "responses.jsonl")
    (out_dir / "baseline.json").write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    m = result.metrics
    print(
        f"{args.model}: MAE {m.mae:.3f}  RMSE {m.rmse:.3f}  MAPE {m.mape:.3f} "
        f"(n={m.n}, skipped={result.n_skipped})"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise dataset.DatasetError(f"cannot read report {args.report}: {exc}") from exc
    text = cascade.render_report_table(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="earncast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load and deep-check a dataset manifest")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="train and evaluate ablation variants")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", help="variant name (e.g. N, N_T_P) or 'all'")
    p.add_argument("--train-end", dest="train_end")
    p.add_argument("--val-end", dest="val_end")
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--config", help="JSON config file; flags take precedence")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known signal")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--agreement", type=float, default=0.8)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("llm-baseline", help="zero-shot VLM baseline over the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--train-end", dest="train_end", default=dataset.DEFAULT_TRAIN_END.isoformat())
    p.add_argument("--val-end", dest="val_end", default=dataset.DEFAULT_VAL_END.isoformat())
    p.set_defaults(fn=cmd_llm_baseline)

    p = sub.add_parser("report", help="render a report.json as an aligned table")
    p.add_argument("report")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataset.DatasetError, EmbeddingFormatError, FeatureError,
            llm.NoValidPredictionsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, cascade.CascadeError, ConnectionError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
