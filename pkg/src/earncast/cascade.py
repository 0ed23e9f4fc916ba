"""Cascaded two-stage prediction over the five modality variants.

Stage 1 trains direction classifiers on 128-dim truncated embeddings (boosted
trees for text, random forest for images); stage 2 trains the feed-forward
regressor on numeric features plus, depending on the variant, raw embeddings
or stage-1 probabilities. Stage-1 probabilities for stage-2 TRAINING rows are
produced out-of-fold (5-fold within the training split) so no direction label
leaks into the regressor; validation and test rows use the full stage-1
models.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .dataset import DatasetManifest, DatasetError, EarningsInstance, SplitSpec, direction_label
from .embfile import MODALITY_IMAGE, MODALITY_TEXT, EmbeddingFormatError, read_embeddings
from .features import (
    DEFAULT_EMBED_DIM,
    NUMERIC_SCHEMA,
    Embedding,
    MarketContext,
    assemble_numeric,
    mean_pool,
    truncate_matryoshka,
)
from .models import (
    GbtClassifier,
    MlpRegressor,
    RfClassifier,
    TrainConfig,
    train_gbt,
    train_mlp,
    train_rf,
)

OOF_FOLDS = 5


class Variant(enum.Enum):
    """The five modality combinations of the ablation."""

    N = "N"
    N_T_EM = "N+T(Em)"
    N_T_P = "N+T(P)"
    N_T_EM_I_EM = "N+T(Em)+I(Em)"
    N_T_P_I_P = "N+T(P)+I(P)"

    @property
    def uses_text_embedding(self) -> bool:
        return self in (Variant.N_T_EM, Variant.N_T_EM_I_EM)

    @property
    def uses_image_embedding(self) -> bool:
        return self is Variant.N_T_EM_I_EM

    @property
    def needs_text_classifier(self) -> bool:
        return self in (Variant.N_T_P, Variant.N_T_P_I_P)

    @property
    def needs_image_classifier(self) -> bool:
        return self is Variant.N_T_P_I_P

    @classmethod
    def parse(cls, text: str) -> "Variant":
        for v in cls:
            if text == v.value or text.upper() == v.name:
                return v
        raise ValueError(f"unknown variant {text!r} (expected one of {[v.name for v in cls]})")


# Row labels for the report table, in ablation order.
MODEL_IDS = {
    Variant.N: "DL-1",
    Variant.N_T_EM: "DL-2",
    Variant.N_T_P: "DL-3",
    Variant.N_T_EM_I_EM: "DL-4",
    Variant.N_T_P_I_P: "DL-5",
}


class CascadeError(Exception):
    pass


def child_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class DataAccessLog:
    """Which instance supplied data for which purpose; purposes containing
    '_fit_' are parameter-shaping and must stay inside the training split."""

    records: list = field(default_factory=list)

    def record(self, purpose: str, instance_id: str) -> None:
        self.records.append((purpose, instance_id))

    def ids(self, *purposes: str) -> set:
        return {i for p, i in self.records if p in purposes}

    def fit_ids(self) -> set:
        return {i for p, i in self.records if "_fit_" in p}


class EmbeddingStore:
    """Loads, pools and truncates instance embeddings from disk, with caching.

    Image rows are mean-pooled at native dimension first, then truncated once.
    """

    def __init__(self, base_dir: str | Path | None, embed_dim: int = DEFAULT_EMBED_DIM):
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self.embed_dim = embed_dim
        self._cache: dict[tuple[str, str], np.ndarray | None] = {}

    def _resolve(self, ref: str) -> Path:
        return self.base_dir / ref if self.base_dir is not None else Path(ref)

    def text_vector(self, instance: EarningsInstance) -> np.ndarray | None:
        key = (instance.instance_id, "text")
        if key not in self._cache:
            self._cache[key] = self._load_text(instance)
        return self._cache[key]

    def image_vector(self, instance: EarningsInstance) -> np.ndarray | None:
        key = (instance.instance_id, "image")
        if key not in self._cache:
            self._cache[key] = self._load_image(instance)
        return self._cache[key]

    def _load_text(self, instance) -> np.ndarray | None:
        if instance.text_embedding_ref is None:
            return None
        rows, modality = read_embeddings(self._resolve(instance.text_embedding_ref))
        if modality != MODALITY_TEXT:
            raise EmbeddingFormatError(
                f"{instance.instance_id}: text ref contains modality {modality}"
            )
        emb = (
            Embedding(rows[0], modality="text")
            if len(rows) == 1
            else mean_pool([Embedding(r, modality="text") for r in rows])
        )
        return truncate_matryoshka(emb, self.embed_dim).values

    def _load_image(self, instance) -> np.ndarray | None:
        if not instance.image_embedding_refs:
            return None
        embs = []
        for ref in instance.image_embedding_refs:
            rows, modality = read_embeddings(self._resolve(ref))
            if modality != MODALITY_IMAGE:
                raise EmbeddingFormatError(
                    f"{instance.instance_id}: image ref contains modality {modality}"
                )
            embs.extend(Embedding(r, modality="image") for r in rows)
        return truncate_matryoshka(mean_pool(embs), self.embed_dim).values


@dataclass
class FeatureSchema:
    """Column layout of the stage-2 design matrix for one variant."""

    columns: tuple[str, ...]
    numeric_impute: np.ndarray  # training-split medians for the numeric block

    @property
    def width(self) -> int:
        return len(self.columns)


def schema_columns(variant: Variant, embed_dim: int) -> tuple[str, ...]:
    cols = list(NUMERIC_SCHEMA)
    if variant.uses_text_embedding:
        cols += [f"text_em_{i:03d}" for i in range(embed_dim)] + ["text_missing"]
    if variant.needs_text_classifier:
        cols += ["text_prob"]
    if variant.uses_image_embedding:
        cols += [f"image_em_{i:03d}" for i in range(embed_dim)] + ["image_missing"]
    if variant.needs_image_classifier:
        cols += ["image_prob"]
    return tuple(cols)


@dataclass
class Stage1Result:
    model: GbtClassifier | RfClassifier
    oof_prob: dict  # instance_id -> out-of-fold probability (training rows)
    val_f1: float | None
    val_n: int


@dataclass
class CascadeModel:
    variant: Variant
    regressor: MlpRegressor
    schema: FeatureSchema
    embed_dim: int = DEFAULT_EMBED_DIM
    text_classifier: GbtClassifier | None = None
    image_classifier: RfClassifier | None = None
    stage1_val_f1: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.text_classifier is not None) != self.variant.needs_text_classifier:
            raise CascadeError(f"{self.variant}: text classifier presence mismatch")
        if (self.image_classifier is not None) != self.variant.needs_image_classifier:
            raise CascadeError(f"{self.variant}: image classifier presence mismatch")
        if self.schema.width != self.regressor.n_features:
            raise CascadeError(
                f"schema width {self.schema.width} != regressor input {self.regressor.n_features}"
            )


def _stage1_probability(classifier, vector: np.ndarray | None) -> float:
    """Serving-path probability; instances missing the modality get the
    classifier's training prior (an uninformative fill, no flag column)."""
    if vector is None:
        return classifier.train_prior
    return float(classifier.predict_proba(vector.reshape(1, -1))[0])


def build_features(
    instance: EarningsInstance,
    variant: Variant,
    stage1_text: GbtClassifier | None = None,
    stage1_image: RfClassifier | None = None,
    *,
    store: EmbeddingStore,
    prob_override: tuple[float | None, float | None] = (None, None),
) -> np.ndarray:
    """One stage-2 feature row (numeric markers left as NaN; impute after)."""
    if instance.numeric is None:
        raise CascadeError(f"{instance.instance_id}: numeric features not assembled")
    parts = [instance.numeric.values]
    dim = store.embed_dim

    if variant.uses_text_embedding:
        vec = store.text_vector(instance)
        if vec is None:
            parts.append(np.zeros(dim))
            parts.append([1.0])
        else:
            parts.append(vec)
            parts.append([0.0])
    if variant.needs_text_classifier:
        if stage1_text is None:
            raise CascadeError(f"{variant} requires a text classifier")
        p = prob_override[0]
        parts.append([p if p is not None else _stage1_probability(stage1_text, store.text_vector(instance))])
    if variant.uses_image_embedding:
        vec = store.image_vector(instance)
        if vec is None:
            parts.append(np.zeros(dim))
            parts.append([1.0])
        else:
            parts.append(vec)
            parts.append([0.0])
    if variant.needs_image_classifier:
        if stage1_image is None:
            raise CascadeError(f"{variant} requires an image classifier")
        p = prob_override[1]
        parts.append([p if p is not None else _stage1_probability(stage1_image, store.image_vector(instance))])
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def _impute(X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    out = X.copy()
    k = len(NUMERIC_SCHEMA)
    block = out[:, :k]
    nan_rows, nan_cols = np.where(np.isnan(block))
    block[nan_rows, nan_cols] = schema.numeric_impute[nan_cols]
    return out


def _numeric_medians(instances) -> np.ndarray:
    mat = np.stack([i.numeric.values for i in instances])
    with np.errstate(all="ignore"):
        med = np.nanmedian(mat, axis=0)
    return np.where(np.isfinite(med), med, 0.0)


def _oof_probabilities(X, y, trainer, base_seed: int, cfg: TrainConfig) -> np.ndarray:
    """Out-of-fold probabilities over the training rows (deterministic folds)."""
    n = len(y)
    rng = np.random.default_rng(child_seed(base_seed, "oof"))
    order = rng.permutation(n)
    folds = np.array_split(order, min(OOF_FOLDS, n))
    out = np.full(n, np.nan)
    for i, fold in enumerate(folds):
        rest = np.setdiff1d(order, fold)
        if rest.size < 2 or len(np.unique(y[rest])) < 2:
            out[fold] = float(y[rest].mean()) if rest.size else float(y.mean())
            continue
        model = trainer(X[rest], y[rest], cfg.with_seed(child_seed(base_seed, f"oof{i}")))
        out[fold] = model.predict_proba(X[fold])
    return out


def _fit_stage1(
    train, val, trainer, vector_of, cfg: TrainConfig, seed_tag: str, access_log: DataAccessLog | None
) -> Stage1Result:
    rows = [(inst, vector_of(inst)) for inst in train]
    rows = [(inst, v) for inst, v in rows if v is not None]
    if len(rows) < 2:
        raise CascadeError(f"not enough instances with {seed_tag} data to train stage 1")
    X = np.stack([v for _, v in rows])
    y = np.array([direction_label(inst.open_d, inst.open_d1) for inst, _ in rows], dtype=np.float64)
    if access_log is not None:
        for inst, _ in rows:
            access_log.record("stage1_fit_label", inst.instance_id)

    seed = child_seed(cfg.seed, seed_tag)
    model = trainer(X, y, cfg.with_seed(seed))
    oof = _oof_probabilities(X, y, trainer, seed, cfg)
    oof_prob = {inst.instance_id: float(p) for (inst, _), p in zip(rows, oof)}

    val_rows = [(inst, vector_of(inst)) for inst in val]
    val_rows = [(inst, v) for inst, v in val_rows if v is not None]
    val_f1, val_n = None, len(val_rows)
    if val_rows:
        Xv = np.stack([v for _, v in val_rows])
        yv = np.array([direction_label(i.open_d, i.open_d1) for i, _ in val_rows])
        if access_log is not None:
            for inst, _ in val_rows:
                access_log.record("stage1_eval_label", inst.instance_id)
        pred = (model.predict_proba(Xv) >= metrics.CLASSIFICATION_THRESHOLD).astype(int)
        val_f1 = metrics.f1_binary(pred, yv)
    return Stage1Result(model=model, oof_prob=oof_prob, val_f1=val_f1, val_n=val_n)


def fit_cascade(
    train: list[EarningsInstance],
    val: list[EarningsInstance],
    variant: Variant,
    cfg: TrainConfig,
    *,
    base_dir: str | Path | None = None,
    store: EmbeddingStore | None = None,
    embed_dim: int = DEFAULT_EMBED_DIM,
    access_log: DataAccessLog | None = None,
) -> CascadeModel:
    """Train stage-1 classifiers (when the variant needs them) and the
    stage-2 regressor from scratch on the variant's feature schema."""
    if not train:
        raise CascadeError("empty training split")
    if store is None:
        store = EmbeddingStore(base_dir, embed_dim)

    text_clf = image_clf = None
    stage1_f1: dict = {}
    text_oof: dict = {}
    image_oof: dict = {}
    if variant.needs_text_classifier:
        res = _fit_stage1(train, val, train_gbt, store.text_vector, cfg, "stage1-text", access_log)
        text_clf, text_oof = res.model, res.oof_prob
        stage1_f1["text"] = {"f1": res.val_f1, "n_val": res.val_n}
    if variant.needs_image_classifier:
        res = _fit_stage1(train, val, train_rf, store.image_vector, cfg, "stage1-image", access_log)
        image_clf, image_oof = res.model, res.oof_prob
        stage1_f1["image"] = {"f1": res.val_f1, "n_val": res.val_n}

    def training_row(inst):
        # training rows take out-of-fold probabilities; rows whose modality is
        # missing fall back to the stage-1 training prior
        override = (
            text_oof.get(inst.instance_id, text_clf.train_prior if text_clf else None),
            image_oof.get(inst.instance_id, image_clf.train_prior if image_clf else None),
        )
        return build_features(
            inst, variant, text_clf, image_clf, store=store, prob_override=override
        )

    X_train = np.stack([training_row(inst) for inst in train])
    y_train = np.array([inst.open_d1 for inst in train])
    if access_log is not None:
        for inst in train:
            access_log.record("stage2_fit_target", inst.instance_id)

    schema = FeatureSchema(
        columns=schema_columns(variant, store.embed_dim),
        numeric_impute=_numeric_medians(train),
    )
    X_train = _impute(X_train, schema)

    X_val = y_val = None
    if val:
        X_val = np.stack(
            [build_features(i, variant, text_clf, image_clf, store=store) for i in val]
        )
        X_val = _impute(X_val, schema)
        y_val = np.array([inst.open_d1 for inst in val])
        if access_log is not None:
            for inst in val:
                access_log.record("earlystop_eval_target", inst.instance_id)

    regressor = train_mlp(X_train, y_train, cfg, X_val, y_val)
    return CascadeModel(
        variant=variant,
        regressor=regressor,
        schema=schema,
        embed_dim=store.embed_dim,
        text_classifier=text_clf,
        image_classifier=image_clf,
        stage1_val_f1=stage1_f1,
    )


def predict(
    model: CascadeModel,
    instance: EarningsInstance,
    *,
    store: EmbeddingStore | None = None,
    base_dir: str | Path | None = None,
) -> float:
    """Next-day opening-price estimate for one instance."""
    if store is None:
        store = EmbeddingStore(base_dir, model.embed_dim)
    row = build_features(
        instance, model.variant, model.text_classifier, model.image_classifier, store=store
    )
    row = _impute(row.reshape(1, -1), model.schema)
    return float(model.regressor.predict(row)[0])


def evaluate(
    model: CascadeModel,
    instances: list[EarningsInstance],
    *,
    store: EmbeddingStore,
    access_log: DataAccessLog | None = None,
) -> tuple[metrics.MetricSet, np.ndarray]:
    if not instances:
        raise CascadeError("cannot evaluate on an empty split")
    rows = np.stack(
        [
            build_features(i, model.variant, model.text_classifier, model.image_classifier, store=store)
            for i in instances
        ]
    )
    rows = _impute(rows, model.schema)
    preds = model.regressor.predict(rows)
    targets = np.array([inst.open_d1 for inst in instances])
    if access_log is not None:
        for inst in instances:
            access_log.record("test_eval_target", inst.instance_id)
    return metrics.regression_metrics(preds, targets), preds


# ---------------------------------------------------------------------------
# ablation harness


@dataclass
class VariantResult:
    model_id: str
    variant: Variant
    mae: float
    rmse: float
    mape: float
    n_test: int
    stage1: dict

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "modalities": self.variant.value,
            "variant": self.variant.name,
            "mae": self.mae,
            "rmse": self.rmse,
            "mape": self.mape,
            "n_test": self.n_test,
            "stage1": self.stage1,
        }


@dataclass
class ExperimentReport:
    rows: list[VariantResult]
    split: dict
    config: dict
    models: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "split": self.split,
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return render_report_table(self.to_dict())

    def result(self, variant: Variant) -> VariantResult:
        for row in self.rows:
            if row.variant is variant:
                return row
        raise KeyError(variant)


def render_report_table(report: dict) -> str:
    """Aligned text table with the ablation-table columns."""
    header = ("Model", "Modalities", "MAE", "RMSE", "MAPE")
    body = [
        (
            r["model"],
            r["modalities"],
            f"{r['mae']:.3f}",
            f"{r['rmse']:.3f}",
            f"{r['mape']:.3f}",
        )
        for r in report["rows"]
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())

    split = report.get("split", {})
    if split:
        lines.append("")
        counts = split.get("counts", {})
        lines.append(
            f"split: train<={split.get('train_end')} val<={split.get('val_end')} "
            f"(n={counts.get('train')}/{counts.get('val')}/{counts.get('test')})"
        )
    for r in report["rows"]:
        for modality, info in sorted((r.get("stage1") or {}).items()):
            if info.get("f1") is not None:
                lines.append(
                    f"stage-1 {modality} classifier ({r['model']}): "
                    f"validation F1 {info['f1']:.3f} (n={info['n_val']})"
                )
    return "\n".join(lines) + "\n"


def attach_numeric(
    manifest: DatasetManifest, ctx: MarketContext | None = None
) -> list[EarningsInstance]:
    """Instances with numeric vectors assembled (kept when already present)."""
    if any(inst.numeric is None for inst in manifest.instances):
        if ctx is None:
            ctx = MarketContext.for_manifest(manifest)
        return [
            inst if inst.numeric is not None else inst.with_numeric(assemble_numeric(inst, ctx))
            for inst in manifest.instances
        ]
    return list(manifest.instances)


def run_ablation(
    manifest: DatasetManifest,
    split: SplitSpec = SplitSpec(),
    cfg: TrainConfig = TrainConfig(),
    *,
    variants: list[Variant] | None = None,
    embed_dim: int = DEFAULT_EMBED_DIM,
    access_log: DataAccessLog | None = None,
    market_ctx: MarketContext | None = None,
) -> ExperimentReport:
    """Train and evaluate the selected variants (default: all five) on one
    temporal split; identical seeds give byte-identical reports."""
    variants = list(Variant) if variants is None else variants
    instances = attach_numeric(manifest, market_ctx)

    train, val, test = [], [], []
    for inst in instances:
        if inst.call_date <= split.train_end:
            train.append(inst)
        elif inst.call_date <= split.val_end:
            val.append(inst)
        else:
            test.append(inst)
    if not train or not test:
        raise DatasetError(
            f"split leaves train/test empty (train={len(train)}, val={len(val)}, test={len(test)})"
        )

    store = EmbeddingStore(manifest.base_dir, embed_dim)
    rows: list[VariantResult] = []
    models: dict[Variant, CascadeModel] = {}
    for variant in variants:
        model = fit_cascade(
            train, val, variant, cfg, store=store, embed_dim=embed_dim, access_log=access_log
        )
        mset, _ = evaluate(model, test, store=store, access_log=access_log)
        models[variant] = model
        rows.append(
            VariantResult(
                model_id=MODEL_IDS[variant],
                variant=variant,
                mae=mset.mae,
                rmse=mset.rmse,
                mape=mset.mape,
                n_test=mset.n,
                stage1=model.stage1_val_f1,
            )
        )

    report = ExperimentReport(
        rows=rows,
        split={
            "train_end": split.train_end.isoformat(),
            "val_end": split.val_end.isoformat(),
            "counts": {"train": len(train), "val": len(val), "test": len(test)},
        },
        config={"seed": cfg.seed, "embed_dim": embed_dim, "train": cfg.to_dict()},
        models=models,
    )
    return report
