"""End-to-end stages shared by the CLI subcommands and the ablation grid."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import Catalog, tokenize_queries
from .config import RunConfig
from .corpus import Corpus, build_training_pairs, load_brand_list, load_corpus
from .encoder import EmbeddingModel, Variant, load_model_with_state, save_model
from .errors import ConfigError
from .index import (Rescoring, TermIndex, build_index, calibrate_threshold, collect_query_vocab, retrieve,
                    save_index)
from .metrics import EquivalenceMap, EvalReport, evaluate, judgments_from_labels
from .tokenizer import TokenizerKind, Vocabulary, save_vocab, suggest_brand_terms, train_tokenizer
from .trainer import TrainConfig, train

logger = logging.getLogger(__name__)

DEFAULT_AUTO_BRANDS = 50


def artifact_paths(config: RunConfig) -> dict[str, Path]:
    out = config.output_dir
    paths = {
        "vocab": out / "vocab.txt",
        "model": out / "model.bin",
        "train_log": out / "train_log.tsv",
        "index": out / "index.bin",
        "ablation": out / "ablation.tsv",
    }
    for key in ("vocab", "model", "index"):
        explicit = config.values.get("artifacts", {}).get(key)
        if explicit:
            paths[key] = config.path("artifacts", key)
    return paths


def provenance(config: RunConfig) -> dict:
    return {"build_version": __version__, "run_config": config.to_dict()}


def load_inputs(config: RunConfig) -> Corpus:
    paths = [config.path("data", k) for k in ("products", "queries", "labels")]
    if any(p is None for p in paths):
        raise ConfigError("data.products, data.queries and data.labels must be set")
    return Corpus(*load_corpus(*paths))


def raw_titles(products_path) -> list[str]:
    with open(products_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = [h.strip().lower() for h in next(reader)]
        col = header.index("product_name") if "product_name" in header else header.index("title")
        return [row[col] for row in reader if len(row) > col]


def is_mt(config: RunConfig) -> bool:
    mode = config.values["tokenizer"].get("mt", "auto").strip().lower()
    if mode == "auto":
        return config.path("data", "brands") is not None or config.get_int("data", "auto_brands") > 0
    return config.get_bool("tokenizer", "mt")


def special_terms(config: RunConfig) -> list[str]:
    if not is_mt(config):
        return []
    brands = config.path("data", "brands")
    if brands is not None:
        return load_brand_list(brands)
    n = config.get_int("data", "auto_brands") or DEFAULT_AUTO_BRANDS
    return suggest_brand_terms(raw_titles(config.path("data", "products")), top_n=n)


def tokenizer_corpus(config: RunConfig, corpus: Corpus) -> list[str]:
    title_only = config.get_bool("data", "title_only")
    texts = [p.text(title_only) for p in sorted(corpus.products, key=lambda p: p.product_id)]
    texts += [q.text for q in sorted(corpus.queries, key=lambda q: q.query_id)]
    return texts


def stage_tokenizer(config: RunConfig, corpus: Corpus) -> Vocabulary:
    kind = config.get_enum("tokenizer", "kind", TokenizerKind)
    kwargs = {}
    if kind is TokenizerKind.UNIGRAM:
        kwargs = {"seed_multiplier": config.get_float("tokenizer", "seed_multiplier"),
                  "prune_fraction": config.get_float("tokenizer", "prune_fraction")}
    terms = special_terms(config)
    vocab = train_tokenizer(kind, tokenizer_corpus(config, corpus), config.get_int("tokenizer", "vocab_size"),
                            frozenset(terms), **kwargs)
    vocab.meta = provenance(config)
    return vocab


def train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        margin=config.get_float("train", "margin"),
        learning_rate=config.get_float("train", "learning_rate"),
        batch_size=config.get_int("train", "batch_size"),
        epochs=config.get_int("train", "epochs"),
        seed=config.get_int("run", "seed"),
        optimizer=config.get("train", "optimizer").lower(),
        beta1=config.get_float("train", "beta1"),
        beta2=config.get_float("train", "beta2"),
        eps=config.get_float("train", "eps"),
    )


def make_catalog(config: RunConfig, corpus: Corpus, vocab: Vocabulary) -> Catalog:
    return Catalog(corpus.products, vocab, title_only=config.get_bool("data", "title_only"))


def stage_encoder(config: RunConfig, corpus: Corpus, vocab: Vocabulary, catalog: Catalog | None = None,
                  log_path=None):
    """Returns ``(model, stats, optimizer_state)``."""
    seed = config.get_int("run", "seed")
    init_from = config.values.get("model", {}).get("init_from", "").strip()
    state = None
    if init_from:
        model, state = load_model_with_state(config.path("model", "init_from"))
        model.check_vocab(vocab)
    else:
        model = EmbeddingModel.initialize(config.get_enum("model", "variant", Variant, str.upper), vocab,
                                          config.get_int("model", "dim"), seed)
    tc = train_config(config)
    stats = None
    if tc.epochs > 0:
        catalog = catalog or make_catalog(config, corpus, vocab)
        pairs = build_training_pairs(corpus.labels, seed)
        model, stats = train(model, pairs, catalog, tokenize_queries(corpus.queries, vocab), vocab, tc,
                             log_path=log_path, optimizer_state=state)
        state = stats.optimizer_state
    model.meta = provenance(config)
    return model, stats, state


@dataclass
class IndexInfo:
    gamma: float
    calibrated: bool
    score_mean: float | None
    score_std: float | None
    query_vocab_size: int


def resolve_gamma(config: RunConfig, model, catalog, query_vocab) -> IndexInfo:
    raw = config.get("index", "gamma").strip().lower()
    if raw == "calibrate":
        gamma, stats = calibrate_threshold(model, catalog, query_vocab, config.get_float("index", "target_fraction"))
        return IndexInfo(gamma, True, stats.mean, stats.std, len(query_vocab))
    try:
        gamma = float(raw)
    except ValueError:
        raise ConfigError(f"index.gamma must be a number or 'calibrate', got {raw!r}") from None
    return IndexInfo(gamma, False, None, None, len(query_vocab))


def stage_index(config: RunConfig, corpus: Corpus, vocab: Vocabulary, model: EmbeddingModel,
                catalog: Catalog | None = None) -> tuple[TermIndex, IndexInfo]:
    catalog = catalog or make_catalog(config, corpus, vocab)
    query_vocab = collect_query_vocab(corpus.queries, vocab)
    info = resolve_gamma(config, model, catalog, query_vocab)
    meta = provenance(config)
    meta["calibrated"] = info.calibrated
    index = build_index(model, vocab, catalog, query_vocab, info.gamma, meta=meta)
    return index, info


def rescoring_modes(config: RunConfig) -> list[Rescoring]:
    raw = config.get("eval", "rescoring").strip().lower()
    if raw == "both":
        return [Rescoring.ACCUMULATE, Rescoring.EXACT]
    return [config.get_enum("eval", "rescoring", Rescoring)]


def eval_ks(config: RunConfig) -> list[int]:
    try:
        ks = sorted({int(k) for k in config.get_list("eval", "ks")})
    except ValueError:
        raise ConfigError("eval.ks must be a comma-separated list of integers") from None
    if not ks or ks[0] < 1:
        raise ConfigError("eval.ks must be positive integers")
    return ks


def stage_evaluate(config: RunConfig, corpus: Corpus, vocab: Vocabulary, model: EmbeddingModel,
                   index: TermIndex, catalog: Catalog | None = None) -> dict[Rescoring, EvalReport]:
    catalog = catalog or make_catalog(config, corpus, vocab)
    judgments = judgments_from_labels(corpus.labels, config.get_bool("eval", "include_partial"))
    eq = EquivalenceMap(corpus.products)
    ks = eval_ks(config)
    top_k = max(ks)
    judged = [q for q in sorted(corpus.queries, key=lambda q: q.query_id) if q.query_id in judgments]
    reports = {}
    for mode in rescoring_modes(config):
        run = {q.query_id: retrieve(index, model, vocab, q, mode, catalog=catalog, top_k=top_k) for q in judged}
        echo = {
            "ks": ks,
            "gamma_index": repr(index.gamma),
            "variant": model.variant.value,
            "tokenizer": vocab.kind.value,
            "mt": bool(vocab.special_terms),
            "dim": model.dim,
            "rescoring": mode.value,
            "build_version": __version__,
            "run_config": config.to_dict(),
        }
        reports[mode] = evaluate(run, judgments, eq, ks, config=echo)
    return reports


def write_reports(reports: dict[Rescoring, EvalReport], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for mode, report in reports.items():
        per_query = out_dir / f"eval_{mode.value}.tsv"
        summary = out_dir / f"eval_{mode.value}_summary.tsv"
        per_query.write_text(report.to_tsv(), encoding="utf-8")
        summary.write_text(report.summary_tsv(), encoding="utf-8")
        written += [per_query, summary]
    return written


def posting_length_summary(index: TermIndex) -> dict[str, float]:
    lengths = index.list_lengths()
    if lengths.size == 0:
        return {"terms": 0, "mean": 0.0, "min": 0, "median": 0.0, "p90": 0.0, "max": 0, "mean_fraction": 0.0}
    return {
        "terms": int(lengths.size),
        "mean": float(lengths.mean()),
        "min": int(lengths.min()),
        "median": float(np.median(lengths)),
        "p90": float(np.percentile(lengths, 90)),
        "max": int(lengths.max()),
        "mean_fraction": float(lengths.mean() / index.n_products) if index.n_products else 0.0,
    }


def run_all(config: RunConfig, corpus: Corpus | None = None, vocab: Vocabulary | None = None,
            write: bool = True) -> dict:
    """Tokenizer -> encoder -> index -> evaluation for one configuration."""
    corpus = corpus or load_inputs(config)
    paths = artifact_paths(config)
    if write:
        config.output_dir.mkdir(parents=True, exist_ok=True)
    if vocab is None:
        vocab = stage_tokenizer(config, corpus)
    else:
        vocab = Vocabulary(vocab.kind, vocab.tokens, vocab.special_terms, vocab.merges, vocab.token_log_probs,
                           provenance(config))
    catalog = make_catalog(config, corpus, vocab)
    model, stats, state = stage_encoder(config, corpus, vocab, catalog,
                                        log_path=paths["train_log"] if write else None)
    index, info = stage_index(config, corpus, vocab, model, catalog)
    reports = stage_evaluate(config, corpus, vocab, model, index, catalog)
    if write:
        save_vocab(vocab, paths["vocab"])
        save_model(model, paths["model"], state)
        save_index(index, paths["index"])
        write_reports(reports, config.output_dir)
    return {"vocab": vocab, "model": model, "index": index, "info": info, "reports": reports, "stats": stats}


def fmt_float(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.4f}"
