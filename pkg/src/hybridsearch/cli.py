"""Command-line entry point: ``hybridsearch <subcommand> --config run.ini``.

Exit codes: 0 success, 1 usage/config error, 2 data error (also: a search
that returns nothing), 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, ablation, pipeline
from .catalog import Catalog
from .config import RunConfig
from .corpus import load_corpus, normalize_text
from .encoder import load_model, save_model
from .errors import ConfigError, HybridSearchError
from .index import Rescoring, load_index, retrieve, save_index
from .tokenizer import load_vocab, save_vocab, tokenize

logger = logging.getLogger("hybridsearch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


def _config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    return cfg.override(overrides)


def cmd_train_tokenizer(args) -> int:
    cfg = _config(args)
    corpus = pipeline.load_inputs(cfg)
    vocab = pipeline.stage_tokenizer(cfg, corpus)
    path = pipeline.artifact_paths(cfg)["vocab"]
    path.parent.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, path)
    print(f"kind\t{vocab.kind.value}")
    print(f"tokens\t{len(vocab)}")
    print(f"special_terms\t{len(vocab.special_terms)}")
    print(f"merges\t{len(vocab.merges)}")
    print(f"fingerprint\t{vocab.fingerprint}")
    print(f"written\t{path}")
    return EXIT_OK


def cmd_train_encoder(args) -> int:
    cfg = _config(args)
    paths = pipeline.artifact_paths(cfg)
    vocab = load_vocab(paths["vocab"])
    corpus = pipeline.load_inputs(cfg)
    paths["model"].parent.mkdir(parents=True, exist_ok=True)
    model, stats, state = pipeline.stage_encoder(cfg, corpus, vocab, log_path=paths["train_log"])
    save_model(model, paths["model"], state)
    if stats is not None:
        for e in stats.epochs:
            print(f"epoch {e.epoch}\tloss {e.mean_loss:.5f}\tzero-loss {e.zero_loss_fraction:.3f}\t{e.seconds:.1f}s")
    print(f"written\t{paths['model']}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    cfg = _config(args)
    paths = pipeline.artifact_paths(cfg)
    vocab = load_vocab(paths["vocab"])
    model = load_model(paths["model"])
    model.check_vocab(vocab)
    corpus = pipeline.load_inputs(cfg)
    index, info = pipeline.stage_index(cfg, corpus, vocab, model)
    save_index(index, paths["index"])
    summary = pipeline.posting_length_summary(index)
    print(f"gamma_index\t{index.gamma!r}\t({'calibrated' if info.calibrated else 'fixed'})")
    if info.score_std is not None:
        print(f"score_mean\t{info.score_mean!r}\nscore_std\t{info.score_std!r}")
    for k, v in summary.items():
        print(f"postings_{k}\t{v}")
    print(f"written\t{paths['index']}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = _config(args)
    paths = pipeline.artifact_paths(cfg)
    vocab = load_vocab(args.vocab or paths["vocab"])
    model = load_model(args.model or paths["model"])
    index = load_index(args.index or paths["index"], model, vocab)
    text = normalize_text(args.query)
    seq = tokenize(vocab, text)
    if args.verbose:
        print(f"tokens ({len(seq)}): {seq.surfaces}", file=sys.stderr)
    titles = {}
    catalog = None
    if cfg.path("data", "products") is not None:
        products, _, _ = load_corpus(cfg.path("data", "products"), cfg.path("data", "queries"),
                                     cfg.path("data", "labels"))
        titles = {p.product_id: p.title for p in products}
        if args.rescoring == "exact":
            catalog = Catalog(products, vocab, title_only=cfg.get_bool("data", "title_only"))
    elif args.rescoring == "exact":
        raise ConfigError("exact rescoring needs data.products in the config")
    result = retrieve(index, model, vocab, seq, Rescoring(args.rescoring), catalog=catalog, top_k=args.top_k)
    for rank, (pid, s) in enumerate(result.items(), start=1):
        print(f"{rank}\t{pid}\t{titles.get(pid, '')}\t{s:.6f}")
    return EXIT_OK if len(result) else EXIT_DATA


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    paths = pipeline.artifact_paths(cfg)
    vocab = load_vocab(paths["vocab"])
    model = load_model(paths["model"])
    index = load_index(paths["index"], model, vocab)
    corpus = pipeline.load_inputs(cfg)
    reports = pipeline.stage_evaluate(cfg, corpus, vocab, model, index)
    for path in pipeline.write_reports(reports, cfg.output_dir):
        print(f"written\t{path}")
    for mode, report in reports.items():
        for k in report.ks:
            p, r, m = report.aggregate(k)
            print(f"{mode.value}\tk={k}\tP={p:.4f}\tR={r:.4f}\tmAP={m:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    cells = ablation.run_grid(cfg)
    out = pipeline.artifact_paths(cfg)["ablation"]
    out.parent.mkdir(parents=True, exist_ok=True)
    table = ablation.table_tsv(cells)
    out.write_text(table, encoding="utf-8")
    print(table, end="")
    wins, total = ablation.mt_trend(cells)
    print(f"# mt beats non-mt on mAP@12 in {wins}/{total} paired cells (observational)")
    best = ablation.best_cell(cells)
    if best:
        print(f"# best cell: {best.key}")
    failed = [c for c in cells if c.status != "ok"]
    if failed:
        print(f"# {len(failed)} cells failed", file=sys.stderr)
    print(f"written\t{out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="hybridsearch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-tokenizer", parents=[common]).set_defaults(func=cmd_train_tokenizer)
    sub.add_parser("train-encoder", parents=[common]).set_defaults(func=cmd_train_encoder)
    sub.add_parser("build-index", parents=[common]).set_defaults(func=cmd_build_index)
    sp = sub.add_parser("search", parents=[common])
    sp.add_argument("query")
    sp.add_argument("--top-k", type=int, default=10)
    sp.add_argument("--index")
    sp.add_argument("--model")
    sp.add_argument("--vocab")
    sp.add_argument("--rescoring", choices=[m.value for m in Rescoring], default="accumulate")
    sp.set_defaults(func=cmd_search)
    sub.add_parser("evaluate", parents=[common]).set_defaults(func=cmd_evaluate)
    sub.add_parser("ablate", parents=[common]).set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HybridSearchError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except (OSError, ValueError, KeyError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
