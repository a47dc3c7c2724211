"""Tokenizer x mt x dim x variant ablation grid."""

from __future__ import annotations

import itertools
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import pipeline
from .config import RunConfig
from .corpus import Corpus
from .errors import ConfigError
from .index import Rescoring

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("tokenizer", "mt", "dim", "variant", "map@12", "r@1k", "map@12_exact", "r@1k_exact",
                 "gamma_index", "status", "best")


@dataclass
class Cell:
    tokenizer: str
    mt: bool
    dim: int
    variant: str
    map12: float = float("nan")
    r1k: float = float("nan")
    map12_exact: float = float("nan")
    r1k_exact: float = float("nan")
    gamma: float = float("nan")
    status: str = "pending"

    @property
    def key(self) -> str:
        return f"{self.tokenizer}-{'mt' if self.mt else 'nonmt'}-{self.dim}-{self.variant}"


def _mt_flag(value: str) -> bool:
    v = value.strip().lower()
    if v in ("mt", "true", "yes", "1"):
        return True
    if v in ("non-mt", "nonmt", "false", "no", "0"):
        return False
    raise ConfigError(f"grid.mt entries must be mt/non-mt or true/false, got {value!r}")


def grid_cells(config: RunConfig) -> list[Cell]:
    kinds = [k.lower() for k in config.get_list("grid", "tokenizers")]
    mts = [_mt_flag(v) for v in config.get_list("grid", "mt")]
    dims = [int(d) for d in config.get_list("grid", "dims")]
    variants = [v.upper() for v in config.get_list("grid", "variants")]
    return [Cell(k, m, d, v) for k, m, d, v in itertools.product(kinds, mts, dims, variants)]


def cell_config(config: RunConfig, cell: Cell) -> RunConfig:
    out_dir = config.output_dir / "cells" / cell.key
    ks = sorted(set(pipeline.eval_ks(config)) | {12, 1000})
    return config.override([
        f"tokenizer.kind={cell.tokenizer}",
        f"tokenizer.mt={'true' if cell.mt else 'false'}",
        f"model.dim={cell.dim}",
        f"model.variant={cell.variant}",
        f"eval.ks={', '.join(map(str, ks))}",
        f"run.output_dir={out_dir}",
    ])


def _fill(cell: Cell, result: dict) -> Cell:
    reports = result["reports"]
    acc = reports.get(Rescoring.ACCUMULATE)
    if acc is not None:
        cell.map12 = acc.aggregate(12)[2]
        cell.r1k = acc.aggregate(1000)[1]
    exact = reports.get(Rescoring.EXACT)
    if exact is not None:
        cell.map12_exact = exact.aggregate(12)[2]
        cell.r1k_exact = exact.aggregate(1000)[1]
    cell.gamma = result["index"].gamma
    cell.status = "ok"
    return cell


def _run_cell(args) -> Cell:
    config, cell, corpus, vocab = args
    cfg = cell_config(config, cell)
    try:
        corpus = corpus or pipeline.load_inputs(cfg)
        return _fill(cell, pipeline.run_all(cfg, corpus, vocab))
    except Exception as exc:  # a failing cell must not stop the grid
        logger.error("cell %s failed: %s\n%s", cell.key, exc, traceback.format_exc())
        cell.status = f"error: {type(exc).__name__}: {exc}"
        return cell


def run_grid(config: RunConfig, corpus: Corpus | None = None) -> list[Cell]:
    cells = grid_cells(config)
    parallel = config.get_bool("grid", "parallel")
    if parallel:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_run_cell, [(config, c, None, None) for c in cells]))
    corpus = corpus or pipeline.load_inputs(config)
    vocabs = {}
    done = []
    for cell in cells:
        key = (cell.tokenizer, cell.mt)
        if key not in vocabs:
            try:
                vocabs[key] = pipeline.stage_tokenizer(cell_config(config, cell), corpus)
            except Exception as exc:
                logger.error("tokenizer %s failed: %s", key, exc)
                vocabs[key] = None
        if vocabs[key] is None:
            cell.status = "error: tokenizer training failed"
            done.append(cell)
            continue
        logger.info("ablation cell %s", cell.key)
        done.append(_run_cell((config, cell, corpus, vocabs[key])))
    return done


def best_cell(cells: list[Cell]) -> Cell | None:
    ok = [c for c in cells if c.status == "ok"]
    return max(ok, key=lambda c: (c.map12, c.r1k)) if ok else None


def mt_trend(cells: list[Cell]) -> tuple[int, int]:
    """(comparisons where mt beats non-mt on mAP@12, total comparisons)."""
    by_key = {(c.tokenizer, c.mt, c.dim, c.variant): c for c in cells if c.status == "ok"}
    wins = total = 0
    for (k, mt, d, v), c in by_key.items():
        if not mt:
            continue
        other = by_key.get((k, False, d, v))
        if other is None:
            continue
        total += 1
        wins += c.map12 > other.map12
    return wins, total


def table_tsv(cells: list[Cell]) -> str:
    best = best_cell(cells)
    lines = ["\t".join(TABLE_COLUMNS)]
    for c in cells:
        lines.append("\t".join([
            c.tokenizer, "mt" if c.mt else "non-mt", str(c.dim), c.variant,
            repr(c.map12), repr(c.r1k), repr(c.map12_exact), repr(c.r1k_exact), repr(c.gamma),
            c.status, "*" if c is best else "",
        ]))
    return "\n".join(lines) + "\n"
