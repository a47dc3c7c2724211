"""Margin-loss training with in-batch random negatives."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .catalog import Catalog
from .corpus import TrainingPair
from .encoder import EmbeddingModel, score
from .errors import ConfigError, FingerprintError

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    margin: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.margin <= 0 or self.learning_rate <= 0:
            raise ConfigError("margin and learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 to draw an in-batch negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    zero_loss_fraction: float
    seconds: float
    triplets: int


@dataclass
class TrainStats:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def mean_losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]


def triplet_loss(model: EmbeddingModel, q_tokens, pos_tokens, neg_tokens, margin: float) -> float:
    return max(0.0, margin - score(model, q_tokens, pos_tokens) + score(model, q_tokens, neg_tokens))


def _ids(tokens) -> np.ndarray:
    return np.asarray(getattr(tokens, "ids", tokens), dtype=np.int64)


def _pack_triplets(triplets):
    def flat(seqs):
        offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in seqs], out=offsets[1:])
        ids = np.concatenate(seqs) if seqs else np.zeros(0, dtype=np.int64)
        return ids.astype(np.int64), offsets

    qs, ps, ns = zip(*triplets)
    for seqs in (qs, ps, ns):
        if any(len(s) == 0 for s in seqs):
            raise ValueError("similarity is undefined for an empty token sequence")
    return (*flat(qs), *flat(ps), *flat(ns))


def loss_gradient(model: EmbeddingModel, q_tokens, pos_tokens, neg_tokens, margin: float):
    """Exact subgradient of the hinge loss w.r.t. the embedding tables.

    Returns ``{"query": {row: grad}, "product": {row: grad}}`` holding only
    touched rows; for SE both keys refer to the same shared-table gradient.
    Max ties resolve to the lowest product-token position.
    """
    grad_q = np.zeros_like(model.query_table)
    grad_p = grad_q if model.tied else np.zeros_like(model.product_table)
    packed = _pack_triplets([(_ids(q_tokens), _ids(pos_tokens), _ids(neg_tokens))])
    _kernels.batch_loss_grad(model.query_table, model.product_table, *packed, margin, model.maxsim,
                             grad_q, grad_p)

    def sparse(g):
        rows = np.flatnonzero(np.any(g != 0.0, axis=1))
        return {int(r): g[r].copy() for r in rows}

    gq = sparse(grad_q)
    return {"query": gq, "product": gq if model.tied else sparse(grad_p)}


class _Optimizer:
    def __init__(self, model: EmbeddingModel, config: TrainConfig, state: dict | None = None):
        self.config = config
        self.tables = model.tables()
        if state is not None:
            self.step = state["step"]
            self.m = [a.copy() for a in state["m"]]
            self.v = [a.copy() for a in state["v"]]
        else:
            self.step = 0
            self.m = [np.zeros_like(t) for t in self.tables]
            self.v = [np.zeros_like(t) for t in self.tables]

    def apply(self, grads: list[np.ndarray]) -> None:
        c = self.config
        self.step += 1
        if c.optimizer == "sgd":
            for t, g in zip(self.tables, grads):
                t -= c.learning_rate * g
            return
        bc1 = 1.0 - c.beta1 ** self.step
        bc2 = 1.0 - c.beta2 ** self.step
        for t, g, m, v in zip(self.tables, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            t -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)

    def state(self) -> dict:
        return {"name": self.config.optimizer, "step": self.step, "m": self.m, "v": self.v}


def _draw_negatives(batch_products, batch_targets, titles, rng) -> list[tuple[int, int]]:
    """(positive position, negative position) per usable positive in the batch."""
    n = len(batch_products)
    out = []
    if n < 2:
        return out
    for i in range(n):
        if batch_targets[i] != 1:
            continue
        pos_title = titles[batch_products[i]]
        for _ in range(n):
            j = int(rng.integers(n - 1))
            j += j >= i
            if titles[batch_products[j]] != pos_title:
                out.append((i, j))
                break
    return out


def train(model: EmbeddingModel, pairs: list[TrainingPair], catalog: Catalog, query_tokens: dict[int, list[int]],
          vocab, config: TrainConfig, log_path=None, optimizer_state: dict | None = None):
    """Train ``model`` in place. Returns ``(model, stats)``; the final optimizer
    state is stored on ``stats.optimizer_state`` for checkpointing."""
    model.check_vocab(vocab)
    if catalog.vocab_fingerprint != vocab.fingerprint:
        raise FingerprintError("catalog was tokenized with a different vocabulary")
    if not pairs:
        raise ConfigError("no training pairs")
    usable = [p for p in pairs if p.product_id in catalog.position and query_tokens.get(p.query_id)]
    if len(usable) < len(pairs):
        logger.warning("%d training pairs reference untokenizable records; ignored", len(pairs) - len(usable))
    q_ids = np.array([p.query_id for p in usable], dtype=np.int64)
    p_ids = np.array([p.product_id for p in usable], dtype=np.int64)
    targets = np.array([p.target for p in usable], dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    opt = _Optimizer(model, config, optimizer_state)
    grads = [np.zeros_like(t) for t in opt.tables]
    grad_q = grads[0]
    grad_p = grads[0] if model.tied else grads[1]
    stats = TrainStats()
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        if log:
            log.write("# train_config\t" + json.dumps(dataclasses.asdict(config), sort_keys=True) + "\n")
            log.write("epoch\tmean_loss\tzero_loss_fraction\tseconds\n")
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(usable))
            loss_sum = 0.0
            zero = 0
            count = 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                bp = p_ids[idx]
                choice = _draw_negatives(bp, targets[idx], catalog.titles, rng)
                if not choice:
                    continue
                triplets = [
                    (np.asarray(query_tokens[int(q_ids[idx[i]])], dtype=np.int64),
                     catalog.ids_of(int(bp[i])),
                     catalog.ids_of(int(bp[j])))
                    for i, j in choice
                ]
                for g in grads:
                    g.fill(0.0)
                losses = _kernels.batch_loss_grad(model.query_table, model.product_table,
                                                  *_pack_triplets(triplets), config.margin, model.maxsim,
                                                  grad_q, grad_p)
                loss_sum += float(losses.sum())
                zero += int(np.count_nonzero(losses == 0.0))
                count += len(losses)
                opt.apply(grads)
            es = EpochStats(epoch, loss_sum / count if count else 0.0, zero / count if count else 1.0,
                            time.perf_counter() - t0, count)
            stats.epochs.append(es)
            logger.info("epoch %d: loss %.5f, zero-loss %.3f, %.1fs", epoch, es.mean_loss,
                        es.zero_loss_fraction, es.seconds)
            if log:
                log.write(f"{epoch}\t{es.mean_loss!r}\t{es.zero_loss_fraction!r}\t{es.seconds:.3f}\n")
    finally:
        if log:
            log.close()
    model.check_finite()
    stats.optimizer_state = opt.state()
    return model, stats
