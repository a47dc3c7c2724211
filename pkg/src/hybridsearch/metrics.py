"""Product-search P@k, R@k and mAP@k under title equivalence.

Two products are equivalent when their normalized titles are equal. A retrieved
product counts as a hit if it is equivalent to any ground-truth product.

``map_at_k`` is the mean of P@1..P@k. This is *not* conventional average
precision (which averages precision only at relevant ranks); that variant is
available as ``conventional_ap_at_k`` and is never used by default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import Grade, Product, RelevanceLabel

logger = logging.getLogger(__name__)

# Best configuration reported for the H1 model (768 dims, BPE with brand terms) on WANDS.
REFERENCE_MAP_AT_12 = 0.561
REFERENCE_RECALL_AT_1K = 0.866

REPORT_COLUMNS = ("query_id", "k", "precision", "recall", "map")


class EquivalenceMap:
    def __init__(self, products: list[Product]):
        classes: dict[str, int] = {}
        self.class_of: dict[int, int] = {}
        for p in sorted(products, key=lambda p: p.product_id):
            self.class_of[p.product_id] = classes.setdefault(p.title, len(classes))

    def __getitem__(self, product_id: int) -> int:
        try:
            return self.class_of[product_id]
        except KeyError:
            raise KeyError(f"unknown product id {product_id}") from None

    def classes(self, ids) -> set[int]:
        return {self[i] for i in ids}


@dataclass
class QueryJudgments:
    query_id: int
    ground_truth: frozenset[int]


def judgments_from_labels(labels: list[RelevanceLabel], include_partial: bool = False) -> dict[int, QueryJudgments]:
    grades = {Grade.EXACT, Grade.PARTIAL} if include_partial else {Grade.EXACT}
    truth: dict[int, set[int]] = {}
    for l in labels:
        truth.setdefault(l.query_id, set())
        if l.grade in grades:
            truth[l.query_id].add(l.product_id)
    out = {}
    for qid, s in sorted(truth.items()):
        if s:
            out[qid] = QueryJudgments(qid, frozenset(s))
        else:
            logger.warning("query %d has no relevant products; excluded from evaluation", qid)
    return out


def _ranked_ids(retrieved) -> list[int]:
    ids = getattr(retrieved, "product_ids", retrieved)
    return [int(i) for i in ids]


def equivalence_match(a, b, eq: EquivalenceMap) -> list[int]:
    """Items of ``a`` (order kept) equivalent to some item of ``b``."""
    target = eq.classes(b)
    return [x for x in a if eq[x] in target]


def _hits(retrieved, judgments: QueryJudgments, eq: EquivalenceMap, k: int) -> list[bool]:
    target = eq.classes(judgments.ground_truth)
    return [eq[x] in target for x in _ranked_ids(retrieved)[:k]]


def precision_at_k(retrieved, judgments: QueryJudgments, eq: EquivalenceMap, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(_hits(retrieved, judgments, eq, k)) / k


def map_at_k(retrieved, judgments: QueryJudgments, eq: EquivalenceMap, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = _hits(retrieved, judgments, eq, k)
    total = 0.0
    running = 0
    for i in range(1, k + 1):
        if i <= len(hits) and hits[i - 1]:
            running += 1
        total += running / i
    return total / k


def recall_at_k(retrieved, judgments: QueryJudgments, eq: EquivalenceMap, k: int,
                by_product: bool = False) -> float:
    """Fraction of ground-truth equivalence classes hit within the top k.

    ``by_product=True`` counts ground-truth products instead: a product is found
    when its class is hit. Non-default; for sensitivity checks only.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    target = eq.classes(judgments.ground_truth)
    if not target:
        raise ValueError(f"query {judgments.query_id} has no ground truth")
    found = {eq[x] for x in _ranked_ids(retrieved)[:k]} & target
    if by_product:
        return sum(eq[g] in found for g in judgments.ground_truth) / len(judgments.ground_truth)
    return len(found) / len(target)


def conventional_ap_at_k(retrieved, judgments: QueryJudgments, eq: EquivalenceMap, k: int) -> float:
    """Standard AP@k (precision averaged at relevant ranks, over min(k, #classes)).

    Non-default; provided for comparison only.
    """
    hits = _hits(retrieved, judgments, eq, k)
    n_rel = min(k, len(eq.classes(judgments.ground_truth)))
    total = 0.0
    running = 0
    for i, h in enumerate(hits, start=1):
        if h:
            running += 1
            total += running / i
    return total / n_rel if n_rel else 0.0


@dataclass
class EvalReport:
    ks: list[int]
    per_query: dict[int, dict[int, tuple[float, float, float]]]
    excluded: list[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def aggregate(self, k: int) -> tuple[float, float, float]:
        """Unweighted means of (P@k, R@k, mAP@k) over evaluated queries."""
        rows = [m[k] for m in self.per_query.values()]
        if not rows:
            return 0.0, 0.0, 0.0
        n = len(rows)
        return (sum(r[0] for r in rows) / n, sum(r[1] for r in rows) / n, sum(r[2] for r in rows) / n)

    def to_tsv(self) -> str:
        lines = ["\t".join(REPORT_COLUMNS)]
        for qid in sorted(self.per_query):
            for k in self.ks:
                p, r, m = self.per_query[qid][k]
                lines.append(f"{qid}\t{k}\t{p!r}\t{r!r}\t{m!r}")
        return "\n".join(lines) + "\n"

    def summary_tsv(self) -> str:
        import json

        lines = [
            f"# reference_map@12\t{REFERENCE_MAP_AT_12}",
            f"# reference_r@1k\t{REFERENCE_RECALL_AT_1K}",
            "# config\t" + json.dumps(self.config, sort_keys=True),
            f"# evaluated_queries\t{len(self.per_query)}",
            f"# excluded_queries\t{len(self.excluded)}",
            "k\tprecision\trecall\tmap",
        ]
        for k in self.ks:
            p, r, m = self.aggregate(k)
            lines.append(f"{k}\t{p!r}\t{r!r}\t{m!r}")
        return "\n".join(lines) + "\n"


def evaluate(run: dict, judgments: dict[int, QueryJudgments], eq: EquivalenceMap, ks,
             config: dict | None = None) -> EvalReport:
    ks = sorted(set(int(k) for k in ks))
    per_query = {}
    excluded = []
    for qid in sorted(run):
        j = judgments.get(qid)
        if j is None:
            logger.warning("query %d has no judgments; excluded", qid)
            excluded.append(qid)
            continue
        per_query[qid] = {
            k: (precision_at_k(run[qid], j, eq, k), recall_at_k(run[qid], j, eq, k), map_at_k(run[qid], j, eq, k))
            for k in ks
        }
    return EvalReport(ks, per_query, excluded, dict(config or {}))
