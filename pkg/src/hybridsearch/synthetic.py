"""Synthetic catalogs in the WANDS file format.

Used by the test-suite and for offline smoke runs when the real dataset is not
at hand. Titles are ``Brand Color Material Type`` with deliberate traps: brand
words double as ordinary words ("new", "balance", "white") and some titles
repeat, so title equivalence and multi-word brand terms both matter.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

BRANDS = [
    "New Balance", "New England Pottery", "Red Barrel Studio", "Mercury Row", "Three Posts",
    "Wade Logan", "Latitude Run", "Andover Mills", "Birch Lane", "Zipcode Design",
    "Ebern Designs", "Gracie Oaks", "Alcott Hill", "Charlton Home", "Union Rustic",
    "George Oliver", "Ivy Bronx", "Winston Porter", "White Noise", "Black Forest Decor",
]
TYPES = [
    "chair", "sofa", "table", "bed", "lamp", "rug", "desk", "shoes", "dresser", "bookcase",
    "ottoman", "mirror", "bench", "stool", "cabinet", "balance board", "planter", "clock",
]
COLORS = ["red", "blue", "white", "black", "gray", "green", "brown", "beige", "navy", "gold"]
MATERIALS = ["wood", "metal", "leather", "velvet", "linen", "glass", "rattan", "marble", "oak", "wool"]
FILLER = [
    "perfect", "for", "any", "room", "modern", "classic", "design", "easy", "assembly", "durable",
    "finish", "stylish", "comfortable", "home", "living", "space", "quality", "crafted", "with", "and",
]

PRODUCT_HEADER = ["product_id", "product_name", "product_class", "category hierarchy", "product_description",
                  "product_features", "rating_count", "average_rating", "review_count"]
QUERY_HEADER = ["query_id", "query", "query_class"]
LABEL_HEADER = ["id", "query_id", "product_id", "label"]


def generate(n_products: int = 400, n_queries: int = 40, seed: int = 0, duplicate_rate: float = 0.05,
             irrelevant_per_query: int = 30):
    """Return ``(product_rows, query_rows, label_rows)`` as lists of string rows."""
    rng = np.random.default_rng(seed)
    attrs = []
    products = []
    for pid in range(n_products):
        if attrs and rng.random() < duplicate_rate:
            a = attrs[int(rng.integers(len(attrs)))]
        else:
            a = (BRANDS[int(rng.integers(len(BRANDS)))], COLORS[int(rng.integers(len(COLORS)))],
                 MATERIALS[int(rng.integers(len(MATERIALS)))], TYPES[int(rng.integers(len(TYPES)))])
        attrs.append(a)
        brand, color, material, ptype = a
        title = f"{brand} {color.title()} {material.title()} {ptype.title()}"
        words = list(rng.choice(FILLER, size=int(rng.integers(4, 12))))
        desc = f"this {ptype} in {color} {material} by {brand.lower()} is " + " ".join(words)
        products.append([str(pid), title, ptype, f"Furniture / {ptype.title()}", desc,
                         f"color:{color}|material:{material}", str(int(rng.integers(0, 50))),
                         f"{rng.uniform(1, 5):.1f}", str(int(rng.integers(0, 20)))])

    queries = []
    specs = []
    for qid in range(n_queries):
        form = int(rng.integers(4))
        ptype = TYPES[int(rng.integers(len(TYPES)))]
        if form == 0:
            brand = BRANDS[int(rng.integers(len(BRANDS)))]
            spec = {"brand": brand, "type": ptype}
            text = f"{brand.lower()} {ptype}"
        elif form == 1:
            color = COLORS[int(rng.integers(len(COLORS)))]
            spec = {"color": color, "type": ptype}
            text = f"{color} {ptype}"
        elif form == 2:
            material = MATERIALS[int(rng.integers(len(MATERIALS)))]
            spec = {"material": material, "type": ptype}
            text = f"{material} {ptype}"
        else:
            brand = BRANDS[int(rng.integers(len(BRANDS)))]
            spec = {"brand": brand}
            text = brand.lower()
        specs.append(spec)
        queries.append([str(qid), text, ptype])

    labels = []
    lid = 0
    for qid, spec in enumerate(specs):
        irrelevant = []
        for pid, (brand, color, material, ptype) in enumerate(attrs):
            got = {"brand": brand, "color": color, "material": material, "type": ptype}
            matched = [k for k in spec if got[k] == spec[k]]
            if len(matched) == len(spec):
                grade = "Exact"
            elif matched:
                grade = "Partial"
            else:
                irrelevant.append(pid)
                continue
            labels.append([str(lid), str(qid), str(pid), grade])
            lid += 1
        take = min(irrelevant_per_query, len(irrelevant))
        for pid in sorted(rng.choice(irrelevant, size=take, replace=False).tolist()):
            labels.append([str(lid), str(qid), str(pid), "Irrelevant"])
            lid += 1
    return products, queries, labels


def write_wands(directory, n_products: int = 400, n_queries: int = 40, seed: int = 0, **kwargs) -> dict[str, Path]:
    """Write ``product.csv``, ``query.csv``, ``label.csv`` (tab-separated) and a
    ``brands.txt`` list; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    products, queries, labels = generate(n_products, n_queries, seed, **kwargs)
    paths = {"products": d / "product.csv", "queries": d / "query.csv", "labels": d / "label.csv",
             "brands": d / "brands.txt"}
    for key, header, rows in (("products", PRODUCT_HEADER, products), ("queries", QUERY_HEADER, queries),
                              ("labels", LABEL_HEADER, labels)):
        with open(paths[key], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    paths["brands"].write_text("".join(f"{b}\n" for b in BRANDS), encoding="utf-8")
    return paths
