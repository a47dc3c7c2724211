"""Heuristic stand-in for a curated brand list.

Real deployments should supply a hand-selected list. This picks frequent
capitalized word bigrams (``"New Balance"``) from raw, un-normalized titles;
when the titles carry no capitalization it falls back to frequent
title-leading bigrams, where brand names tend to sit.
"""

from __future__ import annotations

import re
from collections import Counter

from ..corpus import normalize_text

_WORD = re.compile(r"[^\W\d_][\w'&.-]*", re.UNICODE)


def suggest_brand_terms(raw_titles, top_n: int = 50, min_count: int = 3) -> list[str]:
    capitalized: Counter = Counter()
    leading: Counter = Counter()
    for title in raw_titles:
        words = _WORD.findall(title)
        for a, b in zip(words, words[1:]):
            if a[0].isupper() and b[0].isupper() and not (a.isupper() and b.isupper()):
                capitalized[normalize_text(f"{a} {b}")] += 1
        if len(words) >= 3:
            leading[normalize_text(f"{words[0]} {words[1]}")] += 1
    source = capitalized if capitalized else leading
    ranked = sorted(source.items(), key=lambda kv: (-kv[1], kv[0]))
    return [term for term, c in ranked[:top_n] if c >= min_count]
