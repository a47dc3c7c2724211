"""Hybrid lexical/semantic product retrieval with multi-word-aware tokenizers,
token-embedding encoders, margin-loss training and threshold-gated term indexes."""

__version__ = "0.1.0"
