"""Word, BPE and unigram tokenizers with optional multi-word special terms."""

from .brands import suggest_brand_terms
from .segment import TokenSequence, split_special_terms, tokenize
from .train import train_bpe, train_unigram, train_word
from .vocab import UNK, TokenizerKind, Vocabulary, load_vocab, save_vocab

__all__ = [
    "UNK",
    "TokenSequence",
    "TokenizerKind",
    "Vocabulary",
    "load_vocab",
    "save_vocab",
    "split_special_terms",
    "suggest_brand_terms",
    "tokenize",
    "train_bpe",
    "train_unigram",
    "train_word",
    "train_tokenizer",
]


def train_tokenizer(kind, corpus_texts, vocab_size, special_terms=frozenset(), **kwargs) -> Vocabulary:
    kind = TokenizerKind(kind)
    if kind is TokenizerKind.WORD:
        return train_word(corpus_texts, vocab_size, special_terms)
    if kind is TokenizerKind.BPE:
        return train_bpe(corpus_texts, vocab_size, special_terms)
    return train_unigram(corpus_texts, vocab_size, special_terms, **kwargs)
