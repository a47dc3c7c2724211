import numpy as np
import pytest

from hybridsearch import _kernels
from hybridsearch.catalog import Catalog
from hybridsearch.corpus import Corpus, load_brand_list, load_corpus
from hybridsearch.synthetic import write_wands
from hybridsearch.tokenizer import train_bpe


@pytest.fixture(scope="session")
def synthetic_paths(tmp_path_factory):
    return write_wands(tmp_path_factory.mktemp("wands"), n_products=300, n_queries=30, seed=3)


@pytest.fixture(scope="session")
def synthetic_corpus(synthetic_paths):
    p = synthetic_paths
    return Corpus(*load_corpus(p["products"], p["queries"], p["labels"]))


@pytest.fixture(scope="session")
def brands(synthetic_paths):
    return load_brand_list(synthetic_paths["brands"])


@pytest.fixture(scope="session")
def bpe_vocab(synthetic_corpus, brands):
    texts = [p.text() for p in synthetic_corpus.products] + [q.text for q in synthetic_corpus.queries]
    return train_bpe(texts, 250, frozenset(brands))


@pytest.fixture(scope="session")
def catalog(synthetic_corpus, bpe_vocab):
    return Catalog(synthetic_corpus.products, bpe_vocab)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    before = _kernels.backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(before)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance reporting

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance():
    """``record(label, passed, detail)``; lines are printed in the terminal summary."""
    def record(label: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((label, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
