import numpy as np
import pytest

from hybridsearch.catalog import Catalog, tokenize_queries
from hybridsearch.corpus import Product, Query, TrainingPair, build_training_pairs
from hybridsearch.encoder import EmbeddingModel, Variant
from hybridsearch.errors import ConfigError
from hybridsearch.tokenizer import train_word
from hybridsearch.trainer import TrainConfig, loss_gradient, train, triplet_loss

from oracles import dense, numeric_gradient, relative_error, smooth_triplets


def fixed_model(variant, q_rows, p_rows=None):
    q = np.asarray(q_rows, dtype=float)
    p = q if variant == "SE" else np.asarray(p_rows, dtype=float)
    return EmbeddingModel(Variant(variant), q.shape[1], q, p, "test")


def test_hinge_clamps_and_margin():
    # s+ = 5, s- = 1
    m = fixed_model("H1", [[1.0], [0.0]], [[5.0], [1.0]])
    assert triplet_loss(m, [0], [0], [1], 1.0) == 0.0
    assert triplet_loss(m, [0], [0], [0], 1.0) == 1.0


def test_hinge_hand_example():
    m = fixed_model("H1", [[1, 0], [0, 1], [0, 0]], [[1, 0], [0, 0.5], [0.5, 0.5]])
    # s+ = max(1, 0) + max(0, 0.5) = 1.5; s- = 0.5 + 0.5 = 1.0; loss = 1 - 1.5 + 1.0
    assert triplet_loss(m, [0, 1], [0, 1], [2], 1.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("variant", ["H1", "DE", "SE"])
def test_zero_loss_zero_gradient(variant, backend):
    if variant == "SE":
        m = fixed_model("SE", [[3.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
    else:
        m = fixed_model(variant, [[3.0, 0.0], [0.0, 0.0], [0.0, 0.0]], [[0, 0], [3.0, 0.0], [0.0, 1.0]])
    assert triplet_loss(m, [0], [1], [2], 1.0) == 0.0
    g = loss_gradient(m, [0], [1], [2], 1.0)
    assert g["query"] == {} and g["product"] == {}


def test_single_token_h1_gradient_by_hand(backend):
    rng = np.random.default_rng(0)
    m = fixed_model("H1", rng.normal(size=(3, 4)) * 0.1, rng.normal(size=(3, 4)) * 0.1)
    assert triplet_loss(m, [0], [1], [2], 1.0) > 0
    g = loss_gradient(m, [0], [1], [2], 1.0)
    np.testing.assert_allclose(g["query"][0], m.product_table[2] - m.product_table[1], atol=1e-15)
    np.testing.assert_allclose(g["product"][1], -m.query_table[0], atol=1e-15)
    np.testing.assert_allclose(g["product"][2], m.query_table[0], atol=1e-15)


def test_h1_tie_goes_to_lowest_position(backend):
    q = [[1.0, 0.0]]
    p = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]
    m = fixed_model("H1", q + [[0, 0]] * 3, p)
    g = loss_gradient(m, [0], [2, 1], [3], 2.0)
    # both p+ tokens tie; the first position (row 2) receives the gradient
    assert set(g["product"]) == {2, 3}


@pytest.mark.parametrize("variant", ["H1", "DE", "SE"])
def test_gradient_matches_finite_differences(variant, backend):
    worst = 0.0
    for model, q, pos, neg in smooth_triplets(variant, 100, seed={"H1": 1, "DE": 2, "SE": 3}[variant]):
        g = loss_gradient(model, q, pos, neg, 1.0)
        analytic = [dense(g["query"], model.query_table)]
        if not model.tied:
            analytic.append(dense(g["product"], model.product_table))
        worst = max(worst, relative_error(analytic, numeric_gradient(model, q, pos, neg, 1.0)))
    assert worst <= 1e-4


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(margin=0)


# ---------------------------------------------------------------- training loop

WORDS = ["red", "blue", "green", "oak", "pine", "chair", "table", "lamp", "rug", "sofa"]


@pytest.fixture(scope="module")
def toy():
    products = [Product(i, f"{WORDS[i % 5]} {WORDS[5 + i // 5 % 5]}") for i in range(20)]
    queries = [Query(100 + i, products[2 * i].title) for i in range(10)]
    vocab = train_word([p.title for p in products] + [q.text for q in queries], 50)
    catalog = Catalog(products, vocab)
    qtok = tokenize_queries(queries, vocab)
    pairs = []
    for i, q in enumerate(queries):
        pairs.append(TrainingPair(q.query_id, [p.product_id for p in products if p.title == q.text][0], 1))
        pairs.append(TrainingPair(q.query_id, (3 * i + 7) % 20, -1))
    return vocab, catalog, qtok, pairs


def test_loss_trend_on_toy(toy):
    vocab, catalog, qtok, pairs = toy
    m = EmbeddingModel.initialize("H1", vocab, 8, seed=0)
    _, stats = train(m, pairs, catalog, qtok, vocab, TrainConfig(epochs=6, batch_size=4, learning_rate=0.01))
    losses = stats.mean_losses
    assert sum(b <= a for a, b in zip(losses, losses[1:])) >= 4
    assert all(e.mean_loss >= 0 and 0 <= e.zero_loss_fraction <= 1 for e in stats.epochs)


@pytest.mark.parametrize("variant", ["H1", "DE", "SE"])
def test_determinism(toy, variant, backend):
    vocab, catalog, qtok, pairs = toy
    runs = []
    for _ in range(2):
        m = EmbeddingModel.initialize(variant, vocab, 8, seed=5)
        train(m, pairs, catalog, qtok, vocab, TrainConfig(epochs=3, batch_size=6, seed=9))
        runs.append(m)
    assert runs[0].fingerprint == runs[1].fingerprint


def test_backends_train_identically(toy):
    from hybridsearch import _kernels

    vocab, catalog, qtok, pairs = toy
    before = _kernels.backend()
    prints = []
    try:
        for name in ("numba", "numpy"):
            _kernels.set_backend(name)
            m = EmbeddingModel.initialize("H1", vocab, 8, seed=5)
            train(m, pairs, catalog, qtok, vocab, TrainConfig(epochs=2, batch_size=6))
            prints.append(m.query_table.copy())
    finally:
        _kernels.set_backend(before)
    np.testing.assert_array_equal(prints[0], prints[1])


def test_separated_model_is_stationary():
    products = [Product(1, "alpha"), Product(2, "beta"), Product(3, "gamma"), Product(4, "delta")]
    queries = [Query(10, "alpha"), Query(11, "beta")]
    vocab = train_word(["alpha beta gamma delta"], 10)
    catalog = Catalog(products, vocab)
    qtok = tokenize_queries(queries, vocab)
    m = EmbeddingModel.initialize("DE", vocab, 4, seed=0)
    m.query_table[:] = 0.0
    m.product_table[:] = 0.0
    a, b = vocab.token_to_id["alpha"], vocab.token_to_id["beta"]
    m.query_table[a] = [5, 0, 0, 0]
    m.query_table[b] = [0, 5, 0, 0]
    m.product_table[a] = [5, 0, 0, 0]
    m.product_table[b] = [0, 5, 0, 0]
    pairs = [TrainingPair(10, 1, 1), TrainingPair(11, 2, 1), TrainingPair(10, 3, -1), TrainingPair(11, 4, -1)]
    before = m.fingerprint
    _, stats = train(m, pairs, catalog, qtok, vocab, TrainConfig(epochs=2, batch_size=4))
    assert stats.epochs[0].zero_loss_fraction == 1.0
    assert m.fingerprint == before


def test_training_log_and_state(tmp_path, toy):
    vocab, catalog, qtok, pairs = toy
    m = EmbeddingModel.initialize("SE", vocab, 4, seed=0)
    log = tmp_path / "log.tsv"
    _, stats = train(m, pairs, catalog, qtok, vocab, TrainConfig(epochs=2, batch_size=5), log_path=log)
    lines = log.read_text().splitlines()
    assert lines[0].startswith("# train_config\t") and '"margin": 1.0' in lines[0]
    assert lines[1] == "epoch\tmean_loss\tzero_loss_fraction\tseconds"
    assert len(lines) == 4
    assert stats.optimizer_state["step"] > 0 and len(stats.optimizer_state["m"]) == 1


def test_negatives_skip_title_duplicates():
    from hybridsearch.trainer import _draw_negatives

    titles = {1: "a", 2: "a", 3: "b"}
    rng = np.random.default_rng(0)
    for _ in range(50):
        for i, j in _draw_negatives(np.array([1, 2, 3]), np.array([1, 1, -1]), titles, rng):
            assert titles[[1, 2, 3][j]] != titles[[1, 2, 3][i]]
    assert _draw_negatives(np.array([1, 2]), np.array([1, 1]), titles, rng) == []


def test_balanced_pairs_feed_training(synthetic_corpus, bpe_vocab, catalog):
    pairs = build_training_pairs(synthetic_corpus.labels, seed=0)
    m = EmbeddingModel.initialize("H1", bpe_vocab, 8, seed=0)
    _, stats = train(m, pairs, catalog, tokenize_queries(synthetic_corpus.queries, bpe_vocab), bpe_vocab,
                     TrainConfig(epochs=1, batch_size=64))
    assert stats.epochs[0].triplets > 0
