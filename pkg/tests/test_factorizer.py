import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framevec.corpus import Vocabulary
from framevec.factorizer import (
    COMPILED,
    EmbeddingFormatError,
    EmbeddingSet,
    NoiseSampler,
    TrainConfig,
    TrainDivergedError,
    exact_loglik,
    load_embeddings,
    ns_loss_and_grads,
    resolve_backend,
    sample_negatives,
    save_embeddings,
    score,
    sgd_train,
    softmax_prob,
)
from framevec.rng import TapeRng
from framevec.tensor import Mode, ModeRole, ModeSchema, SparseCountTensor
from synth import make_schema, random_embeddings, random_tensor

needs_compiled = pytest.mark.skipif(not COMPILED, reason="compiled kernel unavailable")


def _single_cell_embeddings(c, w, alphas=()):
    """One-entry vocabularies holding exactly the given vectors."""
    d = len(w)
    modes = [
        Mode("target", ModeRole.TARGET, Vocabulary.from_entries(["w"])),
        Mode("context", ModeRole.CONTEXT, Vocabulary.from_entries(["c"])),
    ]
    mats = {"target": np.array([w], float), "context": np.array([c], float)}
    for i, alpha in enumerate(alphas):
        assert len(alpha) == d
        modes.append(Mode(f"a{i}", ModeRole.FEATURE, Vocabulary.from_entries(["x"])))
        mats[f"a{i}"] = np.array([alpha], float)
    return EmbeddingSet(ModeSchema(modes), mats)


# ---------------------------------------------------------------- scoring

def test_score_hand_example():
    emb = _single_cell_embeddings(c=[1, 2], w=[3, 0.5], alphas=[[2, 2]])
    assert score(emb, (0, 0, 0)) == pytest.approx(8.0, abs=1e-12)


def test_score_without_features_is_dot_product():
    rng = np.random.default_rng(0)
    emb = random_embeddings(make_schema(3, 4), d=6, rng=rng)
    s = score(emb, (1, 2))
    assert s == pytest.approx(float(emb["target"][1] @ emb["context"][2]), abs=1e-12)


def test_score_checks_arity():
    emb = _single_cell_embeddings(c=[1.0], w=[1.0])
    with pytest.raises(ValueError):
        score(emb, (0, 0, 0))


def test_softmax_hand_example():
    modes = [
        Mode("target", ModeRole.TARGET, Vocabulary.from_entries(["w"])),
        Mode("context", ModeRole.CONTEXT, Vocabulary.from_entries(["c0", "c1"])),
    ]
    emb = EmbeddingSet(
        ModeSchema(modes),
        {"target": np.array([[1.0]]), "context": np.array([[0.0], [math.log(3.0)]])},
    )
    assert softmax_prob(emb, (0, 0)) == pytest.approx(0.25, abs=1e-12)
    assert softmax_prob(emb, (0, 1)) == pytest.approx(0.75, abs=1e-12)


def test_softmax_normalizes():
    rng = np.random.default_rng(1)
    emb = random_embeddings(make_schema(3, 5, (2,)), d=4, rng=rng)
    total = sum(softmax_prob(emb, (1, c, 1)) for c in range(5))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_softmax_survives_large_scores():
    # scores around +-1000; naive exp would overflow
    emb = _single_cell_embeddings(c=[1000.0], w=[1.0])
    modes = [
        Mode("target", ModeRole.TARGET, Vocabulary.from_entries(["w"])),
        Mode("context", ModeRole.CONTEXT, Vocabulary.from_entries(["c0", "c1"])),
    ]
    emb = EmbeddingSet(
        ModeSchema(modes),
        {"target": np.array([[1.0]]), "context": np.array([[1000.0], [-1000.0]])},
    )
    p = softmax_prob(emb, (0, 0))
    assert p == pytest.approx(1.0, abs=1e-12)


def test_exact_loglik_uniform_hand_example():
    modes = [
        Mode("target", ModeRole.TARGET, Vocabulary.from_entries(["w"])),
        Mode("context", ModeRole.CONTEXT,
             Vocabulary.from_entries(["c0", "c1", "c2", "c3"])),
    ]
    emb = EmbeddingSet(
        ModeSchema(modes),
        {"target": np.array([[1.0]]), "context": np.zeros((4, 1))},
    )
    tensor = SparseCountTensor(emb.schema, {(0, 2): 2.0})
    assert exact_loglik(tensor, emb) == pytest.approx(2.0 * math.log(0.25), abs=1e-12)


def test_exact_loglik_rejects_schema_mismatch():
    rng = np.random.default_rng(2)
    emb = random_embeddings(make_schema(3, 4), d=2, rng=rng)
    other = random_tensor(make_schema(4, 4), 5, rng)
    with pytest.raises(ValueError):
        exact_loglik(other, emb)


# ---------------------------------------------------------------- noise

def test_noise_probs_hand_examples():
    s = NoiseSampler(np.array([3.0, 1.0]), gamma=1.0)
    assert np.allclose(s.probs, [0.75, 0.25])
    s = NoiseSampler(np.array([3.0, 1.0]), gamma=0.0)
    assert np.allclose(s.probs, [0.5, 0.5])
    s = NoiseSampler(np.array([16.0, 1.0]), gamma=0.75)
    assert np.allclose(s.probs, [8.0 / 9.0, 1.0 / 9.0])


def test_noise_zero_counts_masked_even_at_gamma_zero():
    s = NoiseSampler(np.array([4.0, 0.0, 1.0]), gamma=0.0)
    assert np.allclose(s.probs, [0.5, 0.0, 0.5])
    assert s.n_positive == 2
    draws = s.sample(TapeRng(5), 10_000)
    assert not (draws == 1).any()


def test_noise_empirical_frequencies():
    s = NoiseSampler(np.array([16.0, 1.0]), gamma=0.75)
    draws = s.sample(TapeRng(11), 200_000)
    freq = (draws == 0).mean()
    assert abs(freq - 8.0 / 9.0) < 0.01


def test_noise_sampler_rejects_degenerate_input():
    with pytest.raises(ValueError):
        NoiseSampler(np.array([]), gamma=0.75)
    with pytest.raises(ValueError):
        NoiseSampler(np.array([0.0, 0.0]), gamma=0.75)
    with pytest.raises(ValueError):
        NoiseSampler(np.array([1.0, -1.0]), gamma=0.75)


def test_sample_negatives_uses_context_marginal():
    rng = np.random.default_rng(3)
    tensor = random_tensor(make_schema(3, 4), 50, rng)
    marginal = tensor.marginal("context")
    draws = sample_negatives(tensor, 5000, 0.75, TapeRng(1))
    assert set(np.unique(draws)) <= set(marginal)


# ---------------------------------------------------------------- NS loss

def test_ns_rejects_true_context_as_negative():
    rng = np.random.default_rng(4)
    emb = random_embeddings(make_schema(3, 4), d=3, rng=rng)
    with pytest.raises(ValueError):
        ns_loss_and_grads(emb, (0, 2), [1, 2])


def test_ns_repeated_negatives_accumulate():
    rng = np.random.default_rng(5)
    emb = random_embeddings(make_schema(3, 4), d=3, rng=rng)
    loss1, grads1 = ns_loss_and_grads(emb, (0, 1), [2])
    loss2, grads2 = ns_loss_and_grads(emb, (0, 1), [2, 2])
    single = grads1[("context", 2)]
    double = grads2[("context", 2)]
    assert np.allclose(double, 2.0 * single)
    s_neg = float(emb["context"][2] @ emb["target"][0])
    assert loss2 - loss1 == pytest.approx(float(np.logaddexp(0.0, s_neg)), abs=1e-12)


def test_ns_gradient_saturates_at_large_scores():
    # s+ = 40, s- = -40: every gradient is below 1e-8
    modes = [
        Mode("target", ModeRole.TARGET, Vocabulary.from_entries(["w"])),
        Mode("context", ModeRole.CONTEXT, Vocabulary.from_entries(["pos", "neg"])),
    ]
    emb = EmbeddingSet(
        ModeSchema(modes),
        {"target": np.array([[40.0]]), "context": np.array([[1.0], [-1.0]])},
    )
    loss, grads = ns_loss_and_grads(emb, (0, 0), [1])
    assert loss < 1e-8
    for g in grads.values():
        assert np.abs(g).max() < 1e-8


def test_ns_textbook_sgns_when_no_features():
    rng = np.random.default_rng(6)
    for _ in range(50):
        emb = random_embeddings(make_schema(4, 6), d=int(rng.integers(1, 6)), rng=rng)
        tgt, ctx = int(rng.integers(4)), int(rng.integers(6))
        negs = [int(n) for n in rng.integers(0, 6, size=5) if int(n) != ctx]
        if not negs:
            continue
        loss, _ = ns_loss_and_grads(emb, (tgt, ctx), negs)
        w = emb["target"][tgt]
        ref = -math.log(1.0 / (1.0 + math.exp(-float(emb["context"][ctx] @ w))))
        for n in negs:
            ref -= math.log(1.0 / (1.0 + math.exp(float(emb["context"][n] @ w))))
        assert loss == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    n_feat=st.integers(min_value=0, max_value=3),
    d=st.integers(min_value=1, max_value=6),
)
def test_ns_loss_nonnegative_grads_finite(seed, n_feat, d):
    rng = np.random.default_rng(seed)
    schema = make_schema(3, 5, tuple([2] * n_feat))
    emb = random_embeddings(schema, d=d, rng=rng)
    cell = tuple(int(rng.integers(len(m.vocab))) for m in schema.modes)
    negs = [n for n in (int(x) for x in rng.integers(0, 5, size=4)) if n != cell[1]]
    if not negs:
        negs = [(cell[1] + 1) % 5]
    loss, grads = ns_loss_and_grads(emb, cell, negs)
    assert loss >= 0.0
    assert math.isfinite(loss)
    for g in grads.values():
        assert np.isfinite(g).all()


# ---------------------------------------------------------------- config

def test_train_config_validation():
    TrainConfig()
    for kwargs in (
        {"d": 0},
        {"negatives": 0},
        {"epochs": 0},
        {"eta0": 0.0},
        {"gamma": -1.0},
        {"min_count": -1},
        {"backend": "cuda"},
        {"workers": 0},
    ):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


def test_embedding_set_validation():
    schema = make_schema(2, 3)
    good = {"target": np.zeros((2, 4)), "context": np.zeros((3, 4))}
    EmbeddingSet(schema, dict(good))
    with pytest.raises(ValueError):
        EmbeddingSet(schema, {"target": np.zeros((2, 4))})
    with pytest.raises(ValueError):
        EmbeddingSet(schema, {"target": np.zeros((5, 4)), "context": np.zeros((3, 4))})
    with pytest.raises(ValueError):
        EmbeddingSet(schema, {"target": np.zeros((2, 4)), "context": np.zeros((3, 5))})
    bad = dict(good)
    bad["context"] = np.full((3, 4), np.nan)
    with pytest.raises(ValueError):
        EmbeddingSet(schema, bad)


def test_resolve_backend():
    import framevec.factorizer._sgd_numpy as sgd_numpy

    assert resolve_backend("numpy") is sgd_numpy
    auto = resolve_backend("auto")
    if COMPILED:
        assert auto is not sgd_numpy
        assert resolve_backend("fast") is auto
    else:
        assert auto is sgd_numpy
        with pytest.raises(ValueError):
            resolve_backend("fast")
    with pytest.raises(ValueError):
        resolve_backend("slow")


# ---------------------------------------------------------------- training

def _train_tensor(seed=7, n=400):
    rng = np.random.default_rng(seed)
    return random_tensor(make_schema(10, 8, (3,)), n, rng)


def test_train_single_thread_bitwise_deterministic():
    tensor = _train_tensor()
    cfg = dict(d=6, epochs=2, seed=13, min_count=1, backend="numpy")
    a = sgd_train(tensor, TrainConfig(**cfg))
    b = sgd_train(tensor, TrainConfig(**cfg))
    for mode in tensor.schema.names:
        assert np.array_equal(a[mode], b[mode])


@needs_compiled
def test_backends_agree():
    tensor = _train_tensor()
    h_np, h_fast = [], []
    a = sgd_train(tensor, TrainConfig(d=6, epochs=3, seed=13, min_count=1,
                                      backend="numpy"), history=h_np)
    b = sgd_train(tensor, TrainConfig(d=6, epochs=3, seed=13, min_count=1,
                                      backend="fast"), history=h_fast)
    for mode in tensor.schema.names:
        assert np.allclose(a[mode], b[mode], atol=1e-10)
    for (la, na), (lb, nb) in zip(h_np, h_fast):
        assert na == nb
        assert la == pytest.approx(lb, abs=1e-8)


def test_train_loss_decreases():
    # mean per-visit loss over the last epoch beats the first epoch
    tensor = _train_tensor(seed=21, n=600)
    assert tensor.total_mass() >= 100
    history = []
    sgd_train(
        tensor,
        TrainConfig(d=8, epochs=5, seed=3, min_count=1, backend="auto"),
        history=history,
    )
    first = history[0][0] / history[0][1]
    last = history[-1][0] / history[-1][1]
    assert last < first


def test_min_count_keeps_filtered_rows_at_init():
    schema = make_schema(3, 4)
    cells = {(0, 0): 5.0, (0, 1): 5.0, (1, 2): 5.0, (1, 3): 5.0, (2, 3): 1.0}
    tensor = SparseCountTensor(schema, cells)
    short = sgd_train(tensor, TrainConfig(d=4, epochs=1, seed=9, min_count=2,
                                          backend="numpy"))
    long = sgd_train(tensor, TrainConfig(d=4, epochs=4, seed=9, min_count=2,
                                         backend="numpy"))
    # target 2 is filtered out: its row never moves between epoch counts
    assert np.array_equal(short["target"][2], long["target"][2])
    assert not np.array_equal(short["target"][0], long["target"][0])


def test_train_rejects_degenerate_inputs():
    schema = make_schema(3, 4)
    with pytest.raises(ValueError):
        sgd_train(SparseCountTensor(schema, {}), TrainConfig(min_count=1))
    lonely = SparseCountTensor(schema, {(0, 1): 3.0})
    with pytest.raises(ValueError):
        # every cell filtered away
        sgd_train(lonely, TrainConfig(min_count=100))
    with pytest.raises(ValueError):
        # only one context id carries mass: nothing to contrast against
        sgd_train(lonely, TrainConfig(min_count=1))


def test_train_divergence_raises_with_diagnostics():
    schema = make_schema(6, 6)
    cells = {
        (i, j): (5000.0 if (i + j) % 2 == 0 else 1.0)
        for i in range(6)
        for j in range(6)
    }
    tensor = SparseCountTensor(schema, cells)
    with pytest.raises(TrainDivergedError, match="diverged"):
        sgd_train(
            tensor,
            TrainConfig(d=8, epochs=10, seed=1, min_count=1, eta0=2.0,
                        backend="numpy"),
        )


def test_workers_require_compiled_kernel():
    tensor = _train_tensor()
    with pytest.raises(ValueError):
        sgd_train(
            tensor,
            TrainConfig(d=4, epochs=1, seed=1, min_count=1, backend="numpy",
                        workers=2),
        )


@needs_compiled
def test_hogwild_produces_finite_embeddings():
    tensor = _train_tensor(seed=30, n=2000)
    emb = sgd_train(
        tensor,
        TrainConfig(d=6, epochs=2, seed=4, min_count=1, backend="fast", workers=3),
    )
    for mode in tensor.schema.names:
        assert np.isfinite(emb[mode]).all()
    assert math.isfinite(exact_loglik(tensor, emb))


def test_feature_rows_initialize_near_one():
    # only target 0 survives min_count, and its cells touch feature id 0 and
    # context ids 0/1 alone (the noise marginal covers just those contexts),
    # so every other row shows its raw initialization
    schema = make_schema(10, 8, (3,))
    cells = {(0, 0, 0): 200.0, (0, 1, 0): 200.0, (1, 2, 1): 1.0, (2, 3, 2): 1.0}
    tensor = SparseCountTensor(schema, cells)
    d = 5
    emb = sgd_train(tensor, TrainConfig(d=d, epochs=1, seed=2, min_count=100,
                                        backend="numpy"))
    assert (np.abs(emb["feat0"][1:] - 1.0) <= 0.01).all()
    assert (np.abs(emb["target"][1:]) <= 0.5 / d).all()
    assert (np.abs(emb["context"][2:]) <= 0.5 / d).all()
    # and the trained rows did move
    assert not (np.abs(emb["target"][0]) <= 0.5 / d).all()


# ---------------------------------------------------------------- round trip

def test_save_load_roundtrip(tmp_path):
    tensor = _train_tensor(seed=50, n=200)
    cfg = TrainConfig(d=4, epochs=1, seed=8, min_count=1, backend="numpy")
    emb = sgd_train(tensor, cfg)
    save_embeddings(emb, tmp_path, config=cfg, model_id="toy",
                    extra={"ablation": "none"})
    loaded, manifest = load_embeddings(tmp_path)
    assert manifest["model_id"] == "toy"
    assert manifest["ablation"] == "none"
    assert manifest["config"]["seed"] == 8
    assert loaded.schema.names == emb.schema.names
    for mode in emb.schema.names:
        assert np.array_equal(loaded[mode], emb[mode])
        assert loaded.schema[mode].vocab.entries == emb.schema[mode].vocab.entries


def test_save_load_label_with_spaces(tmp_path):
    vocab = Vocabulary.from_entries(["New York", "plain"])
    schema = ModeSchema(
        [
            Mode("target", ModeRole.TARGET, vocab),
            Mode("context", ModeRole.CONTEXT, Vocabulary.from_entries(["x"])),
        ]
    )
    emb = EmbeddingSet(
        schema,
        {"target": np.array([[1.5, -2.25], [0.1, 0.2]]), "context": np.zeros((1, 2))},
    )
    save_embeddings(emb, tmp_path)
    loaded, _ = load_embeddings(tmp_path)
    assert loaded.schema["target"].vocab.entries == ("New York", "plain")
    assert np.array_equal(loaded["target"], emb["target"])


def test_load_rejects_corrupt_files(tmp_path):
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(tmp_path)
    emb = EmbeddingSet(
        make_schema(2, 2),
        {"target": np.zeros((2, 3)), "context": np.zeros((2, 3))},
    )
    save_embeddings(emb, tmp_path)
    vec = tmp_path / "target.vec"
    body = vec.read_text(encoding="utf-8")
    vec.write_text(body + "extra row 1 2 3\n", encoding="utf-8")
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(tmp_path)
    vec.write_text("\n".join(body.splitlines()[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(tmp_path)
