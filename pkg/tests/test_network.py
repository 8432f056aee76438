import itertools
import math

import numpy as np
import pytest

from config.config import TrainConfig, VARIANTS
from processors.dataset_processor import make_record
from processors.resource_loader import PAD_ID
from src.core.errors import DataError, NumericalError
from src.core.network import (DIDANetwork, SequenceBatch, bigru, bigru_backward, bigru_forward, classify,
                              co_attention, embed, encode_record, feature_width, gru_forward, init_params,
                              prepare_record, supervised_loss)
from tests.conftest import random_prepared, random_table


def scalar_gru(xs, W, U, b):
    """Reference GRU written one scalar at a time"""
    H = U.shape[0]
    h = [0.0] * H
    outputs = []
    for x in xs:
        def pre(gate, k, state):
            return (sum(x[i] * W[i, gate * H + k] for i in range(len(x)))
                    + sum(state[j] * U[j, gate * H + k] for j in range(H)) + b[gate * H + k])

        z = [1.0 / (1.0 + math.exp(-pre(0, k, h))) for k in range(H)]
        r = [1.0 / (1.0 + math.exp(-pre(1, k, h))) for k in range(H)]
        rh = [r[j] * h[j] for j in range(H)]
        n = [math.tanh(pre(2, k, rh)) for k in range(H)]
        h = [(1.0 - z[k]) * h[k] + z[k] * n[k] for k in range(H)]
        outputs.append(h)
    return np.array(outputs)


def scalar_co_attention(H, c, W, b):
    v = [sum(W[k, j] * c[j] for j in range(len(c))) for k in range(W.shape[0])]
    scores = [math.tanh(sum(row[k] * v[k] for k in range(len(v))) + b) for row in H]
    top = max(scores)
    weights = [math.exp(s - top) for s in scores]
    alpha = [w / sum(weights) for w in weights]
    A = [sum(alpha[i] * H[i][k] for i in range(len(H))) for k in range(H.shape[1])]
    return np.array(alpha), np.array(A)


def _random_gru_params(rng, d_in, H, prefix="p"):
    params = {}
    for direction in ("f", "b"):
        params[f"{prefix}_W_{direction}"] = rng.normal(size=(d_in, 3 * H))
        params[f"{prefix}_U_{direction}"] = rng.normal(size=(H, 3 * H))
        params[f"{prefix}_b_{direction}"] = rng.normal(size=3 * H)
    return params


@pytest.mark.parametrize("case", range(50))
def test_gru_matches_scalar_reference(case):
    rng = np.random.default_rng(case)
    L, d_in, H = rng.integers(1, 4, size=3)
    X = rng.normal(size=(L, d_in))
    params = _random_gru_params(rng, d_in, H)

    out, _ = gru_forward(X[None], np.ones((1, L), dtype=bool), params["p_W_f"], params["p_U_f"], params["p_b_f"])
    np.testing.assert_allclose(out[0], scalar_gru(X, params["p_W_f"], params["p_U_f"], params["p_b_f"]),
                               rtol=0, atol=1e-9)

    both = bigru(X[None], np.ones((1, L), dtype=bool), params, "p")[0]
    backward = scalar_gru(X[::-1], params["p_W_b"], params["p_U_b"], params["p_b_b"])[::-1]
    np.testing.assert_allclose(both[:, H:], backward, rtol=0, atol=1e-9)


@pytest.mark.parametrize("case", range(100))
def test_co_attention_matches_scalar_reference(case):
    rng = np.random.default_rng(1000 + case)
    T, w, w_c = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 4)
    H = rng.normal(size=(T, w))
    context = rng.normal(size=(rng.integers(1, 4), w_c))
    W = rng.normal(size=(w, w_c))
    b = float(rng.normal())

    alpha, A = co_attention(H, context, W, b)
    ref_alpha, ref_A = scalar_co_attention(H, context.mean(axis=0), W, b)

    assert alpha.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(alpha, ref_alpha, rtol=0, atol=1e-9)
    np.testing.assert_allclose(A, ref_A, rtol=0, atol=1e-9)


def test_co_attention_context_mask_and_empty_target():
    rng = np.random.default_rng(0)
    H, W = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    context = np.vstack([rng.normal(size=(2, 2)), np.full((1, 2), 1e6)])

    masked = co_attention(H, context, W, 0.0, context_mask=[True, True, False])
    trimmed = co_attention(H, context[:2], W, 0.0)
    np.testing.assert_array_equal(masked[1], trimmed[1])

    with pytest.raises(DataError):
        co_attention(np.zeros((0, 2)), context, W, 0.0)


@pytest.mark.parametrize("lengths", list(itertools.product(range(1, 5), repeat=2)) + [(4, 2, 1), (1, 3, 4)])
def test_padding_never_changes_bigru_outputs(lengths):
    rng = np.random.default_rng(sum(lengths) * 7 + lengths[0])
    L, H = 4, 3
    params = _random_gru_params(rng, 2, H)
    table = random_table(rng, 6, 2)
    batch = SequenceBatch.from_sequences([rng.integers(1, 6, size=n) for n in lengths], length=L)
    mutated = SequenceBatch(token_ids=np.where(batch.mask, batch.token_ids, rng.integers(0, 6, size=batch.mask.shape)),
                            mask=batch.mask)
    X = embed(batch, table)
    noisy = X + rng.normal(size=X.shape) * ~batch.mask[..., None]

    out = bigru(X, batch.mask, params, "p")
    np.testing.assert_array_equal(out, bigru(embed(mutated, table), batch.mask, params, "p"))
    np.testing.assert_array_equal(out, bigru(noisy, batch.mask, params, "p"))
    np.testing.assert_array_equal(out[~batch.mask], 0.0)
    for i, n in enumerate(lengths):
        alone = bigru(X[i:i + 1, :n], np.ones((1, n), dtype=bool), params, "p")[0]
        np.testing.assert_allclose(out[i, :n], alone, rtol=1e-12, atol=1e-14)


def test_padded_positions_receive_no_gradient():
    rng = np.random.default_rng(5)
    H = 2
    params = _random_gru_params(rng, 3, H)
    mask = np.array([[True, True, False], [True, False, False]])
    X = rng.normal(size=(2, 3, 3)) * mask[..., None]
    _, cache = bigru_forward(X, mask, params, "p")

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dX = bigru_backward(rng.normal(size=(2, 3, 2 * H)), cache, params, "p", grads)
    np.testing.assert_array_equal(dX[~mask], 0.0)

    dOut = rng.normal(size=(2, 3, 2 * H)) * mask[..., None]
    grads_clean = {k: np.zeros_like(v) for k, v in params.items()}
    bigru_backward(dOut, cache, params, "p", grads_clean)
    grads_noisy = {k: np.zeros_like(v) for k, v in params.items()}
    bigru_backward(dOut + rng.normal(size=dOut.shape) * ~mask[..., None], cache, params, "p", grads_noisy)
    for name in params:
        np.testing.assert_allclose(grads_clean[name], grads_noisy[name], rtol=1e-12, atol=1e-14)


def test_non_prefix_mask_and_bad_inputs_raise():
    rng = np.random.default_rng(0)
    params = _random_gru_params(rng, 2, 2)
    with pytest.raises(DataError, match="prefix"):
        bigru(np.zeros((1, 3, 2)), np.array([[True, False, True]]), params, "p")
    with pytest.raises(NumericalError):
        bigru(np.full((1, 2, 2), np.nan), np.ones((1, 2), dtype=bool), params, "p")


def test_embed_zeroes_padding_and_checks_range():
    table = random_table(np.random.default_rng(0), 5, 3)
    batch = SequenceBatch.from_sequences([np.array([1, 2, 3]), np.array([4])])
    vectors = embed(batch, table)

    assert batch.token_ids[1, 1] == PAD_ID
    np.testing.assert_array_equal(batch.lengths, [3, 1])
    np.testing.assert_array_equal(vectors[1, 1:], 0.0)
    np.testing.assert_array_equal(vectors[0, 2], table.vectors[3])
    with pytest.raises(DataError):
        embed(SequenceBatch.from_sequences([np.array([9])]), table)


def test_classify_is_a_stable_distribution():
    params = {"cls_W_X": np.zeros((2, 3)), "cls_b_X": np.array([0.0, 1000.0])}
    P = classify(np.ones(3), params)
    assert P.sum() == pytest.approx(1.0)
    assert P[1] == pytest.approx(1.0)
    assert np.all(np.isfinite(P))

    with pytest.raises(NumericalError):
        classify(np.array([np.inf, 0.0, 0.0]), {"cls_W_X": np.ones((2, 3)), "cls_b_X": np.zeros(2)})


def test_supervised_loss_values():
    assert supervised_loss(1, 0.5) == pytest.approx(math.log(2))
    assert supervised_loss(0, 0.25) == pytest.approx(-math.log(0.75))
    assert supervised_loss(1, 0.0) == pytest.approx(-math.log(1e-7))
    assert supervised_loss(0, 1.0) == pytest.approx(-math.log(1e-7))


def test_init_params_shapes_and_determinism():
    params = init_params(embedding_dim=4, emotion_dim=11, d_h=3, seed=0)
    assert params["sem_W_f"].shape == (4, 9)
    assert params["tmp_W_b"].shape == (11, 9)
    assert params["att_W_S"].shape == (6, 6)
    assert params["att_W_E"].shape == (11, 11)
    assert params["cls_W_X"].shape == (2, feature_width(3, 11))
    assert params.x_width == 6 * 3 + 7 * 11
    np.testing.assert_array_equal(params["sem_b_f"], 0.0)
    assert params.equals(init_params(4, 11, 3, seed=0))
    assert not params.equals(init_params(4, 11, 3, seed=1))


def test_weight_names_cover_both_directions_but_no_biases():
    params = init_params(4, 11, 3, seed=0)
    weights = set(params.weight_names)
    assert {"sem_W_b", "sem_U_b", "tmp_W_b", "tmp_U_b", "att_W_S", "att_W_E", "cls_W_X"} <= weights
    assert not weights & {"sem_b_f", "sem_b_b", "tmp_b_f", "tmp_b_b", "att_b_S", "att_b_E", "cls_b_X"}


def test_regularized_names_by_scope():
    params = init_params(4, 11, 3, seed=0)
    assert params.regularized_names() == ["cls_W_X"]
    assert params.regularized_names("all") == params.weight_names
    with pytest.raises(ValueError):
        params.regularized_names("biases")


def test_copy_and_snapshot_are_independent(resources):
    network = DIDANetwork.initialize(resources.embeddings, 11, TrainConfig(d_h=3, embedding_dim=4))
    snapshot = network.snapshot()
    network.params["cls_W_X"][0, 0] += 1.0
    assert not snapshot.params.equals(network.params)


def _network(resources, variant="dida", **train):
    config = TrainConfig(d_h=3, embedding_dim=4, seed=0, variant=variant, **train)
    return DIDANetwork.initialize(resources.embeddings, 11, config), config


def test_encode_widths_and_probabilities(resources, sample_records):
    network, config = _network(resources)
    rec = prepare_record(sample_records[0], resources, config)
    bundle = network.encode(rec)

    assert bundle.V_SN.shape == bundle.V_SC.shape == bundle.E_TC.shape == (6,)
    assert bundle.A_EN.shape == bundle.A_EC.shape == (11,)
    assert bundle.X_NC.shape == (feature_width(3, 11),)
    # one target row: attention weight 1
    np.testing.assert_allclose(bundle.A_EN, rec.E_news)
    P = network.predict_proba(rec)
    assert P.sum() == pytest.approx(1.0)
    assert encode_record(sample_records[0], network, resources, config).X_NC.tolist() == bundle.X_NC.tolist()


def test_record_without_comments_uses_zero_features(resources):
    network, config = _network(resources)
    record, _ = make_record("lonely", "happy news about a cat", [], 1)
    rec = prepare_record(record, resources, config)
    bundle = network.encode(rec)

    assert rec.M == 0
    np.testing.assert_array_equal(bundle.V_SC, 0.0)
    np.testing.assert_array_equal(bundle.A_EC, 0.0)
    np.testing.assert_array_equal(bundle.E_TC, 0.0)
    assert network.predict_proba(rec).sum() == pytest.approx(1.0)


def test_variants_without_co_attention_use_mean_pooling(resources, sample_records):
    network, config = _network(resources, variant="dida_t")
    rec = prepare_record(sample_records[0], resources, config)
    bundle = network.encode(rec)

    np.testing.assert_array_equal(bundle.A_EN, rec.E_news)
    np.testing.assert_allclose(bundle.A_EC, rec.E_C.mean(axis=0))
    assert np.any(bundle.E_TC != 0.0)

    ablated, config = _network(resources, variant="dida_d", use_temporal=False)
    np.testing.assert_array_equal(ablated.encode(rec).E_TC, 0.0)


def test_prepare_record_truncates(resources, sample_records):
    config = TrainConfig(d_h=3, embedding_dim=4, max_text_len=2, max_comments=1)
    rec = prepare_record(sample_records[0], resources, config)
    assert len(rec.news_ids) == 2
    assert rec.M == 1
    assert rec.E_C.shape == (1, 11)
    assert rec.timestamps == (100,)


def test_gradients_scale_linearly(resources, sample_records):
    network, config = _network(resources)
    items = [(prepare_record(r, resources, config), r.label, 0.5) for r in sample_records[:2]]
    loss, grads = network.loss_and_gradients(items, l2=0.01)
    loss2, grads2 = network.loss_and_gradients(items, l2=0.01, scale=2.0)

    assert loss2 == pytest.approx(2 * loss)
    assert loss == pytest.approx(network.loss(items, l2=0.01))
    for name in grads:
        np.testing.assert_allclose(grads2[name], 2 * grads[name])
    with pytest.raises(DataError):
        network.gradients([])


def test_classifier_scope_penalizes_only_the_classifier_matrix(resources, sample_records):
    network, config = _network(resources)
    items = [(prepare_record(r, resources, config), r.label, 0.5) for r in sample_records[:2]]
    loss, grads = network.loss_and_gradients(items)
    penalized_loss, penalized = network.loss_and_gradients(items, l2=0.1)

    W_X = network.params["cls_W_X"]
    assert penalized_loss == pytest.approx(loss + 0.1 * float(np.sum(W_X ** 2)))
    np.testing.assert_allclose(penalized["cls_W_X"], grads["cls_W_X"] + 0.2 * W_X)
    for name in grads:
        if name != "cls_W_X":
            np.testing.assert_array_equal(penalized[name], grads[name])

    _, everywhere = network.loss_and_gradients(items, l2=0.1, l2_scope="all")
    np.testing.assert_allclose(everywhere["sem_W_f"], grads["sem_W_f"] + 0.2 * network.params["sem_W_f"])


def test_mismatched_embedding_width_is_rejected(resources):
    params = init_params(embedding_dim=5, emotion_dim=11, d_h=3, seed=0)
    with pytest.raises(DataError):
        DIDANetwork(params, resources.embeddings, VARIANTS["dida"])


def test_emotion_width_mismatch_is_rejected(resources):
    network, _ = _network(resources)
    rec = random_prepared(np.random.default_rng(0), len(resources.embeddings), 7, 3, [2])
    with pytest.raises(DataError):
        network.encode(rec)


def _ordered_record(texts, record_id="ordered"):
    record, _ = make_record(record_id, "the news about a happy cat",
                            [(text, 100 + 10 * j, j) for j, text in enumerate(texts)], 1)
    return record


def test_comment_order_moves_only_the_temporal_feature(resources):
    network, config = _network(resources)
    texts = ["i am happy", "so angry", "angry again , not good", "a cat :)"]
    forward = network.encode(prepare_record(_ordered_record(texts), resources, config))
    backward = network.encode(prepare_record(_ordered_record(texts[::-1]), resources, config))

    for name in ("V_SN", "V_SC", "A_EN", "A_EC", "E_dual"):
        np.testing.assert_allclose(getattr(backward, name), getattr(forward, name), rtol=1e-10, atol=1e-12,
                                   err_msg=name)
    assert not np.allclose(backward.E_TC, forward.E_TC)


def _noisy_padding(monkeypatch, table_size, extra=0, seed=0):
    rng = np.random.default_rng(seed)
    original = SequenceBatch.from_sequences

    def padded(cls, sequences, length=None):
        batch = original(sequences, (length or max((len(s) for s in sequences), default=1)) + extra)
        noise = rng.integers(1, table_size, size=batch.mask.shape)
        return cls(token_ids=np.where(batch.mask, batch.token_ids, noise), mask=batch.mask)

    monkeypatch.setattr(SequenceBatch, "from_sequences", classmethod(padded))


@pytest.mark.parametrize("variant", ["dida", "dida_t"])
def test_pad_ids_never_reach_the_model_output(resources, monkeypatch, variant):
    network, config = _network(resources, variant=variant)
    texts = ["i am happy", "so angry about the car , not good at all", "a cat"]
    rec = prepare_record(_ordered_record(texts), resources, config)
    clean = network.encode(rec).X_NC
    clean_loss, clean_grads = network.loss_and_gradients([(rec, 1, 1.0)])

    _noisy_padding(monkeypatch, len(resources.embeddings))
    np.testing.assert_array_equal(network.encode(rec).X_NC, clean)
    noisy_loss, noisy_grads = network.loss_and_gradients([(rec, 1, 1.0)])
    assert noisy_loss == clean_loss
    for name in clean_grads:
        np.testing.assert_array_equal(noisy_grads[name], clean_grads[name], err_msg=name)


def test_extra_padded_positions_leave_the_prediction_unchanged(resources, monkeypatch):
    network, config = _network(resources)
    rec = prepare_record(_ordered_record(["i am happy", "so angry , not good"]), resources, config)
    clean = network.predict_proba(rec)

    _noisy_padding(monkeypatch, len(resources.embeddings), extra=4, seed=1)
    np.testing.assert_allclose(network.predict_proba(rec), clean, rtol=0, atol=1e-12)
