"""
The trainable DIDA model in numpy (float64): embedding lookup, the shared semantic BiGRU,
the temporal-emotion BiGRU, interactive co-attention in the semantic and emotion channels,
feature concatenation, the softmax head, losses and analytic gradients.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.config import L2_SCOPES, TrainConfig, VariantSpec
from processors.dataset_processor import NewsRecord
from processors.resource_loader import PAD_ID, EmbeddingTable, Resources
from src.core.emotion import EmotionExtractor
from src.core.errors import DataError, NumericalError

logger = logging.getLogger(__name__)

EPSILON = 1e-7
N_CLASSES = 2
GRU_PARTS = ("W_f", "U_f", "b_f", "W_b", "U_b", "b_b")


# ----------------------------------------------------------------------------------------
# Inputs
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceBatch:
    """Padded token ids with a prefix mask (True = real token)"""
    token_ids: np.ndarray
    mask: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @classmethod
    def from_sequences(cls, sequences: Sequence[np.ndarray], length: Optional[int] = None) -> "SequenceBatch":
        length = length or max((len(s) for s in sequences), default=1)
        ids = np.full((len(sequences), length), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(sequences), length), dtype=bool)
        for i, seq in enumerate(sequences):
            seq = np.asarray(seq, dtype=np.int64)[:length]
            ids[i, :len(seq)] = seq
            mask[i, :len(seq)] = True
        return cls(token_ids=ids, mask=mask)


@dataclass(frozen=True)
class PreparedRecord:
    """A record tokenized, truncated and mapped to ids, with its emotion inputs precomputed"""
    record_id: str
    news_ids: np.ndarray
    comment_ids: Tuple[np.ndarray, ...]
    E_news: np.ndarray
    E_C: np.ndarray
    E_dual: np.ndarray
    timestamps: Tuple[int, ...] = ()
    label: Optional[int] = None

    @property
    def M(self) -> int:
        return len(self.comment_ids)


def prepare_record(record: NewsRecord, resources: Resources, config: TrainConfig,
                   extractor: Optional[EmotionExtractor] = None) -> PreparedRecord:
    """
    Tokenizes a record, truncates texts to `max_text_len` tokens and keeps the earliest
    `max_comments` comments, then precomputes its emotion inputs.

    Args:
        record (NewsRecord): The record.
        resources (Resources): Embeddings, lexicon and tokenizer.
        config (TrainConfig): Truncation limits.
        extractor (Optional[EmotionExtractor]): Reused emotion extractor.

    Returns:
        PreparedRecord: Model-ready inputs.
    """
    extractor = extractor or EmotionExtractor(resources.lexicon, resources.tokenizer)
    tokenizer = resources.tokenizer

    def to_ids(text: str) -> np.ndarray:
        ids = resources.embeddings.ids(tokenizer.tokenize(text)[:config.max_text_len])
        return ids if len(ids) else np.array([PAD_ID], dtype=np.int64)

    comments = record.comments[:config.max_comments]
    E_news, E_C, E_dual = extractor.features(record, config.max_comments)
    return PreparedRecord(
        record_id=record.id,
        news_ids=to_ids(record.news_text),
        comment_ids=tuple(to_ids(c.text) for c in comments),
        E_news=E_news,
        E_C=E_C,
        E_dual=E_dual,
        timestamps=tuple(c.timestamp for c in comments),
        label=record.label,
    )


def embed(batch: SequenceBatch, table: EmbeddingTable) -> np.ndarray:
    """
    Looks up embedding rows; masked positions always map to zeros.

    Raises:
        DataError: If an id is outside the table.
    """
    ids = batch.token_ids
    if ids.size and (ids.min() < 0 or ids.max() >= len(table)):
        raise DataError(f"Token id out of range [0, {len(table)})")
    return table.vectors[ids] * batch.mask[..., None]


# ----------------------------------------------------------------------------------------
# Elementary functions
# ----------------------------------------------------------------------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - np.max(x))
    return shifted / shifted.sum()


# ----------------------------------------------------------------------------------------
# GRU / BiGRU
# ----------------------------------------------------------------------------------------

def gru_forward(X: np.ndarray, mask: np.ndarray, W: np.ndarray, U: np.ndarray,
                b: np.ndarray) -> Tuple[np.ndarray, list]:
    """
    Runs one GRU direction over a padded batch.

        z = σ(x W_z + h U_z + b_z),  r = σ(x W_r + h U_r + b_r)
        n = tanh(x W_n + (r ⊙ h) U_n + b_n),  h' = (1 − z) ⊙ h + z ⊙ n

    The state is frozen and the output is zero wherever the mask is False.

    Args:
        X (np.ndarray): B x L x d_in inputs.
        mask (np.ndarray): B x L prefix mask.
        W (np.ndarray): d_in x 3d_h input weights (z, r, n blocks).
        U (np.ndarray): d_h x 3d_h recurrent weights.
        b (np.ndarray): 3d_h bias.

    Returns:
        Tuple[np.ndarray, list]: B x L x d_h outputs and the per-step cache for backward.
    """
    B, L, _ = X.shape
    H = U.shape[0]
    XW = X @ W + b
    h = np.zeros((B, H))
    outputs = np.zeros((B, L, H))
    steps = []
    for t in range(L):
        m = mask[:, t, None].astype(np.float64)
        a = XW[:, t]
        hU = h @ U[:, :2 * H]
        z = sigmoid(a[:, :H] + hU[:, :H])
        r = sigmoid(a[:, H:2 * H] + hU[:, H:])
        rh = r * h
        n = np.tanh(a[:, 2 * H:] + rh @ U[:, 2 * H:])
        h_new = m * ((1.0 - z) * h + z * n) + (1.0 - m) * h
        outputs[:, t] = m * h_new
        steps.append((m, h, z, r, n, rh))
        h = h_new
    return outputs, steps


def gru_backward(dOut: np.ndarray, X: np.ndarray, steps: list, W: np.ndarray,
                 U: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Backpropagates through one GRU direction.

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]: (dX, dW, dU, db).
    """
    B, L, _ = X.shape
    H = U.shape[0]
    dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros(W.shape[1])
    dX = np.zeros_like(X)
    dh = np.zeros((B, H))
    for t in reversed(range(L)):
        m, h_prev, z, r, n, rh = steps[t]
        dh_total = dh + m * dOut[:, t]
        dh_cand = m * dh_total
        dh_prev = (1.0 - m) * dh_total + dh_cand * (1.0 - z)

        dz = dh_cand * (n - h_prev)
        dan = dh_cand * z * (1.0 - n ** 2)
        dU[:, 2 * H:] += rh.T @ dan
        drh = dan @ U[:, 2 * H:].T
        dh_prev += drh * r
        dar = drh * h_prev * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dU[:, :H] += h_prev.T @ daz
        dU[:, H:2 * H] += h_prev.T @ dar
        dh_prev += daz @ U[:, :H].T + dar @ U[:, H:2 * H].T

        da = np.concatenate([daz, dar, dan], axis=1)
        dW += X[:, t].T @ da
        db += da.sum(axis=0)
        dX[:, t] = da @ W.T
        dh = dh_prev
    return dX, dW, dU, db


def _reverse_index(mask: np.ndarray) -> np.ndarray:
    lengths = mask.sum(axis=1)
    if not np.array_equal(mask, np.arange(mask.shape[1])[None, :] < lengths[:, None]):
        raise DataError("Sequence mask must be a prefix mask (padding at the end)")
    positions = np.arange(mask.shape[1])[None, :]
    return np.where(positions < lengths[:, None], lengths[:, None] - 1 - positions, positions)


def bigru_forward(X: np.ndarray, mask: np.ndarray, params: Dict[str, np.ndarray],
                  prefix: str) -> Tuple[np.ndarray, dict]:
    """
    Bidirectional GRU; the backward direction runs over each row's reversed unmasked prefix.

    Args:
        X (np.ndarray): B x L x d_in inputs.
        mask (np.ndarray): B x L prefix mask.
        params (Dict[str, np.ndarray]): Parameter arrays; keys `<prefix>_W_f` ... `<prefix>_b_b`.
        prefix (str): Parameter name prefix ("sem" or "tmp").

    Returns:
        Tuple[np.ndarray, dict]: B x L x 2d_h outputs (forward ⊕ backward) and the cache.

    Raises:
        NumericalError: If the input contains non-finite values.
    """
    if not np.all(np.isfinite(X)):
        raise NumericalError(f"Non-finite input to the {prefix} BiGRU")
    rows = np.arange(X.shape[0])[:, None]
    rev = _reverse_index(mask)
    out_f, steps_f = gru_forward(X, mask, params[f"{prefix}_W_f"], params[f"{prefix}_U_f"], params[f"{prefix}_b_f"])
    X_rev = X[rows, rev]
    out_b_rev, steps_b = gru_forward(X_rev, mask, params[f"{prefix}_W_b"], params[f"{prefix}_U_b"], params[f"{prefix}_b_b"])
    out_b = out_b_rev[rows, rev]
    cache = {"X": X, "X_rev": X_rev, "rev": rev, "steps_f": steps_f, "steps_b": steps_b}
    return np.concatenate([out_f, out_b], axis=2), cache


def bigru_backward(dOut: np.ndarray, cache: dict, params: Dict[str, np.ndarray], prefix: str,
                   grads: Dict[str, np.ndarray]) -> np.ndarray:
    """Backpropagates through a BiGRU, accumulating parameter gradients into `grads`; returns dX"""
    H = params[f"{prefix}_U_f"].shape[0]
    rows = np.arange(dOut.shape[0])[:, None]
    rev = cache["rev"]
    dX_f, dW, dU, db = gru_backward(dOut[..., :H], cache["X"], cache["steps_f"],
                                    params[f"{prefix}_W_f"], params[f"{prefix}_U_f"])
    grads[f"{prefix}_W_f"] += dW
    grads[f"{prefix}_U_f"] += dU
    grads[f"{prefix}_b_f"] += db
    dX_b_rev, dW, dU, db = gru_backward(dOut[..., H:][rows, rev], cache["X_rev"], cache["steps_b"],
                                        params[f"{prefix}_W_b"], params[f"{prefix}_U_b"])
    grads[f"{prefix}_W_b"] += dW
    grads[f"{prefix}_U_b"] += dU
    grads[f"{prefix}_b_b"] += db
    return dX_f + dX_b_rev[rows, rev]


def bigru(seq: np.ndarray, mask: np.ndarray, params: Dict[str, np.ndarray], prefix: str = "sem") -> np.ndarray:
    """Hidden states B x L x 2d_h of a BiGRU (forward pass only)"""
    return bigru_forward(seq, mask, params, prefix)[0]


# ----------------------------------------------------------------------------------------
# Co-attention
# ----------------------------------------------------------------------------------------

def co_attention_forward(H: np.ndarray, c_bar: np.ndarray, W: np.ndarray,
                         b: float) -> Tuple[np.ndarray, np.ndarray, tuple]:
    """score_i = tanh(h_iᵀ W c̄ + b), α = softmax(score), A = Σ α_i h_i"""
    v = W @ c_bar
    s = np.tanh(H @ v + b)
    alpha = softmax(s)
    return alpha, alpha @ H, (H, c_bar, v, s, alpha)


def co_attention_backward(dA: np.ndarray, cache: tuple,
                          W: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Returns (dH, dc̄, dW, db) for an upstream gradient dA"""
    H, c_bar, v, s, alpha = cache
    dalpha = H @ dA
    ds = alpha * (dalpha - alpha @ dalpha)
    dpre = ds * (1.0 - s ** 2)
    dH = np.outer(alpha, dA) + np.outer(dpre, v)
    dv = H.T @ dpre
    return dH, W.T @ dv, np.outer(dv, c_bar), float(dpre.sum())


def co_attention(H_target: np.ndarray, H_context: np.ndarray, W: np.ndarray, b,
                 context_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Attends over target rows using the masked mean of the context rows.

    Args:
        H_target (np.ndarray): T x w target rows.
        H_context (np.ndarray): C x w_c context rows.
        W (np.ndarray): w x w_c bilinear matrix.
        b: Scalar bias (float or 1-element array).
        context_mask (Optional[np.ndarray]): C booleans; rows with False are ignored.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (alpha over the T rows, attended vector A of width w).

    Raises:
        DataError: If the target is empty.
    """
    H_target = np.asarray(H_target, dtype=np.float64)
    H_context = np.asarray(H_context, dtype=np.float64)
    if H_target.shape[0] == 0:
        raise DataError("Co-attention needs at least one target row")
    if context_mask is not None:
        H_context = H_context[np.asarray(context_mask, dtype=bool)]
    c_bar = H_context.mean(axis=0) if H_context.shape[0] else np.zeros(H_context.shape[1])
    alpha, A, _ = co_attention_forward(H_target, c_bar, np.asarray(W, dtype=np.float64),
                                       float(np.asarray(b).reshape(-1)[0]))
    return alpha, A


# ----------------------------------------------------------------------------------------
# Head and losses
# ----------------------------------------------------------------------------------------

def classify(X_NC: np.ndarray, params) -> np.ndarray:
    """
    Softmax class distribution P = softmax(W_X X + b_X); P[1] is the fake-news probability.

    Raises:
        NumericalError: If the logits are not finite.
    """
    logits = params["cls_W_X"] @ X_NC + params["cls_b_X"]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("Non-finite classifier logits")
    return softmax(logits)


def supervised_loss(y_r: int, y_p: float) -> float:
    """Binary cross entropy with y_p clamped to [ε, 1 − ε]"""
    y_p = min(max(float(y_p), EPSILON), 1.0 - EPSILON)
    return float(-(y_r * np.log(y_p) + (1 - y_r) * np.log(1.0 - y_p)))


def _cross_entropy_grad(y: int, P: np.ndarray) -> np.ndarray:
    """d CE / d logits, exact for the clamped loss (zero where the clamp is active)"""
    p1 = P[1]
    if not EPSILON < p1 < 1.0 - EPSILON:
        return np.zeros(N_CLASSES)
    dp1 = -y / p1 + (1 - y) / (1.0 - p1)
    return dp1 * P[0] * P[1] * np.array([-1.0, 1.0])


# ----------------------------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------------------------

@dataclass
class ModelParams:
    """Named parameter arrays plus the widths they were built for"""
    arrays: Dict[str, np.ndarray]
    d_h: int
    embedding_dim: int
    emotion_dim: int

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    @property
    def names(self) -> List[str]:
        return list(self.arrays)

    @property
    def weight_names(self) -> List[str]:
        """Matrices that carry L2 regularization (biases excluded)"""
        return [name for name in self.arrays if name.split("_")[1] != "b"]

    def regularized_names(self, scope: str = "classifier") -> List[str]:
        """
        Weight matrices under L2 for a scope: only the classifier matrix, or every weight matrix.

        Args:
            scope (str): "classifier" or "all".

        Returns:
            List[str]: Parameter names that receive the L2 penalty.
        """
        if scope not in L2_SCOPES:
            raise ValueError(f"Unknown L2 scope '{scope}' (choose from {', '.join(L2_SCOPES)})")
        return ["cls_W_X"] if scope == "classifier" else self.weight_names

    @property
    def x_width(self) -> int:
        return feature_width(self.d_h, self.emotion_dim)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()},
                           self.d_h, self.embedding_dim, self.emotion_dim)

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def check_finite(self):
        for name, value in self.arrays.items():
            if not np.all(np.isfinite(value)):
                raise NumericalError(f"Parameter '{name}' is not finite")

    def equals(self, other: "ModelParams") -> bool:
        return self.names == other.names and all(np.array_equal(self[k], other[k]) for k in self.names)


def feature_width(d_h: int, d: int) -> int:
    """Width of X_NC: 2·(2d_h) + 2d_h + d + d + 5d"""
    return 6 * d_h + 7 * d


def _uniform(rng: np.random.Generator, shape: Tuple[int, int], fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


def init_params(embedding_dim: int, emotion_dim: int, d_h: int, seed: int) -> ModelParams:
    """
    Initializes every parameter with uniform(−r, r), r = sqrt(6 / (fan_in + fan_out)); biases zero.

    Args:
        embedding_dim (int): d_g.
        emotion_dim (int): d.
        d_h (int): Hidden width of each GRU direction.
        seed (int): Initialization seed.

    Returns:
        ModelParams: Fresh parameters.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for prefix, d_in in (("sem", embedding_dim), ("tmp", emotion_dim)):
        for direction in ("f", "b"):
            arrays[f"{prefix}_W_{direction}"] = _uniform(rng, (d_in, 3 * d_h), d_in, 3 * d_h)
            arrays[f"{prefix}_U_{direction}"] = _uniform(rng, (d_h, 3 * d_h), d_h, 3 * d_h)
            arrays[f"{prefix}_b_{direction}"] = np.zeros(3 * d_h)
    w = 2 * d_h
    arrays["att_W_S"] = _uniform(rng, (w, w), w, w)
    arrays["att_b_S"] = np.zeros(1)
    arrays["att_W_E"] = _uniform(rng, (emotion_dim, emotion_dim), emotion_dim, emotion_dim)
    arrays["att_b_E"] = np.zeros(1)
    x_width = feature_width(d_h, emotion_dim)
    arrays["cls_W_X"] = _uniform(rng, (N_CLASSES, x_width), x_width, N_CLASSES)
    arrays["cls_b_X"] = np.zeros(N_CLASSES)
    return ModelParams(arrays, d_h=d_h, embedding_dim=embedding_dim, emotion_dim=emotion_dim)


# ----------------------------------------------------------------------------------------
# Full model
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedBundle:
    """All fused features of one record"""
    V_SN: np.ndarray
    V_SC: np.ndarray
    A_EN: np.ndarray
    A_EC: np.ndarray
    E_TC: np.ndarray
    E_dual: np.ndarray

    @property
    def X_NC(self) -> np.ndarray:
        return np.concatenate([self.V_SN, self.V_SC, self.A_EN, self.A_EC, self.E_TC, self.E_dual])


class DIDANetwork:
    """
    Dual-channel detector: semantic and emotion channels with interactive co-attention,
    the temporal comment-emotion encoder and a softmax head.

    Parameters are plain numpy arrays in a ModelParams; the embedding table is frozen.
    The variant switches decide whether co-attention and the temporal feature are active.
    """

    def __init__(self, params: ModelParams, embeddings: EmbeddingTable, variant: VariantSpec):
        self.logger = logging.getLogger(__name__)
        if embeddings.d_g != params.embedding_dim:
            raise DataError(f"Embedding width {embeddings.d_g} does not match parameters ({params.embedding_dim})")
        self.params = params
        self.embeddings = embeddings
        self.variant = variant

    @classmethod
    def initialize(cls, embeddings: EmbeddingTable, emotion_dim: int, config: TrainConfig) -> "DIDANetwork":
        params = init_params(embeddings.d_g, emotion_dim, config.d_h, config.seed)
        return cls(params, embeddings, config.variant_spec)

    def snapshot(self) -> "DIDANetwork":
        """Independent copy for concurrent read-only evaluation"""
        return DIDANetwork(self.params.copy(), self.embeddings, self.variant)

    # -- forward ---------------------------------------------------------------------------

    def _forward(self, rec: PreparedRecord) -> Tuple[EncodedBundle, dict]:
        p = self.params
        w = 2 * p.d_h
        d = p.emotion_dim
        M = rec.M
        if rec.E_news.shape != (d,) or rec.E_C.shape != (M, d):
            raise DataError(f"Emotion inputs of '{rec.record_id}' do not match emotion width {d}")

        batch = SequenceBatch.from_sequences([rec.news_ids, *rec.comment_ids])
        H, sem_cache = bigru_forward(embed(batch, self.embeddings), batch.mask, p.arrays, "sem")
        Ln = len(rec.news_ids)
        lengths = [len(c) for c in rec.comment_ids]
        H_SN = H[0, :Ln]
        H_SC = [H[1 + j, :lengths[j]] for j in range(M)]
        cache = {"H_shape": H.shape, "sem": sem_cache, "Ln": Ln, "lengths": lengths}

        if self.variant.co_attention:
            c_bar = np.concatenate(H_SC).mean(axis=0) if M else np.zeros(w)
            _, V_SN, cache["att_news"] = co_attention_forward(H_SN, c_bar, p["att_W_S"], p["att_b_S"][0])
            n_bar = H_SN.mean(axis=0)
            per_comment = [co_attention_forward(h, n_bar, p["att_W_S"].T, p["att_b_S"][0]) for h in H_SC]
            cache["att_comments"] = [c for _, _, c in per_comment]
            comment_vectors = [a for _, a, _ in per_comment]
        else:
            V_SN = H_SN.mean(axis=0)
            comment_vectors = [h.mean(axis=0) for h in H_SC]

        if M:
            stacked = np.stack(comment_vectors)
            V_SC = stacked.max(axis=0)
            cache["argmax"] = stacked.argmax(axis=0)
        else:
            V_SC = np.zeros(w)

        if self.variant.co_attention:
            e_bar = rec.E_C.mean(axis=0) if M else np.zeros(d)
            _, A_EN, cache["att_en"] = co_attention_forward(rec.E_news[None, :], e_bar, p["att_W_E"], p["att_b_E"][0])
            if M:
                _, A_EC, cache["att_ec"] = co_attention_forward(rec.E_C, rec.E_news, p["att_W_E"].T, p["att_b_E"][0])
            else:
                A_EC = np.zeros(d)
        else:
            A_EN = rec.E_news.copy()
            A_EC = rec.E_C.mean(axis=0) if M else np.zeros(d)

        if self.variant.temporal and M:
            T_out, cache["tmp"] = bigru_forward(rec.E_C[None, :, :], np.ones((1, M), dtype=bool), p.arrays, "tmp")
            E_TC = T_out[0].mean(axis=0)
        else:
            E_TC = np.zeros(w)

        bundle = EncodedBundle(V_SN=V_SN, V_SC=V_SC, A_EN=A_EN, A_EC=A_EC, E_TC=E_TC, E_dual=rec.E_dual)
        return bundle, cache

    def encode(self, rec: PreparedRecord) -> EncodedBundle:
        return self._forward(rec)[0]

    def predict_proba(self, rec: PreparedRecord) -> np.ndarray:
        return classify(self.encode(rec).X_NC, self.params)

    # -- backward --------------------------------------------------------------------------

    def _backward(self, rec: PreparedRecord, cache: dict, dX: np.ndarray, grads: Dict[str, np.ndarray]):
        p = self.params
        w = 2 * p.d_h
        d = p.emotion_dim
        M = rec.M
        Ln, lengths = cache["Ln"], cache["lengths"]
        offsets = np.cumsum([0, w, w, d, d, w])
        dV_SN, dV_SC, dA_EN, dA_EC, dE_TC = (dX[offsets[i]:offsets[i + 1]] for i in range(5))

        dH = np.zeros(cache["H_shape"])
        if self.variant.co_attention:
            dH_SN, dc_bar, dW, db = co_attention_backward(dV_SN, cache["att_news"], p["att_W_S"])
            grads["att_W_S"] += dW
            grads["att_b_S"][0] += db
            dH[0, :Ln] += dH_SN
            if M:
                share = dc_bar / sum(lengths)
                for j in range(M):
                    dH[1 + j, :lengths[j]] += share
        else:
            dH[0, :Ln] += dV_SN / Ln

        if M:
            argmax = cache["argmax"]
            for j in range(M):
                da = np.where(argmax == j, dV_SC, 0.0)
                if not da.any():
                    continue
                if self.variant.co_attention:
                    dH_j, dn_bar, dW_t, db = co_attention_backward(da, cache["att_comments"][j], p["att_W_S"].T)
                    grads["att_W_S"] += dW_t.T
                    grads["att_b_S"][0] += db
                    dH[1 + j, :lengths[j]] += dH_j
                    dH[0, :Ln] += dn_bar / Ln
                else:
                    dH[1 + j, :lengths[j]] += da / lengths[j]

        if self.variant.co_attention:
            _, _, dW, db = co_attention_backward(dA_EN, cache["att_en"], p["att_W_E"])
            grads["att_W_E"] += dW
            grads["att_b_E"][0] += db
            if M:
                _, _, dW_t, db = co_attention_backward(dA_EC, cache["att_ec"], p["att_W_E"].T)
                grads["att_W_E"] += dW_t.T
                grads["att_b_E"][0] += db

        if self.variant.temporal and M:
            dT = np.broadcast_to(dE_TC / M, (1, M, w)).copy()
            bigru_backward(dT, cache["tmp"], p.arrays, "tmp", grads)

        bigru_backward(dH, cache["sem"], p.arrays, "sem", grads)

    def loss_and_gradients(self, items: Sequence[Tuple[PreparedRecord, int, float]], l2: float = 0.0,
                           scale: float = 1.0, l2_scope: str = "classifier") -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Weighted cross-entropy of a batch plus L2 on the regularized matrices, with analytic gradients.

            loss = scale · (Σ_i w_i · CE(y_i, P_i[1]) + l2 · Σ_W ‖W‖²)

        W ranges over the classifier matrix by default, or over every weight matrix with l2_scope "all".

        Args:
            items (Sequence[Tuple[PreparedRecord, int, float]]): (record, target label, weight) triples.
            l2 (float): L2 coefficient.
            scale (float): Global loss multiplier.
            l2_scope (str): "classifier" or "all".

        Returns:
            Tuple[float, Dict[str, np.ndarray]]: The loss and one gradient array per parameter.

        Raises:
            NumericalError: If the loss or any gradient is not finite.
        """
        p = self.params
        grads = p.zeros_like()
        loss = 0.0
        for rec, target, weight in items:
            bundle, cache = self._forward(rec)
            X_NC = bundle.X_NC
            P = classify(X_NC, p)
            loss += weight * supervised_loss(target, P[1])
            dlogits = weight * _cross_entropy_grad(target, P)
            grads["cls_W_X"] += np.outer(dlogits, X_NC)
            grads["cls_b_X"] += dlogits
            self._backward(rec, cache, p["cls_W_X"].T @ dlogits, grads)

        for name in p.regularized_names(l2_scope):
            loss += l2 * float(np.sum(p[name] ** 2))
            grads[name] += 2.0 * l2 * p[name]

        loss *= scale
        if not np.isfinite(loss):
            raise NumericalError("Non-finite loss")
        for name in grads:
            grads[name] *= scale
            if not np.all(np.isfinite(grads[name])):
                raise NumericalError(f"Non-finite gradient for parameter '{name}'")
        return loss, grads

    def loss(self, items: Sequence[Tuple[PreparedRecord, int, float]], l2: float = 0.0, scale: float = 1.0,
             l2_scope: str = "classifier") -> float:
        """Forward-only value of `loss_and_gradients`"""
        p = self.params
        total = sum(weight * supervised_loss(target, self.predict_proba(rec)[1]) for rec, target, weight in items)
        total += l2 * sum(float(np.sum(p[name] ** 2)) for name in p.regularized_names(l2_scope))
        return scale * total

    def gradients(self, batch: Sequence[PreparedRecord], l2: float = 0.0,
                  l2_scope: str = "classifier") -> Dict[str, np.ndarray]:
        """Gradients of the mean supervised loss (+ L2) over a batch of labeled records"""
        if not batch:
            raise DataError("Cannot compute gradients of an empty batch")
        weight = 1.0 / len(batch)
        return self.loss_and_gradients([(rec, rec.label, weight) for rec in batch], l2=l2, l2_scope=l2_scope)[1]


def encode_record(record: NewsRecord, network: DIDANetwork, resources: Resources,
                  config: TrainConfig) -> EncodedBundle:
    """Prepares one record and returns its fused feature bundle"""
    return network.encode(prepare_record(record, resources, config))
