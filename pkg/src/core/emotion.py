"""
Fine-grained lexicon emotion features: the per-text emotion vector, the comment emotion
matrix, pooled comment emotion, the news/comment emotion gap and the dual-emotion feature.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config.config import EmotionConfig
from processors.dataset_processor import NewsRecord
from processors.resource_loader import EmotionLexicon
from processors.text_processor import Tokenizer
from src.core.errors import DataError

logger = logging.getLogger(__name__)

D_INT = 1
D_SCORE = 1
AUX_FEATURES = ("exclamation", "question", "emoticon", "pronoun", "negation")
D_AUX = len(AUX_FEATURES)


@dataclass(frozen=True)
class EmotionLayout:
    """Positions of the five sub-feature spans inside an emotion vector"""
    n_cate: int

    @property
    def d(self) -> int:
        return 2 * self.n_cate + D_INT + D_SCORE + D_AUX

    @property
    def cate(self) -> slice:
        return slice(0, self.n_cate)

    @property
    def lex(self) -> slice:
        return slice(self.n_cate, 2 * self.n_cate)

    @property
    def int(self) -> slice:
        return slice(2 * self.n_cate, 2 * self.n_cate + D_INT)

    @property
    def score(self) -> slice:
        start = 2 * self.n_cate + D_INT
        return slice(start, start + D_SCORE)

    @property
    def aux(self) -> slice:
        start = 2 * self.n_cate + D_INT + D_SCORE
        return slice(start, start + D_AUX)


@dataclass(frozen=True)
class EmotionVector:
    values: np.ndarray
    layout: EmotionLayout

    @property
    def cate(self) -> np.ndarray:
        return self.values[self.layout.cate]

    @property
    def lex(self) -> np.ndarray:
        return self.values[self.layout.lex]

    @property
    def int(self) -> float:
        return float(self.values[self.layout.int][0])

    @property
    def score(self) -> float:
        return float(self.values[self.layout.score][0])

    @property
    def aux(self) -> np.ndarray:
        return self.values[self.layout.aux]


@dataclass(frozen=True)
class CommentEmotionMatrix:
    """M x d emotion rows in comment time order"""
    rows: np.ndarray
    timestamps: Tuple[int, ...]
    layout: EmotionLayout

    @property
    def M(self) -> int:
        return int(self.rows.shape[0])


def emotion_vector(text: str, lex: EmotionLexicon, config: Optional[EmotionConfig] = None,
                   tokenizer: Optional[Tokenizer] = None) -> EmotionVector:
    """
    Computes the five-part emotion vector of one text.

    Spans: category distribution (hit counts normalized to sum 1), per-category hit density
    (hits / tokens), mean intensity over intensity hits, negation-aware polarity sum per token,
    and the token fractions of exclamation marks, question marks, emoticons, pronouns and
    negation words.

    Args:
        text (str): Raw text.
        lex (EmotionLexicon): Emotion lexicon.
        config (Optional[EmotionConfig]): Negation window; defaults to 2 tokens.
        tokenizer (Optional[Tokenizer]): Shared tokenizer; built from the lexicon when omitted.

    Returns:
        EmotionVector: Vector of width 2 * n_cate + 7.
    """
    config = config or EmotionConfig()
    tokenizer = tokenizer or lex.tokenizer()
    layout = EmotionLayout(lex.n_cate)
    values = np.zeros(layout.d, dtype=np.float64)

    tokens = tokenizer.tokenize(text)
    n_tokens = len(tokens)
    if n_tokens == 0:
        return EmotionVector(values=values, layout=layout)

    counts = np.zeros(lex.n_cate, dtype=np.float64)
    intensities: List[float] = []
    polarity_sum = 0.0
    emoticons = set(lex.emoticons)
    aux = np.zeros(D_AUX, dtype=np.float64)

    for i, token in enumerate(tokens):
        for category in lex.categories_of(token):
            counts[category] += 1.0
        if token in lex.intensity:
            intensities.append(lex.intensity[token])
        if token in lex.polarity:
            window = tokens[max(0, i - config.negation_window):i]
            negated = any(t in lex.negation_words for t in window)
            polarity_sum += -lex.polarity[token] if negated else lex.polarity[token]

        aux += (token == "!", token == "?", token in emoticons,
                token in lex.pronouns, token in lex.negation_words)

    total_hits = counts.sum()
    if total_hits > 0:
        values[layout.cate] = counts / total_hits
    values[layout.lex] = counts / n_tokens
    values[layout.int] = float(np.mean(intensities)) if intensities else 0.0
    values[layout.score] = polarity_sum / n_tokens
    values[layout.aux] = aux / n_tokens
    return EmotionVector(values=values, layout=layout)


def comment_emotion_matrix(record: NewsRecord, lex: EmotionLexicon,
                           config: Optional[EmotionConfig] = None,
                           tokenizer: Optional[Tokenizer] = None,
                           max_comments: Optional[int] = None) -> CommentEmotionMatrix:
    """
    Stacks the emotion vectors of a record's comments in time order.

    Args:
        record (NewsRecord): Record with time-sorted comments.
        lex (EmotionLexicon): Emotion lexicon.
        config (Optional[EmotionConfig]): Emotion configuration.
        tokenizer (Optional[Tokenizer]): Shared tokenizer.
        max_comments (Optional[int]): Keep only the earliest comments.

    Returns:
        CommentEmotionMatrix: M x d matrix (M may be 0).
    """
    tokenizer = tokenizer or lex.tokenizer()
    layout = EmotionLayout(lex.n_cate)
    comments = record.comments[:max_comments] if max_comments is not None else record.comments
    rows = np.zeros((len(comments), layout.d), dtype=np.float64)
    for i, comment in enumerate(comments):
        rows[i] = emotion_vector(comment.text, lex, config, tokenizer).values
    return CommentEmotionMatrix(rows=rows, timestamps=tuple(c.timestamp for c in comments), layout=layout)


def pooled_comment_emotion(E_C: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Column-wise mean and max pooling of the comment emotion matrix.

    Args:
        E_C (np.ndarray): M x d matrix (or a CommentEmotionMatrix's rows).

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (mean, max, mean ⊕ max); zeros when M = 0.
    """
    E_C = np.asarray(E_C, dtype=np.float64)
    d = E_C.shape[1]
    if E_C.shape[0] == 0:
        mean, maximum = np.zeros(d), np.zeros(d)
    else:
        mean, maximum = E_C.mean(axis=0), E_C.max(axis=0)
    return mean, maximum, np.concatenate([mean, maximum])


def _check_width(name: str, vector: np.ndarray, width: int):
    if vector.shape != (width,):
        raise DataError(f"{name} has shape {vector.shape}, expected ({width},)")


def gap_emotion(E_news: np.ndarray, E_C_mean: np.ndarray, E_C_max: np.ndarray) -> np.ndarray:
    """
    Emotion gap between the news and its comments: (news − mean) ⊕ (news − max).

    Raises:
        DataError: If the three widths differ.
    """
    E_news = np.asarray(E_news, dtype=np.float64)
    d = E_news.shape[0]
    _check_width("E_C_mean", np.asarray(E_C_mean), d)
    _check_width("E_C_max", np.asarray(E_C_max), d)
    return np.concatenate([E_news - E_C_mean, E_news - E_C_max])


def dual_emotion(E_news: np.ndarray, E_comment: np.ndarray, E_gap: np.ndarray) -> np.ndarray:
    """
    Dual-emotion feature E_news ⊕ E_comment ⊕ E_gap of width 5d.

    Raises:
        DataError: If E_comment or E_gap is not 2d wide.
    """
    E_news = np.asarray(E_news, dtype=np.float64)
    d = E_news.shape[0]
    _check_width("E_comment", np.asarray(E_comment), 2 * d)
    _check_width("E_gap", np.asarray(E_gap), 2 * d)
    return np.concatenate([E_news, E_comment, E_gap])


class EmotionExtractor:
    """
    Bundles lexicon, tokenizer and configuration to compute every emotion input of a record.
    """

    def __init__(self, lexicon: EmotionLexicon, tokenizer: Optional[Tokenizer] = None,
                 config: Optional[EmotionConfig] = None):
        self.lexicon = lexicon
        self.tokenizer = tokenizer or lexicon.tokenizer()
        self.config = config or EmotionConfig()
        self.layout = EmotionLayout(lexicon.n_cate)

    @property
    def d(self) -> int:
        return self.layout.d

    def news_emotion(self, record: NewsRecord) -> np.ndarray:
        return emotion_vector(record.news_text, self.lexicon, self.config, self.tokenizer).values

    def comment_matrix(self, record: NewsRecord, max_comments: Optional[int] = None) -> CommentEmotionMatrix:
        return comment_emotion_matrix(record, self.lexicon, self.config, self.tokenizer, max_comments)

    def features(self, record: NewsRecord,
                 max_comments: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Computes E_news, E_C and E_dual for one record.

        Args:
            record (NewsRecord): The record.
            max_comments (Optional[int]): Comment cap (earliest kept).

        Returns:
            Tuple[np.ndarray, np.ndarray, np.ndarray]: (E_news (d,), E_C (M, d), E_dual (5d,)).
        """
        E_news = self.news_emotion(record)
        E_C = self.comment_matrix(record, max_comments).rows
        mean, maximum, E_comment = pooled_comment_emotion(E_C)
        E_dual = dual_emotion(E_news, E_comment, gap_emotion(E_news, mean, maximum))
        return E_news, E_C, E_dual
