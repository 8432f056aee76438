import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from config.config import SyntheticParams
from processors.dataset_processor import FAKE, TRUE, NewsRecord, make_record
from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

POSITIVE_CATEGORY = "joy"
NEGATIVE_CATEGORY = "anger"
NEGATION_WORDS = ("not", "never", "no")
PRONOUNS = ("i", "you", "we", "they")
EMOTICONS = (":)", ":(")


@dataclass(frozen=True)
class SyntheticVocabulary:
    neutral: Tuple[str, ...]
    positive: Tuple[str, ...]
    negative: Tuple[str, ...]

    @property
    def all_tokens(self) -> Tuple[str, ...]:
        return self.neutral + self.positive + self.negative + NEGATION_WORDS + PRONOUNS


@dataclass(frozen=True)
class SyntheticResourcePaths:
    embeddings_path: Path
    lexicon_dir: Path
    synonyms_path: Path


def synthetic_vocabulary(params: SyntheticParams) -> SyntheticVocabulary:
    n_positive = max(1, params.emotion_vocab_size // 2)
    n_negative = max(1, params.emotion_vocab_size - n_positive)
    return SyntheticVocabulary(
        neutral=tuple(f"tok{i}" for i in range(params.neutral_vocab_size)),
        positive=tuple(f"glad{i}" for i in range(n_positive)),
        negative=tuple(f"grim{i}" for i in range(n_negative)),
    )


def comment_polarities(label: int, n_comments: int, rng: np.random.Generator,
                       flip_rate: float = 0.0) -> List[int]:
    """
    Sign of the emotion words in each comment of a record.
    Fake records alternate (+, −, +, −, ...); true records hold the same multiset of signs
    in two constant runs whose leading sign is random, then each sign flips with probability
    `flip_rate`. Flips keep the expected number of positive comments equal across classes.
    """
    if label == FAKE:
        return [1 if j % 2 == 0 else -1 for j in range(n_comments)]
    start = int(rng.choice([1, -1]))
    half = n_comments // 2
    signs = np.array([start] * half + [-start] * (n_comments - half))
    if flip_rate > 0:
        signs[rng.random(n_comments) < flip_rate] *= -1
    return [int(s) for s in signs]


def _comment_text(polarity: int, vocab: SyntheticVocabulary, params: SyntheticParams,
                  rng: np.random.Generator) -> str:
    n_emotion = min(params.emotion_words_per_comment, params.comment_length)
    tokens = list(rng.choice(vocab.neutral, size=params.comment_length - n_emotion))
    emotion_pool = vocab.positive if polarity > 0 else vocab.negative
    for word in rng.choice(emotion_pool, size=n_emotion):
        tokens.insert(int(rng.integers(0, len(tokens) + 1)), str(word))
    return " ".join(str(t) for t in tokens)


def generate_synthetic(n_records: int, seed: int,
                       params: Optional[SyntheticParams] = None) -> List[NewsRecord]:
    """
    Generates a labeled corpus whose only class signal is the temporal order of comment emotion.
    News texts and neutral comment tokens come from one shared vocabulary, and both classes carry
    the same number of positive and negative comments, so order-invariant statistics match.

    Args:
        n_records (int): Number of records; even and at least 20.
        seed (int): Generator seed; equal seeds give identical corpora.
        params (Optional[SyntheticParams]): Corpus shape.

    Returns:
        List[NewsRecord]: Half fake, half true records with time-sorted comments.

    Raises:
        ConfigError: If n_records is odd or below 20, or true_flip_rate is outside [0, 0.5).
    """
    if n_records < 20 or n_records % 2:
        raise ConfigError(f"n_records must be even and >= 20, got {n_records}")
    params = params or SyntheticParams()
    if not 0.0 <= params.true_flip_rate < 0.5:
        raise ConfigError(f"true_flip_rate must be in [0, 0.5), got {params.true_flip_rate}")
    vocab = synthetic_vocabulary(params)
    rng = np.random.default_rng(seed)

    labels = rng.permutation([FAKE] * (n_records // 2) + [TRUE] * (n_records // 2))
    records = []
    for i, label in enumerate(labels):
        label = int(label)
        news = " ".join(str(t) for t in rng.choice(vocab.neutral, size=params.news_length))
        gaps = 1 + rng.integers(0, 2 * params.mean_gap_seconds, size=params.comments_per_record)
        timestamps = params.start_time + np.cumsum(gaps)
        comments = [
            (_comment_text(polarity, vocab, params, rng), int(ts), j)
            for j, (polarity, ts) in enumerate(zip(comment_polarities(label, params.comments_per_record, rng,
                                                                    params.true_flip_rate),
                                                   timestamps))
        ]
        record, _ = make_record(f"syn-{i:05d}", news, comments, label)
        records.append(record)

    logger.info(f"✅ Generated {n_records} synthetic records (seed={seed})")
    return records


def write_synthetic_resources(directory: Union[str, Path], params: Optional[SyntheticParams] = None,
                              seed: int = 0) -> SyntheticResourcePaths:
    """
    Writes the lexicon directory, embedding file and synonym dictionary matching `generate_synthetic`.
    Positive words fall in the "joy" category with polarity +1, negative words in "anger" with
    polarity −1; both share one intensity so only the sign distinguishes them.

    Args:
        directory (Union[str, Path]): Output directory.
        params (Optional[SyntheticParams]): Corpus shape (vocabulary sizes and vector width).
        seed (int): Seed for the random embedding vectors.

    Returns:
        SyntheticResourcePaths: Locations of the three resources.
    """
    params = params or SyntheticParams()
    vocab = synthetic_vocabulary(params)
    directory = Path(directory)
    lexicon_dir = directory / "lexicon"
    lexicon_dir.mkdir(parents=True, exist_ok=True)

    emotion_words = [(w, POSITIVE_CATEGORY, 1.0) for w in vocab.positive] + \
                    [(w, NEGATIVE_CATEGORY, -1.0) for w in vocab.negative]
    (lexicon_dir / "categories.tsv").write_text(
        "".join(f"{w}\t{category}\n" for w, category, _ in emotion_words), encoding="utf-8")
    (lexicon_dir / "intensity.tsv").write_text(
        "".join(f"{w}\t0.8\n" for w, _, _ in emotion_words), encoding="utf-8")
    (lexicon_dir / "polarity.tsv").write_text(
        "".join(f"{w}\t{polarity}\n" for w, _, polarity in emotion_words), encoding="utf-8")
    (lexicon_dir / "negation.txt").write_text("\n".join(NEGATION_WORDS) + "\n", encoding="utf-8")
    (lexicon_dir / "pronouns.txt").write_text("\n".join(PRONOUNS) + "\n", encoding="utf-8")
    (lexicon_dir / "emoticons.txt").write_text("\n".join(EMOTICONS) + "\n", encoding="utf-8")

    rng = np.random.default_rng(seed)
    embeddings_path = directory / "embeddings.txt"
    with open(embeddings_path, "w", encoding="utf-8") as f:
        for token in vocab.all_tokens:
            vector = rng.normal(0.0, 1.0, size=params.vector_dim)
            f.write(token + " " + " ".join(f"{v:.6f}" for v in vector) + "\n")

    synonyms_path = directory / "synonyms.tsv"
    n = len(vocab.neutral)
    with open(synonyms_path, "w", encoding="utf-8") as f:
        for i, word in enumerate(vocab.neutral):
            f.write(f"{word}\t{vocab.neutral[(i + 1) % n]},{vocab.neutral[(i + 2) % n]}\n")

    logger.info(f"💾 Wrote synthetic lexicon, embeddings and synonyms to {directory}")
    return SyntheticResourcePaths(embeddings_path=embeddings_path, lexicon_dir=lexicon_dir,
                                  synonyms_path=synonyms_path)
