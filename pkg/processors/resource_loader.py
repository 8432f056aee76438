import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import nltk
import numpy as np
from nltk.corpus import stopwords

from processors.text_processor import Tokenizer, normalize
from src.core.errors import ResourceError

logger = logging.getLogger(__name__)

PAD_ID = 0
LEXICON_FILES = ("categories.tsv", "intensity.tsv", "polarity.tsv",
                 "negation.txt", "pronouns.txt", "emoticons.txt")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """
    Pretrained word vectors with a reserved all-zeros row 0 for padding and unknown tokens.
    """
    vocabulary: Mapping[str, int]
    vectors: np.ndarray

    @property
    def d_g(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def token_id(self, token: str) -> int:
        return self.vocabulary.get(token, PAD_ID)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        """Maps tokens to row indices; unknown tokens map to the zero row"""
        return np.array([self.vocabulary.get(t, PAD_ID) for t in tokens], dtype=np.int64)

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.token_id(token)]

    def nearest_neighbors(self, token: str, k: int) -> List[str]:
        """
        Ranks vocabulary tokens by cosine similarity to the given token.
        The token itself and zero vectors are excluded.

        Args:
            token (str): Query token.
            k (int): Number of neighbors to return.

        Returns:
            List[str]: Up to k tokens, most similar first; empty for unknown tokens.
        """
        row = self.vocabulary.get(token)
        if row is None:
            return []
        norms = np.linalg.norm(self.vectors, axis=1)
        if norms[row] == 0:
            return []
        with np.errstate(divide="ignore", invalid="ignore"):
            similarity = (self.vectors @ self.vectors[row]) / (norms * norms[row])
        similarity[norms == 0] = -np.inf
        similarity[row] = -np.inf
        order = np.argsort(-similarity, kind="stable")
        inverse = self._inverse_vocabulary()
        neighbors = [inverse[i] for i in order[:k] if np.isfinite(similarity[i])]
        return neighbors

    def _inverse_vocabulary(self) -> Dict[int, str]:
        inverse = self.__dict__.get("_inverse")
        if inverse is None:
            inverse = {index: tok for tok, index in self.vocabulary.items()}
            object.__setattr__(self, "_inverse", inverse)
        return inverse

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, EmbeddingTable) and dict(self.vocabulary) == dict(other.vocabulary)
                and np.array_equal(self.vectors, other.vectors))


@dataclass(frozen=True)
class EmotionLexicon:
    """Static emotion resources behind the five emotion sub-features"""
    categories: Tuple[str, ...]
    category_words: Mapping[str, FrozenSet[str]]
    intensity: Mapping[str, float]
    polarity: Mapping[str, float]
    negation_words: FrozenSet[str]
    pronouns: FrozenSet[str]
    emoticons: Tuple[str, ...]

    @property
    def n_cate(self) -> int:
        return len(self.categories)

    @property
    def emotion_words(self) -> FrozenSet[str]:
        """Every word that carries an emotion signal in any lexicon file"""
        words = set(self.intensity) | set(self.polarity)
        for members in self.category_words.values():
            words |= members
        return frozenset(words)

    def categories_of(self, word: str) -> List[int]:
        return [i for i, name in enumerate(self.categories) if word in self.category_words[name]]

    def tokenizer(self, words: Iterable[str] = ()) -> Tokenizer:
        """Tokenizer that keeps emoticons whole and merges known multi-character Han words"""
        known = set(words) | self.emotion_words | self.negation_words | self.pronouns
        return Tokenizer(emoticons=self.emoticons, words=known)


@dataclass(frozen=True)
class SynonymDictionary:
    """word -> ordered synonym candidates"""
    synonyms: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def candidates(self, word: str) -> Tuple[str, ...]:
        return self.synonyms.get(word, ())


@dataclass(frozen=True)
class Resources:
    """Everything loaded once per run and shared read-only across components"""
    embeddings: EmbeddingTable
    lexicon: EmotionLexicon
    tokenizer: Tokenizer
    synonyms: SynonymDictionary = field(default_factory=SynonymDictionary)


def load_embeddings(path: Union[str, Path]) -> EmbeddingTable:
    """
    Loads a plain-text embedding file with one "token v1 ... vd" entry per line.
    Row 0 of the returned table is reserved as the all-zeros OOV/padding row.

    A leading word2vec-style header line ("count dim") is recognised and skipped.
    Duplicate tokens keep their first vector and are reported as warnings.

    Args:
        path (Union[str, Path]): Path to the embedding file (UTF-8).

    Returns:
        EmbeddingTable: The loaded table.

    Raises:
        ResourceError: If the file is empty or vector widths are inconsistent.
    """
    path = Path(path)
    if not path.exists():
        raise ResourceError(f"Embedding file not found: {path}")

    vocabulary: Dict[str, int] = {}
    rows: List[List[float]] = []
    d_g: Optional[int] = None
    duplicates = 0

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if line_number == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                logger.debug(f"Skipping word2vec header in {path}")
                continue

            token = normalize(parts[0])
            try:
                values = [float(v) for v in parts[1:]]
            except ValueError as e:
                raise ResourceError(f"{path}:{line_number}: non-numeric vector component") from e
            if not values:
                raise ResourceError(f"{path}:{line_number}: token without vector")
            if d_g is None:
                d_g = len(values)
            elif len(values) != d_g:
                raise ResourceError(
                    f"{path}:{line_number}: vector width {len(values)} differs from {d_g}"
                )

            if token in vocabulary:
                duplicates += 1
                logger.warning(f"⚠️ Duplicate embedding token '{token}' at {path}:{line_number}, keeping first")
                continue
            vocabulary[token] = len(rows) + 1
            rows.append(values)

    if d_g is None:
        raise ResourceError(f"Embedding file is empty: {path}")

    vectors = np.zeros((len(rows) + 1, d_g), dtype=np.float64)
    vectors[1:] = np.asarray(rows, dtype=np.float64)
    vectors.setflags(write=False)
    logger.info(f"✅ Loaded {len(rows)} embeddings (d_g={d_g}, {duplicates} duplicates) from {path}")
    return EmbeddingTable(vocabulary=vocabulary, vectors=vectors)


def _read_tsv(path: Path) -> List[Tuple[int, str, str]]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ResourceError(f"{path}:{line_number}: expected word<TAB>value")
            entries.append((line_number, normalize(parts[0].strip()), parts[1].strip()))
    return entries


def _read_list(path: Path, normalize_entries: bool = True) -> List[str]:
    with open(path, "r", encoding="utf-8") as f:
        items = [line.strip() for line in f if line.strip() and not line.startswith("#")]
    return [normalize(i) for i in items] if normalize_entries else items


def _read_scores(path: Path, low: float, high: float) -> Dict[str, float]:
    scores: Dict[str, float] = {}
    for line_number, word, raw in _read_tsv(path):
        try:
            value = float(raw)
        except ValueError as e:
            raise ResourceError(f"{path}:{line_number}: score '{raw}' is not a number") from e
        if not low <= value <= high:
            raise ResourceError(f"{path}:{line_number}: score {value} outside [{low}, {high}]")
        scores.setdefault(word, value)
    return scores


def load_lexicon(dir_path: Union[str, Path]) -> EmotionLexicon:
    """
    Loads the emotion lexicon directory (categories, intensity, polarity and marker lists).
    Words are normalized exactly as the tokenizer normalizes tokens.

    Args:
        dir_path (Union[str, Path]): Directory holding the six lexicon files.

    Returns:
        EmotionLexicon: The loaded lexicon.

    Raises:
        ResourceError: If a file is missing, a score is out of range, or an intensity word has no category.
    """
    directory = Path(dir_path)
    for name in LEXICON_FILES:
        if not (directory / name).exists():
            raise ResourceError(f"Lexicon file missing: {directory / name}")

    categories: List[str] = []
    category_words: Dict[str, set] = {}
    for _, word, category in _read_tsv(directory / "categories.tsv"):
        if category not in category_words:
            categories.append(category)
            category_words[category] = set()
        category_words[category].add(word)

    intensity = _read_scores(directory / "intensity.tsv", 0.0, 1.0)
    polarity = _read_scores(directory / "polarity.tsv", -1.0, 1.0)

    categorized = set().union(*category_words.values()) if category_words else set()
    for word in intensity:
        if word not in categorized:
            raise ResourceError(
                f"{directory / 'intensity.tsv'}: word '{word}' has an intensity score but no category"
            )

    lexicon = EmotionLexicon(
        categories=tuple(categories),
        category_words={name: frozenset(words) for name, words in category_words.items()},
        intensity=intensity,
        polarity=polarity,
        negation_words=frozenset(_read_list(directory / "negation.txt")),
        pronouns=frozenset(_read_list(directory / "pronouns.txt")),
        emoticons=tuple(_read_list(directory / "emoticons.txt")),
    )
    logger.info(f"✅ Loaded lexicon with {lexicon.n_cate} categories, {len(intensity)} intensity "
                f"and {len(polarity)} polarity entries from {directory}")
    return lexicon


@lru_cache(maxsize=16)
def load_stop_words(language: str = "english", path: Optional[Union[str, Path]] = None,
                    fallback: Tuple[str, ...] = ()) -> FrozenSet[str]:
    """
    Loads the stop words that substitution never replaces.

    A list file wins over the nltk corpus. The nltk corpus is downloaded once when missing;
    if that fails the given fallback words are used and a warning is logged.

    Args:
        language (str): nltk stop word list, e.g. "english" or "chinese".
        path (Optional[Union[str, Path]]): One word per line, used instead of nltk.
        fallback (Tuple[str, ...]): Words used when the nltk corpus cannot be loaded.

    Returns:
        FrozenSet[str]: Normalized stop words.

    Raises:
        ResourceError: If the list file is missing or nltk has no list for the language.
    """
    if path is not None:
        if not Path(path).exists():
            raise ResourceError(f"Stop word file not found: {path}")
        return frozenset(_read_list(Path(path)))

    for attempt in range(2):
        try:
            return frozenset(normalize(w) for w in stopwords.words(language))
        except LookupError:
            if attempt:
                break
            logger.info("📥 Downloading the nltk stop word corpus")
            if not nltk.download("stopwords", quiet=True):
                break
        except OSError as e:
            raise ResourceError(f"nltk has no stop word list for '{language}'") from e

    backup = frozenset(normalize(w) for w in fallback)
    logger.warning(f"⚠️ nltk stop words unavailable, using {len(backup)} built-in words")
    return backup


def load_synonyms(path: Union[str, Path], tokenizer: Optional[Tokenizer] = None) -> SynonymDictionary:
    """
    Loads a synonym dictionary in word<TAB>synonym,synonym,... format.
    Candidates that do not tokenize to exactly one token are dropped so replacements stay one-for-one.

    Args:
        path (Union[str, Path]): Dictionary file (UTF-8).
        tokenizer (Optional[Tokenizer]): Tokenizer used to check candidates; a plain one by default.

    Returns:
        SynonymDictionary: The loaded dictionary.

    Raises:
        ResourceError: If the file does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise ResourceError(f"Synonym dictionary not found: {path}")
    tokenizer = tokenizer or Tokenizer()

    synonyms: Dict[str, Tuple[str, ...]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2 or not parts[0].strip():
                continue
            word = normalize(parts[0].strip())
            candidates = []
            for part in parts[1:]:
                for candidate in part.split(","):
                    tokens = tokenizer.tokenize(candidate)
                    if len(tokens) == 1 and tokens[0] != word and tokens[0] not in candidates:
                        candidates.append(tokens[0])
            if candidates and word not in synonyms:
                synonyms[word] = tuple(candidates)

    logger.info(f"✅ Loaded {len(synonyms)} synonym entries from {path}")
    return SynonymDictionary(synonyms=synonyms)


def load_resources(embeddings_path: Union[str, Path], lexicon_dir: Union[str, Path],
                   synonyms_path: Optional[Union[str, Path]] = None) -> Resources:
    """
    Loads the embedding table, lexicon and optional synonym dictionary into one bundle.

    Args:
        embeddings_path (Union[str, Path]): Embedding text file.
        lexicon_dir (Union[str, Path]): Lexicon directory.
        synonyms_path (Optional[Union[str, Path]]): Synonym dictionary, if synonym substitution is used.

    Returns:
        Resources: The shared resource bundle.
    """
    embeddings = load_embeddings(embeddings_path)
    lexicon = load_lexicon(lexicon_dir)
    tokenizer = lexicon.tokenizer(embeddings.vocabulary)
    synonyms = load_synonyms(synonyms_path, tokenizer) if synonyms_path else SynonymDictionary()
    return Resources(embeddings=embeddings, lexicon=lexicon,
                     tokenizer=tokenizer, synonyms=synonyms)
