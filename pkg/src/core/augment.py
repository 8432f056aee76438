"""
Unlabeled text variants for the enhancement round: token substitution (synonym dictionary,
embedding neighbors, masked-LM predictions) and back-translation through a pivot language.
"""
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.config import FALLBACK_STOP_WORDS, SUBSTITUTION_STRATEGIES, AugmentConfig
from processors.dataset_processor import NewsRecord, make_record
from processors.resource_loader import Resources, load_stop_words
from processors.text_processor import is_word
from src.core.errors import ConfigError, ResourceError, TranslationError, TranslationFailed
from src.core.translation import TranslatorClient

logger = logging.getLogger(__name__)

MASK_TOKEN = "[MASK]"


class MaskedLMProvider(Protocol):
    """Ranks fillers for the masked slot `position` of a token list (best first)"""

    def predict(self, tokens: Sequence[str], position: int, k: int) -> List[str]:
        ...


@dataclass(frozen=True)
class AugmentedRecord:
    """An unlabeled variant of a labeled record; `record.label` is always None"""
    parent_id: str
    record: NewsRecord
    strategy: str
    edit_count: int
    pivot_lang: Optional[str] = None

    @property
    def variant_text(self) -> Tuple[str, Tuple[str, ...]]:
        return self.record.news_text, tuple(c.text for c in self.record.comments)


@dataclass(frozen=True)
class AugmentPlan:
    """(strategy, multiplier) entries plus the substitution rate and the text scope"""
    entries: Tuple[Tuple[str, int], ...]
    rate: float = 0.1
    scope: str = "both"

    @classmethod
    def from_config(cls, config: AugmentConfig) -> "AugmentPlan":
        return cls(entries=tuple(tuple(e) for e in config.plan), rate=config.rate, scope=config.scope)


@dataclass
class AugmentReport:
    """Counters of one augmentation pass"""
    variants: Counter = field(default_factory=Counter)
    unchanged: Counter = field(default_factory=Counter)
    translation_skipped: int = 0

    @property
    def total(self) -> int:
        return sum(self.variants.values())

    def to_dict(self) -> Dict:
        return {"variants": dict(self.variants), "unchanged": dict(self.unchanged),
                "translation_skipped": self.translation_skipped}


class Substituter:
    """
    One-for-one token replacement. Stop words, punctuation, emoticons and lexicon emotion
    words are never replaced; a token without a candidate is skipped.
    """

    def __init__(self, resources: Resources, stop_words: Sequence[str] = (), top_k: int = 10,
                 masked_lm: Optional[MaskedLMProvider] = None):
        self.resources = resources
        self.tokenizer = resources.tokenizer
        self.stop_words = frozenset(stop_words)
        self.emotion_words = resources.lexicon.emotion_words
        self.top_k = top_k
        self.masked_lm = masked_lm

    def is_eligible(self, token: str) -> bool:
        return is_word(token) and token not in self.stop_words and token not in self.emotion_words

    def _admissible(self, candidate: str, token: str) -> bool:
        return candidate != token and is_word(candidate) and candidate not in self.emotion_words

    def candidate(self, tokens: List[str], position: int, strategy: str,
                  rng: np.random.Generator) -> Optional[str]:
        token = tokens[position]
        if strategy == "synonym":
            options = [c for c in self.resources.synonyms.candidates(token) if self._admissible(c, token)]
            return options[int(rng.integers(len(options)))] if options else None
        if strategy == "masked_lm" and self.masked_lm is not None:
            masked = tokens[:position] + [MASK_TOKEN] + tokens[position + 1:]
            ranked = self.masked_lm.predict(masked, position, self.top_k)
        else:
            ranked = self.resources.embeddings.nearest_neighbors(token, self.top_k)
        return next((c for c in ranked if self._admissible(c, token)), None)

    def substitute(self, text: str, strategy: str, rate: float,
                   rng: np.random.Generator) -> Tuple[str, int]:
        """
        Replaces up to ⌈rate × eligible⌉ tokens chosen in random order.
        A text with no edit is returned unchanged; an edited text comes back in normalized form.

        Args:
            text (str): Input text.
            strategy (str): "synonym", "embedding" or "masked_lm".
            rate (float): Fraction of eligible tokens to replace, in (0, 0.3].
            rng (np.random.Generator): Source of the replacement order.

        Returns:
            Tuple[str, int]: The new text and its edit count.
        """
        if strategy not in SUBSTITUTION_STRATEGIES:
            raise ConfigError(f"'{strategy}' is not a substitution strategy")
        if not 0 < rate <= 0.3:
            raise ConfigError(f"Substitution rate must be in (0, 0.3], got {rate}")
        if not text or not text.strip():
            return text, 0
        if strategy == "synonym" and not self.resources.synonyms.synonyms:
            raise ResourceError("Synonym substitution needs a synonym dictionary (synonyms_path)")

        normalized, spans = self.tokenizer.spans(text)
        tokens = [normalized[start:end] for start, end in spans]
        eligible = [i for i, token in enumerate(tokens) if self.is_eligible(token)]
        cap = math.ceil(round(rate * len(eligible), 9))

        replacements: Dict[int, str] = {}
        for position in rng.permutation(eligible) if eligible else []:
            if len(replacements) >= cap:
                break
            new = self.candidate(tokens, int(position), strategy, rng)
            if new is not None:
                replacements[int(position)] = new

        if not replacements:
            return text, 0
        pieces, cursor = [], 0
        for i, (start, end) in enumerate(spans):
            if i in replacements:
                pieces.append(normalized[cursor:start])
                pieces.append(replacements[i])
                cursor = end
        pieces.append(normalized[cursor:])
        return "".join(pieces), len(replacements)


def substitute(text: str, strategy: str, rate: float, seed: int, resources: Resources,
               stop_words: Sequence[str] = (), top_k: int = 10,
               masked_lm: Optional[MaskedLMProvider] = None) -> Tuple[str, int]:
    """Seeded one-shot substitution; see Substituter.substitute"""
    substituter = Substituter(resources, stop_words, top_k, masked_lm)
    return substituter.substitute(text, strategy, rate, np.random.default_rng(seed))


def back_translate(text: str, translator: TranslatorClient, pivot_lang: str, source_lang: str = "en",
                   max_attempts: int = 3, backoff_seconds: float = 1.0,
                   sleep: Callable[[float], None] = time.sleep) -> str:
    """
    Round-trips text through a pivot language.
    Failed calls are retried with exponential backoff.

    Args:
        text (str): Source text.
        translator (TranslatorClient): Translation client.
        pivot_lang (str): Pivot language code.
        source_lang (str): Language of the text.
        max_attempts (int): Attempts before giving up.
        backoff_seconds (float): First retry delay; doubled after every failure.
        sleep (Callable[[float], None]): Delay function.

    Returns:
        str: The back-translated text.

    Raises:
        TranslationFailed: When every attempt failed.
    """
    last_error: Optional[Exception] = None
    for attempt in range(max_attempts):
        try:
            pivot = translator.translate(text, source_lang, pivot_lang)
            return translator.translate(pivot, pivot_lang, source_lang)
        except TranslationError as e:
            last_error = e
            logger.warning(f"⚠️ Back-translation via '{pivot_lang}' failed (attempt {attempt + 1}/{max_attempts}): {e}")
            if attempt + 1 < max_attempts:
                sleep(backoff_seconds * 2 ** attempt)
    raise TranslationFailed(f"Back-translation via '{pivot_lang}' failed after {max_attempts} attempts") from last_error


class Augmenter:
    """
    Applies an augmentation plan to labeled records.

    Each variant draws from its own generator seeded with (seed, record index, plan entry,
    copy index), so output depends only on records, plan, seed and resources. Variants never
    carry a label.
    """

    def __init__(self, resources: Resources, config: Optional[AugmentConfig] = None,
                 translator: Optional[TranslatorClient] = None,
                 masked_lm: Optional[MaskedLMProvider] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.logger = logging.getLogger(__name__)
        self.config = config or AugmentConfig()
        stop_words = self.config.stop_words or load_stop_words(
            self.config.stop_words_lang, self.config.stop_words_path, FALLBACK_STOP_WORDS)
        self.substituter = Substituter(resources, stop_words, self.config.embedding_top_k, masked_lm)
        self.translator = translator
        self.sleep = sleep
        self.last_report = AugmentReport()
        self.masked_lm = masked_lm

    def _texts(self, record: NewsRecord, scope: str) -> Tuple[bool, bool]:
        return scope in ("news", "both"), scope in ("comments", "both") and bool(record.comments)

    def _rebuild(self, record: NewsRecord, variant_id: str, news: str,
                 comments: Sequence[str]) -> Optional[NewsRecord]:
        triples = [(text, c.timestamp, c.source_order) for text, c in zip(comments, record.comments)]
        return make_record(variant_id, news, triples, None)[0]

    def augment_record(self, record: NewsRecord, strategy: str, plan: AugmentPlan, seed: int,
                       record_index: int, entry_index: int, copy_index: int) -> Optional[AugmentedRecord]:
        """
        Builds one variant of a record, or None when nothing changed or translation failed.
        """
        variant_id = f"{record.id}#{entry_index}-{strategy}-{copy_index}"
        do_news, do_comments = self._texts(record, plan.scope)
        news = record.news_text
        comments = [c.text for c in record.comments]

        if strategy == "back_translation":
            if self.translator is None:
                raise ResourceError("Back-translation needs a translator client")
            pivot = self.config.pivot_langs[copy_index % len(self.config.pivot_langs)]

            def translate(text: str) -> str:
                return back_translate(text, self.translator, pivot, self.config.source_lang,
                                      self.config.max_attempts, self.config.backoff_seconds, self.sleep)
            try:
                if do_news:
                    news = translate(news)
                if do_comments:
                    comments = [translate(text) for text in comments]
            except TranslationFailed as e:
                self.logger.warning(f"⚠️ Skipping back-translated variant of {record.id}: {e}")
                self.last_report.translation_skipped += 1
                return None
            variant = self._rebuild(record, variant_id, news, comments)
            if variant is None:
                self.last_report.translation_skipped += 1
                return None
            return AugmentedRecord(record.id, variant, strategy, edit_count=0, pivot_lang=pivot)

        rng = np.random.default_rng([seed, record_index, entry_index, copy_index])
        edits = 0
        if do_news:
            news, n = self.substituter.substitute(news, strategy, plan.rate, rng)
            edits += n
        if do_comments:
            for i, text in enumerate(comments):
                comments[i], n = self.substituter.substitute(text, strategy, plan.rate, rng)
                edits += n
        if edits == 0:
            self.last_report.unchanged[strategy] += 1
            return None
        return AugmentedRecord(record.id, self._rebuild(record, variant_id, news, comments), strategy, edits)

    def augment_corpus(self, records: Sequence[NewsRecord], plan: AugmentPlan, seed: int,
                       progress: bool = False) -> List[AugmentedRecord]:
        """
        Emits up to `multiplier` variants per labeled record and plan entry.

        Args:
            records (Sequence[NewsRecord]): Source records; unlabeled ones are ignored.
            plan (AugmentPlan): Strategies, multipliers, rate and scope.
            seed (int): Augmentation seed.
            progress (bool): Show a progress bar.

        Returns:
            List[AugmentedRecord]: Variants in (record, plan entry, copy) order.
        """
        if self.masked_lm is None and any(strategy == "masked_lm" for strategy, _ in plan.entries):
            self.logger.warning("⚠️ No masked-LM provider configured; masked_lm substitutes embedding neighbors instead")
        self.last_report = AugmentReport()
        variants: List[AugmentedRecord] = []
        for record_index, record in enumerate(tqdm(records, desc="augment", disable=not progress)):
            if not record.is_labeled:
                continue
            for entry_index, (strategy, multiplier) in enumerate(plan.entries):
                for copy_index in range(multiplier):
                    variant = self.augment_record(record, strategy, plan, seed,
                                                  record_index, entry_index, copy_index)
                    if variant is not None:
                        variants.append(variant)
                        self.last_report.variants[strategy] += 1

        self.logger.info(f"📊 Generated {len(variants)} variants from {len(records)} records "
                         f"({dict(self.last_report.variants)}, {self.last_report.translation_skipped} translation skips)")
        return variants


def augment_corpus(records: Sequence[NewsRecord], plan: AugmentPlan, seed: int, resources: Resources,
                   config: Optional[AugmentConfig] = None,
                   translator: Optional[TranslatorClient] = None,
                   masked_lm: Optional[MaskedLMProvider] = None) -> List[AugmentedRecord]:
    """Runs a fresh Augmenter over the records; see Augmenter.augment_corpus"""
    return Augmenter(resources, config, translator, masked_lm).augment_corpus(records, plan, seed)
