import re
import unicodedata
from typing import Iterable, List, Optional, Tuple

HAN_CHARS = r"\u3400-\u4dbf\u4e00-\u9fff\uf900-\ufaff"
HAN_PATTERN = f"[{HAN_CHARS}]"
WORD_PATTERN = rf"[^\W{HAN_CHARS}]+(?:['’][^\W{HAN_CHARS}]+)*"
SYMBOL_PATTERN = r"[^\w\s]"


def normalize(text: str) -> str:
    """NFKC-normalizes and lowercases text; the single normalization path for tokens and lexicon words"""
    return unicodedata.normalize("NFKC", text).lower()


def is_word(token: str) -> bool:
    """True for alphanumeric and Han tokens (not punctuation, symbols or emoticons)"""
    return bool(re.fullmatch(WORD_PATTERN, token) or re.fullmatch(f"{HAN_PATTERN}+", token))


def is_han_word(token: str) -> bool:
    return len(token) > 1 and bool(re.fullmatch(f"{HAN_PATTERN}+", token))


class Tokenizer:
    """
    Unicode-aware lowercasing tokenizer that splits text into words and single punctuation marks.
    Emoticon patterns from the lexicon are matched first so they survive as single tokens.

    Han script has no spaces, so Han characters are split one by one and adjacent characters
    are then merged by greedy longest match against the known multi-character `words`
    (lexicon entries and embedding vocabulary).

    The same instance feeds embedding lookup, lexicon matching and substitution so that
    features and augmentations see identical tokens.
    """

    def __init__(self, emoticons: Optional[Iterable[str]] = None, words: Optional[Iterable[str]] = None):
        self.emoticons = tuple(sorted({normalize(e) for e in (emoticons or ()) if e.strip()},
                                      key=len, reverse=True))
        self.words = frozenset(w for w in (normalize(w) for w in (words or ())) if is_han_word(w))
        self.max_word_len = max((len(w) for w in self.words), default=1)
        alternatives = [re.escape(e) for e in self.emoticons] + [HAN_PATTERN, WORD_PATTERN, SYMBOL_PATTERN]
        self._pattern = re.compile("|".join(alternatives))
        self._han = re.compile(HAN_PATTERN)

    def _spans(self, normalized: str) -> List[Tuple[int, int]]:
        spans = [match.span() for match in self._pattern.finditer(normalized)]
        if not self.words:
            return spans

        merged: List[Tuple[int, int]] = []
        i = 0
        while i < len(spans):
            start, end = spans[i]
            j = i + 1
            if self._han.fullmatch(normalized[start:end]):
                # maximal run of adjacent single Han characters
                run = i
                while (run + 1 < len(spans) and spans[run + 1][0] == spans[run][1]
                       and self._han.fullmatch(normalized[slice(*spans[run + 1])])):
                    run += 1
                for size in range(min(self.max_word_len, run - i + 1), 1, -1):
                    if normalized[start:spans[i + size - 1][1]] in self.words:
                        end, j = spans[i + size - 1][1], i + size
                        break
            merged.append((start, end))
            i = j
        return merged

    def tokenize(self, text: str) -> List[str]:
        """
        Splits text into normalized tokens.

        Args:
            text (str): Raw text.

        Returns:
            List[str]: Lowercased tokens in reading order.
        """
        normalized = normalize(text)
        return [normalized[start:end] for start, end in self._spans(normalized)]

    def spans(self, text: str) -> Tuple[str, List[Tuple[int, int]]]:
        """
        Tokenizes and returns character spans into the normalized text.
        Used by substitution to replace tokens in place without touching the surrounding spacing.

        Args:
            text (str): Raw text.

        Returns:
            Tuple[str, List[Tuple[int, int]]]: The normalized text and one (start, end) span per token.
        """
        normalized = normalize(text)
        return normalized, self._spans(normalized)

    def with_words(self, words: Iterable[str]) -> "Tokenizer":
        """Copy that additionally merges the given multi-character words"""
        return Tokenizer(self.emoticons, self.words | frozenset(words))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Tokenizer) and self.emoticons == other.emoticons and self.words == other.words

    def __hash__(self) -> int:
        return hash((self.emoticons, len(self.words)))
