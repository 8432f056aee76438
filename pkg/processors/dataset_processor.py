import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from sklearn.model_selection import StratifiedKFold, train_test_split

from src.core.errors import DataError

FAKE = 1
TRUE = 0
TWITTER_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"
RUMOUREVAL_LABELS = {"false": FAKE, "true": TRUE, "unverified": None}


@dataclass(frozen=True)
class Comment:
    """One time-stamped comment under a news piece"""
    text: str
    timestamp: int
    source_order: int


@dataclass(frozen=True)
class NewsRecord:
    """A news text, its comments in (timestamp, source_order) order and an optional label (1 = fake)"""
    id: str
    news_text: str
    comments: Tuple[Comment, ...] = ()
    label: Optional[int] = None

    @property
    def is_labeled(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation/test partition of labeled records"""
    train: Tuple[NewsRecord, ...]
    validation: Tuple[NewsRecord, ...]
    test: Tuple[NewsRecord, ...]
    fold_id: Optional[int] = None

    def manifest(self) -> Dict[str, Any]:
        return {
            "fold": self.fold_id,
            "train": [r.id for r in self.train],
            "validation": [r.id for r in self.validation],
            "test": [r.id for r in self.test],
        }


@dataclass(frozen=True)
class RatioSplit:
    train: float
    validation: float
    test: float


@dataclass(frozen=True)
class KFoldSplit:
    k: int


@dataclass
class LoadReport:
    """Counters collected while loading one dataset file"""
    loaded: int = 0
    skipped_malformed: int = 0
    rejected_empty_news: int = 0
    dropped_comments: int = 0
    unlabeled: int = 0
    messages: List[str] = field(default_factory=list)


def make_record(record_id: str, news_text: str, comments: Iterable[Tuple[str, int, int]],
                label: Optional[int]) -> Tuple[Optional[NewsRecord], int]:
    """
    Builds a NewsRecord from raw parts, dropping blank comments and sorting the rest.

    Args:
        record_id (str): Record identifier.
        news_text (str): News text.
        comments (Iterable[Tuple[str, int, int]]): (text, timestamp, source_order) triples.
        label (Optional[int]): 1 (fake), 0 (true) or None.

    Returns:
        Tuple[Optional[NewsRecord], int]: The record (None if the news text is blank) and the number of dropped comments.
    """
    comments = list(comments)
    kept = [Comment(text=text, timestamp=int(ts), source_order=int(order))
            for text, ts, order in comments if text and text.strip()]
    dropped = len(comments) - len(kept)
    if not news_text or not news_text.strip():
        return None, dropped
    kept.sort(key=lambda c: (c.timestamp, c.source_order))
    return NewsRecord(id=str(record_id), news_text=news_text, comments=tuple(kept), label=label), dropped


def record_to_dict(record: NewsRecord) -> Dict[str, Any]:
    """Serializes a record to the canonical JSONL schema (with the optional per-comment order key)"""
    return {
        "id": record.id,
        "news": record.news_text,
        "label": record.label,
        "comments": [{"text": c.text, "ts": c.timestamp, "order": c.source_order}
                     for c in record.comments],
    }


class DatasetProcessor:
    """
    Loads fake-news datasets into NewsRecord lists and writes the canonical JSONL format.
    RumourEval-19 and Weibo-16 layouts are adapters onto the canonical record schema.

    Per-record problems are counted in `last_report` and logged as warnings; only unreadable
    files and datasets without any usable record are fatal.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.last_report = LoadReport()

    def load(self, path: Union[str, Path], fmt: str = "jsonl",
             max_records: Optional[int] = None) -> List[NewsRecord]:
        """
        Loads a dataset in the declared format and returns its usable records.
        Comments are sorted by (timestamp, source_order) and blank comments are dropped.

        Args:
            path (Union[str, Path]): JSONL file, or dataset directory for the adapter formats.
            fmt (str): "jsonl", "rumoureval19" or "weibo16".
            max_records (Optional[int]): Stop after this many usable records.

        Returns:
            List[NewsRecord]: The loaded records in file order.

        Raises:
            OSError: If the file or directory cannot be read.
            DataError: If no usable record was found or the format is unknown.
        """
        path = Path(path)
        self.last_report = LoadReport()
        readers = {
            "jsonl": self._read_jsonl,
            "rumoureval19": self._read_rumoureval19,
            "weibo16": self._read_weibo16,
        }
        if fmt not in readers:
            raise DataError(f"Unknown dataset format '{fmt}'")
        if not path.exists():
            raise FileNotFoundError(f"Dataset not found: {path}")

        self.logger.info(f"📄 Loading {fmt} dataset from {path}")
        records: List[NewsRecord] = []
        seen_ids = set()
        for raw in readers[fmt](path):
            if raw is None:
                continue
            record, dropped = raw
            self.last_report.dropped_comments += dropped
            if record is None:
                self.last_report.rejected_empty_news += 1
                self.logger.warning("⚠️ Rejected record with empty news text")
                continue
            if record.id in seen_ids:
                self._skip(f"duplicate record id '{record.id}'")
                continue
            seen_ids.add(record.id)
            if record.label is None:
                self.last_report.unlabeled += 1
            records.append(record)
            if max_records is not None and len(records) >= max_records:
                break

        report = self.last_report
        report.loaded = len(records)
        self.logger.info(f"📊 Loaded {report.loaded} records ({report.skipped_malformed} skipped, "
                         f"{report.dropped_comments} empty comments dropped, {report.unlabeled} unlabeled)")
        if not records:
            raise DataError(f"No usable records in {path}")
        return records

    def _skip(self, message: str):
        self.last_report.skipped_malformed += 1
        self.last_report.messages.append(message)
        self.logger.warning(f"⚠️ Skipped {message}")

    def _read_jsonl(self, path: Path):
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield self._parse_canonical(json.loads(line))
                except (ValueError, TypeError, KeyError) as e:
                    self._skip(f"malformed record at {path}:{line_number} ({e})")
                    yield None

    @staticmethod
    def _parse_canonical(obj: Dict[str, Any]) -> Tuple[Optional[NewsRecord], int]:
        if not isinstance(obj, dict):
            raise TypeError("record is not an object")
        record_id, news = obj["id"], obj["news"]
        if not isinstance(record_id, str) or not isinstance(news, str):
            raise TypeError("'id' and 'news' must be strings")
        label = obj.get("label")
        if label is not None and (type(label) is not int or label not in (0, 1)):
            raise ValueError(f"label must be 0, 1 or null, got {label!r}")
        raw_comments = obj.get("comments") or []
        if not isinstance(raw_comments, list):
            raise TypeError("'comments' must be a list")

        comments = []
        for position, comment in enumerate(raw_comments):
            text, ts = comment["text"], comment["ts"]
            if not isinstance(text, str) or isinstance(ts, bool) or not isinstance(ts, int):
                raise TypeError("comment needs a string 'text' and an integer 'ts'")
            order = comment.get("order", position)
            comments.append((text, ts, order))
        return make_record(record_id, news, comments, label)

    def _read_rumoureval19(self, root: Path):
        labels: Dict[str, Optional[int]] = {}
        for key_file in sorted(root.rglob("*key*.json")):
            with open(key_file, "r", encoding="utf-8") as f:
                data = json.load(f)
            verdicts = data.get("subtaskbenglish", data) if isinstance(data, dict) else {}
            for thread_id, verdict in verdicts.items():
                labels[str(thread_id)] = RUMOUREVAL_LABELS.get(str(verdict).lower())

        for source_dir in sorted(root.rglob("source-tweet")):
            thread_dir = source_dir.parent
            try:
                source_files = sorted(source_dir.glob("*.json"))
                if not source_files:
                    raise ValueError("no source post")
                source = self._read_post(source_files[0])
                comments = []
                reply_dir = thread_dir / "replies"
                reply_files = sorted(reply_dir.glob("*.json")) if reply_dir.exists() else []
                for order, reply_file in enumerate(reply_files):
                    reply = self._read_post(reply_file)
                    comments.append((reply["text"], reply["ts"], order))
                yield make_record(thread_dir.name, source["text"], comments, labels.get(thread_dir.name))
            except (ValueError, KeyError, TypeError) as e:
                self._skip(f"malformed thread {thread_dir} ({e})")
                yield None

    @staticmethod
    def _read_post(path: Path) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            post = json.load(f)
        if "data" in post and isinstance(post["data"], dict):
            children = post["data"].get("children") or [{"data": post["data"]}]
            post = children[0].get("data", {})
        text = post.get("full_text") or post.get("text") or post.get("body") or post.get("title") or ""
        if "created_at" in post and isinstance(post["created_at"], str):
            ts = int(datetime.strptime(post["created_at"], TWITTER_TIME_FORMAT).timestamp())
        else:
            ts = int(post.get("created_utc", post.get("created", 0)))
        return {"text": text, "ts": ts}

    def _read_weibo16(self, root: Path):
        index_file = root / "Weibo.txt"
        posts_dir = root / "Weibo"
        with open(index_file, "r", encoding="utf-8") as f:
            lines = [line for line in f if line.strip()]
        for line_number, line in enumerate(lines, start=1):
            try:
                fields = dict(part.split(":", 1) for part in line.split() if ":" in part)
                eid, label = fields["eid"], int(fields["label"])
                if label not in (0, 1):
                    raise ValueError(f"label {label}")
                with open(posts_dir / f"{eid}.json", "r", encoding="utf-8") as f:
                    posts = json.load(f)
                if not isinstance(posts, list) or not posts:
                    raise ValueError("empty post list")
                comments = [(post.get("text", ""), int(post.get("t", 0)), order)
                            for order, post in enumerate(posts[1:])]
                yield make_record(eid, posts[0].get("text", ""), comments, label)
            except (ValueError, KeyError, TypeError, FileNotFoundError) as e:
                self._skip(f"malformed event at {index_file}:{line_number} ({e})")
                yield None

    def write_jsonl(self, records: Iterable[NewsRecord], path: Union[str, Path]) -> Path:
        """
        Writes records in the canonical JSONL schema (UTF-8, one record per line).

        Args:
            records (Iterable[NewsRecord]): Records to write.
            path (Union[str, Path]): Output file.

        Returns:
            Path: The written file.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
                count += 1
        self.logger.info(f"💾 Wrote {count} records to {path}")
        return path


def load_dataset(path: Union[str, Path], fmt: str = "jsonl",
                 max_records: Optional[int] = None) -> List[NewsRecord]:
    """Loads a dataset with a fresh DatasetProcessor; see DatasetProcessor.load"""
    return DatasetProcessor().load(path, fmt, max_records)


def make_splits(records: List[NewsRecord], scheme: Union[RatioSplit, KFoldSplit],
                seed: int) -> List[DatasetSplit]:
    """
    Splits labeled records into stratified train/validation/test partitions.
    A ratio scheme yields one split; a k-fold scheme yields k splits where fold i is the
    test set, fold (i+1) mod k the validation set and the remaining folds the training set.

    Args:
        records (List[NewsRecord]): Labeled records.
        scheme (Union[RatioSplit, KFoldSplit]): Splitting scheme.
        seed (int): Random seed; identical inputs and seed give identical splits.

    Returns:
        List[DatasetSplit]: One split for a ratio scheme, k for k-fold.

    Raises:
        DataError: On unlabeled records, too few records, or ratios that do not sum to 1.
    """
    unlabeled = [r.id for r in records if r.label is None]
    if unlabeled:
        raise DataError(f"Cannot split unlabeled records: {unlabeled[:5]}")
    labels = np.array([r.label for r in records])
    indices = np.arange(len(records))

    def pick(idx: Iterable[int]) -> Tuple[NewsRecord, ...]:
        return tuple(records[i] for i in sorted(idx))

    try:
        if isinstance(scheme, KFoldSplit):
            if scheme.k < 2:
                raise DataError("k-fold splitting needs k >= 2")
            if len(records) < scheme.k:
                raise DataError(f"{len(records)} records are fewer than {scheme.k} folds")
            splitter = StratifiedKFold(n_splits=scheme.k, shuffle=True, random_state=seed)
            folds = [test for _, test in splitter.split(indices, labels)]
            splits = []
            for i, test in enumerate(folds):
                # two folds leave no room for a validation fold
                validation = folds[(i + 1) % scheme.k] if scheme.k > 2 else np.array([], dtype=int)
                train = np.setdiff1d(indices, np.concatenate([test, validation]))
                splits.append(DatasetSplit(pick(train), pick(validation), pick(test), fold_id=i))
            return splits

        ratios = (scheme.train, scheme.validation, scheme.test)
        if abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
            raise DataError(f"Split ratios must be non-negative and sum to 1, got {ratios}")
        n = len(records)
        n_test = int(round(scheme.test * n))
        n_val = int(round(scheme.validation * n))
        rest, test = indices, np.array([], dtype=int)
        if n_test:
            rest, test = train_test_split(indices, test_size=n_test, stratify=labels, random_state=seed)
        train, validation = rest, np.array([], dtype=int)
        if n_val:
            train, validation = train_test_split(rest, test_size=n_val, stratify=labels[rest],
                                                 random_state=seed)
        return [DatasetSplit(pick(train), pick(validation), pick(test))]
    except ValueError as e:
        raise DataError(f"Cannot split {len(records)} records: {e}") from e
