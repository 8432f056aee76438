from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from config.config import RunConfig
from processors.dataset_processor import NewsRecord, make_record
from processors.resource_loader import EmbeddingTable, Resources, load_resources
from processors.synthetic import SyntheticResourcePaths, write_synthetic_resources
from src.core.network import PreparedRecord

EMBEDDINGS = {
    "cat": (1.0, 0.0, 0.0, 0.0),
    "dog": (0.9, 0.1, 0.0, 0.0),
    "car": (0.0, 1.0, 0.0, 0.0),
    "good": (0.0, 0.0, 1.0, 0.0),
    "fine": (0.0, 0.0, 0.9, 0.1),
    "day": (0.0, 0.0, 0.0, 1.0),
    "a": (0.5, 0.5, 0.0, 0.0),
    "the": (0.3, 0.3, 0.3, 0.3),
    "news": (0.1, 0.2, 0.3, 0.4),
    "happy": (0.2, 0.0, 0.1, 0.0),
    "angry": (0.0, 0.3, 0.0, 0.2),
}


@pytest.fixture(scope="session")
def lexicon_dir(tmp_path_factory) -> Path:
    directory = tmp_path_factory.mktemp("lexicon")
    (directory / "categories.tsv").write_text(
        "happy\tjoy\nglad\tjoy\nangry\tanger\nmad\tanger\n", encoding="utf-8")
    (directory / "intensity.tsv").write_text("happy\t0.8\nangry\t0.6\n", encoding="utf-8")
    (directory / "polarity.tsv").write_text(
        "happy\t1.0\nglad\t0.5\nangry\t-1.0\nmad\t-0.5\n", encoding="utf-8")
    (directory / "negation.txt").write_text("not\nnever\n", encoding="utf-8")
    (directory / "pronouns.txt").write_text("i\nyou\nwe\n", encoding="utf-8")
    (directory / "emoticons.txt").write_text(":)\n:(\n", encoding="utf-8")
    return directory


@pytest.fixture(scope="session")
def embeddings_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("embeddings") / "vectors.txt"
    path.write_text("".join(f"{token} {' '.join(str(v) for v in vector)}\n"
                            for token, vector in EMBEDDINGS.items()), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def synonyms_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("synonyms") / "synonyms.tsv"
    path.write_text("good\tfine\ncar\tautomobile,motor car\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def resources(embeddings_path, lexicon_dir, synonyms_path) -> Resources:
    return load_resources(embeddings_path, lexicon_dir, synonyms_path)


@pytest.fixture(scope="session")
def synthetic_paths(tmp_path_factory) -> SyntheticResourcePaths:
    return write_synthetic_resources(tmp_path_factory.mktemp("synthetic"), seed=0)


@pytest.fixture(scope="session")
def synthetic_resources(synthetic_paths) -> Resources:
    return load_resources(synthetic_paths.embeddings_path, synthetic_paths.lexicon_dir,
                          synthetic_paths.synonyms_path)


@pytest.fixture
def sample_records() -> List[NewsRecord]:
    records = []
    for i in range(10):
        label = i % 2
        comments = [(f"a good day for the cat {j}, i am {'happy' if j % 2 == 0 else 'angry'}!",
                     100 + 10 * j, j) for j in range(3)]
        record, _ = make_record(f"r{i}", "the news about a car", comments, label)
        records.append(record)
    return records


@pytest.fixture
def make_config(tmp_path) -> Callable[..., RunConfig]:
    """Factory for small, quiet run configurations; keyword arguments are config keys"""

    def factory(**values) -> RunConfig:
        run_config = RunConfig()
        run_config.set_value("output_dir", str(tmp_path / "run"))
        run_config.set_value("progress", False)
        for key, value in values.items():
            run_config.set_value(key, value)
        run_config.validate()
        return run_config

    return factory


def random_table(rng: np.random.Generator, size: int, d_g: int) -> EmbeddingTable:
    vectors = np.vstack([np.zeros((1, d_g)), rng.normal(size=(size - 1, d_g))])
    return EmbeddingTable(vocabulary={f"w{i}": i for i in range(1, size)}, vectors=vectors)


def random_prepared(rng: np.random.Generator, table_size: int, d: int, news_len: int,
                    comment_lengths: List[int], label: int = 1, record_id: str = "x") -> PreparedRecord:
    """A prepared record with random token ids and random emotion inputs"""
    M = len(comment_lengths)
    return PreparedRecord(
        record_id=record_id,
        news_ids=rng.integers(1, table_size, size=news_len),
        comment_ids=tuple(rng.integers(1, table_size, size=n) for n in comment_lengths),
        E_news=rng.normal(size=d),
        E_C=rng.normal(size=(M, d)),
        E_dual=rng.normal(size=5 * d),
        timestamps=tuple(range(M)),
        label=label,
    )
