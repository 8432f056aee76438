import json
from collections import Counter

import numpy as np
import pytest

from config.config import SyntheticParams
from processors.dataset_processor import (DatasetProcessor, KFoldSplit, RatioSplit, load_dataset,
                                          make_record, make_splits)
from processors.synthetic import comment_polarities, generate_synthetic
from src.core.emotion import EmotionExtractor, pooled_comment_emotion
from src.core.errors import ConfigError, DataError


def _write_jsonl(path, objects):
    with open(path, "w", encoding="utf-8") as f:
        for obj in objects:
            f.write((obj if isinstance(obj, str) else json.dumps(obj, ensure_ascii=False)) + "\n")
    return path


def test_jsonl_skips_malformed_lines_and_counts_them(tmp_path):
    path = _write_jsonl(tmp_path / "data.jsonl", [
        {"id": "a", "news": "first story", "label": 1, "comments": [{"text": "hm", "ts": 5}]},
        "{not json",
        {"id": "b", "news": "second story", "label": None, "comments": []},
        {"id": "c", "news": "bad label", "label": 3},
    ])
    processor = DatasetProcessor()
    records = processor.load(path)

    assert [r.id for r in records] == ["a", "b"]
    assert processor.last_report.skipped_malformed == 2
    assert processor.last_report.unlabeled == 1
    assert records[1].comments == ()


def test_comments_sort_by_timestamp_then_source_order(tmp_path):
    path = _write_jsonl(tmp_path / "data.jsonl", [{
        "id": "a", "news": "story", "label": 0,
        "comments": [
            {"text": "late", "ts": 30},
            {"text": "tie second", "ts": 10, "order": 5},
            {"text": "tie first", "ts": 10, "order": 2},
        ],
    }])
    record = load_dataset(path)[0]
    assert [c.text for c in record.comments] == ["tie first", "tie second", "late"]


def test_empty_news_rejected_and_blank_comments_dropped(tmp_path):
    path = _write_jsonl(tmp_path / "data.jsonl", [
        {"id": "a", "news": "   ", "label": 1},
        {"id": "b", "news": "story", "label": 1,
         "comments": [{"text": " ", "ts": 1}, {"text": "kept", "ts": 2}]},
    ])
    processor = DatasetProcessor()
    records = processor.load(path)

    assert [r.id for r in records] == ["b"]
    assert [c.text for c in records[0].comments] == ["kept"]
    assert processor.last_report.rejected_empty_news == 1
    assert processor.last_report.dropped_comments == 1


def test_dataset_without_usable_records_fails(tmp_path):
    path = _write_jsonl(tmp_path / "data.jsonl", ["[]", "{broken"])
    with pytest.raises(DataError):
        load_dataset(path)


def test_missing_file_and_unknown_format(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "absent.jsonl")
    with pytest.raises(DataError, match="Unknown dataset format"):
        load_dataset(tmp_path, fmt="csv")


def test_max_records_stops_early(tmp_path):
    path = _write_jsonl(tmp_path / "data.jsonl",
                        [{"id": f"r{i}", "news": "story", "label": i % 2} for i in range(6)])
    assert len(load_dataset(path, max_records=4)) == 4


def test_write_then_load_preserves_records(tmp_path, sample_records):
    processor = DatasetProcessor()
    path = processor.write_jsonl(sample_records, tmp_path / "out" / "all.jsonl")
    assert load_dataset(path) == sample_records


def test_rumoureval_adapter(tmp_path):
    root = tmp_path / "rumoureval"
    thread = root / "charliehebdo" / "t1"
    (thread / "source-tweet").mkdir(parents=True)
    (thread / "replies").mkdir()
    (thread / "source-tweet" / "t1.json").write_text(
        json.dumps({"text": "Breaking news", "created_at": "Wed Jan 07 11:06:08 +0000 2015"}))
    (thread / "replies" / "r1.json").write_text(
        json.dumps({"text": "second reply", "created_at": "Wed Jan 07 11:10:00 +0000 2015"}))
    (thread / "replies" / "r2.json").write_text(
        json.dumps({"text": "first reply", "created_at": "Wed Jan 07 11:07:00 +0000 2015"}))
    (root / "train-key.json").write_text(json.dumps({"subtaskbenglish": {"t1": "false"}}))

    records = load_dataset(root, fmt="rumoureval19")

    assert len(records) == 1
    assert records[0].id == "t1"
    assert records[0].label == 1
    assert [c.text for c in records[0].comments] == ["first reply", "second reply"]


def test_weibo_adapter(tmp_path):
    root = tmp_path / "weibo"
    (root / "Weibo").mkdir(parents=True)
    (root / "Weibo.txt").write_text("eid:100 label:1 1 2\neid:200 label:7 3\n", encoding="utf-8")
    (root / "Weibo" / "100.json").write_text(json.dumps([
        {"text": "新闻正文", "t": 10},
        {"text": "后来的评论", "t": 30},
        {"text": "先来的评论", "t": 20},
    ], ensure_ascii=False), encoding="utf-8")

    processor = DatasetProcessor()
    records = processor.load(root, fmt="weibo16")

    assert [r.id for r in records] == ["100"]
    assert [c.timestamp for c in records[0].comments] == [20, 30]
    assert processor.last_report.skipped_malformed == 1


def _labeled(n):
    return [make_record(f"r{i:02d}", "story", [], i % 2)[0] for i in range(n)]


def test_ratio_split_is_stratified_and_deterministic():
    records = _labeled(10)
    split = make_splits(records, RatioSplit(0.6, 0.2, 0.2), seed=7)[0]
    again = make_splits(records, RatioSplit(0.6, 0.2, 0.2), seed=7)[0]

    assert (len(split.train), len(split.validation), len(split.test)) == (6, 2, 2)
    assert Counter(r.label for r in split.test) == {0: 1, 1: 1}
    assert split.manifest() == again.manifest()
    ids = [r.id for part in (split.train, split.validation, split.test) for r in part]
    assert sorted(ids) == sorted(r.id for r in records)


def test_kfold_split_partitions_every_record():
    records = _labeled(20)
    splits = make_splits(records, KFoldSplit(5), seed=3)

    assert len(splits) == 5
    test_ids = [r.id for s in splits for r in s.test]
    assert sorted(test_ids) == sorted(r.id for r in records)
    for i, split in enumerate(splits):
        assert split.fold_id == i
        assert split.validation == splits[(i + 1) % 5].test
        assert not {r.id for r in split.train} & {r.id for r in split.test + split.validation}


def test_two_folds_train_on_the_other_fold():
    records = _labeled(10)
    first, second = make_splits(records, KFoldSplit(2), seed=3)

    assert first.validation == second.validation == ()
    assert first.train == second.test
    assert second.train == first.test


def test_split_errors():
    with pytest.raises(DataError, match="unlabeled"):
        make_splits(_labeled(4) + [make_record("u", "story", [], None)[0]], RatioSplit(0.5, 0.25, 0.25), 0)
    with pytest.raises(DataError):
        make_splits(_labeled(3), KFoldSplit(5), 0)
    with pytest.raises(DataError):
        make_splits(_labeled(10), RatioSplit(0.5, 0.5, 0.5), 0)


def test_synthetic_corpus_is_balanced_and_deterministic():
    records = generate_synthetic(20, seed=1)
    assert Counter(r.label for r in records) == {0: 10, 1: 10}
    assert records == generate_synthetic(20, seed=1)
    assert records != generate_synthetic(20, seed=2)
    for record in records:
        timestamps = [c.timestamp for c in record.comments]
        assert timestamps == sorted(timestamps)
        assert len(set(timestamps)) == len(timestamps)


@pytest.mark.parametrize("n", [18, 21])
def test_synthetic_rejects_bad_sizes(n):
    with pytest.raises(ConfigError):
        generate_synthetic(n, seed=0)


def test_comment_polarity_patterns():
    rng = np.random.default_rng(0)
    assert comment_polarities(1, 6, rng) == [1, -1, 1, -1, 1, -1]
    true_signs = comment_polarities(0, 6, rng)
    assert sorted(true_signs) == [-1, -1, -1, 1, 1, 1]
    assert true_signs[:3] == [true_signs[0]] * 3


def test_true_class_signs_flip_at_the_configured_rate():
    rng = np.random.default_rng(1)
    draws = [comment_polarities(0, 8, rng, flip_rate=0.1) for _ in range(2000)]

    # distance to the nearer of the two run layouts
    mismatches = [min(sum(a != b for a, b in zip(signs, [1] * 4 + [-1] * 4)),
                      sum(a != b for a, b in zip(signs, [-1] * 4 + [1] * 4))) for signs in draws]
    assert 0.05 < np.mean(mismatches) / 8 < 0.12
    assert abs(np.mean([sum(s) for s in draws])) < 0.2
    assert any(sum(a != b for a, b in zip(s, s[1:])) > 1 for s in draws)
    assert comment_polarities(1, 8, rng, flip_rate=0.4) == [1, -1] * 4


def test_flip_rate_must_stay_below_one_half():
    with pytest.raises(ConfigError):
        generate_synthetic(20, seed=0, params=SyntheticParams(true_flip_rate=0.5))


def test_synthetic_classes_share_order_invariant_emotion(synthetic_resources):
    extractor = EmotionExtractor(synthetic_resources.lexicon, synthetic_resources.tokenizer)
    records = generate_synthetic(200, seed=13)
    score = extractor.layout.score

    means = {0: [], 1: []}
    for record in records:
        mean, _, _ = pooled_comment_emotion(extractor.comment_matrix(record).rows)
        means[record.label].append(mean[score][0])
    assert abs(np.mean(means[1]) - np.mean(means[0])) < 0.1

    fake = next(r for r in records if r.label == 1)
    signs = np.sign(extractor.comment_matrix(fake).rows[:, score][:, 0])
    assert list(signs) == [1, -1] * (len(signs) // 2)


@pytest.mark.parametrize("label", [1.0, 0.0, True, "1"])
def test_labels_must_be_integers(tmp_path, label):
    path = _write_jsonl(tmp_path / "data.jsonl", [
        {"id": "a", "news": "first story", "label": label},
        {"id": "b", "news": "second story", "label": 0},
    ])
    processor = DatasetProcessor()
    assert [r.id for r in processor.load(path)] == ["b"]
    assert processor.last_report.skipped_malformed == 1
