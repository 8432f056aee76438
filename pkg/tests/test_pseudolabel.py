import json
import logging
import math

import numpy as np
import pytest

from processors.dataset_processor import make_record
from src.core.augment import AugmentedRecord, AugmentPlan
from src.core.errors import ConfigError
from src.core.network import DIDANetwork
from src.core.pseudolabel import ExpandedSet, PseudoExample, PseudoLabeler, RoundReport, pseudo_loss, select

PROBABILITIES = [i / 100 for i in range(101)]
THRESHOLDS = [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]


def _variant(i: int = 0) -> AugmentedRecord:
    record, _ = make_record(f"r{i}#0-synonym-0", "a car", [], None)
    return AugmentedRecord(parent_id=f"r{i}", record=record, strategy="synonym", edit_count=1)


def _expected(p, tau_p, tau_n):
    labels = set()
    if p >= tau_p:
        labels.add(1)
    if 1 - p >= tau_n:
        labels.add(0)
    assert len(labels) <= 1
    return labels.pop() if labels else None


@pytest.mark.parametrize("tau_p", THRESHOLDS)
def test_selection_matches_brute_force(tau_p):
    variant = _variant()
    for tau_n in THRESHOLDS:
        for p in PROBABILITIES:
            chosen = select([(variant, p)], tau_p, tau_n)
            got = chosen[0].y_tilde if chosen else None
            assert got == _expected(p, tau_p, tau_n), (p, tau_p, tau_n)


def test_raising_thresholds_never_admits_more():
    scored = [(_variant(i), p) for i, p in enumerate(PROBABILITIES)]
    for low, high in zip(THRESHOLDS, THRESHOLDS[1:]):
        loose = {e.variant.parent_id for e in select(scored, low, 0.9) if e.y_tilde == 1}
        strict = {e.variant.parent_id for e in select(scored, high, 0.9) if e.y_tilde == 1}
        assert strict <= loose
        loose = {e.variant.parent_id for e in select(scored, 0.9, low) if e.y_tilde == 0}
        strict = {e.variant.parent_id for e in select(scored, 0.9, high) if e.y_tilde == 0}
        assert strict <= loose


def test_selection_examples():
    variant = _variant()
    assert select([(variant, 0.95)], 0.9, 0.9)[0].y_tilde == 1
    assert select([(variant, 0.05)], 0.9, 0.9)[0].y_tilde == 0
    assert select([(variant, 0.5)], 0.9, 0.9) == []
    assert select([(variant, 1.0)], 1.0, 1.0)[0].gate == 1


@pytest.mark.parametrize("tau_p, tau_n", [(0.5, 0.9), (0.9, 0.4), (1.01, 0.9)])
def test_thresholds_outside_range_are_rejected(tau_p, tau_n):
    with pytest.raises(ConfigError):
        select([], tau_p, tau_n)


def test_pseudo_loss_values(caplog):
    variant = _variant()
    assert pseudo_loss([PseudoExample(variant, 0.5, 1)], [0.5]) == pytest.approx(math.log(2))
    assert pseudo_loss([PseudoExample(variant, 0.0, 0)], [1e-9]) == pytest.approx(0.0, abs=1e-6)
    mixed = [PseudoExample(variant, 0.5, 1), PseudoExample(variant, 0.9, 0, gate=0)]
    assert pseudo_loss(mixed, [0.5, 0.9]) == pytest.approx(math.log(2))

    with caplog.at_level(logging.WARNING):
        assert pseudo_loss([PseudoExample(variant, 0.5, 1, gate=0)], [0.5]) == 0.0
    assert "no gated example" in caplog.text


def test_pseudo_loss_needs_one_probability_per_example():
    batch = [PseudoExample(_variant(), 0.5, 1), PseudoExample(_variant(), 0.9, 1)]
    with pytest.raises(ValueError):
        pseudo_loss(batch, [0.5])


def _labeler(resources, run_config, fake_logit: float = 0.0) -> PseudoLabeler:
    network = DIDANetwork.initialize(resources.embeddings, 11, run_config.train)
    network.params["cls_W_X"][:] = 0.0
    network.params["cls_b_X"][:] = [0.0, fake_logit]
    return PseudoLabeler(network, resources, run_config)


def test_undecided_model_selects_nothing(resources, sample_records, make_config):
    run_config = make_config(d_h=3, embedding_dim=4)
    labeler = _labeler(resources, run_config)
    plan = AugmentPlan(entries=(("synonym", 2),), rate=0.3)
    expanded, report = labeler.enhancement_round(sample_records, plan, (0.9, 0.9))

    assert expanded.pseudo == ()
    assert expanded.originals == tuple(sample_records)
    assert report.variants == 20
    assert report.selected == 0
    assert report.dropped == 20
    assert report.per_strategy == {"synonym": {"variants": 20, "pos": 0, "neg": 0}}
    assert labeler.pseudo_loss([PseudoExample(_variant(), 0.5, 1)]) == pytest.approx(math.log(2))


def test_confident_model_admits_positive_labels(resources, sample_records, make_config):
    run_config = make_config(d_h=3, embedding_dim=4)
    labeler = _labeler(resources, run_config, fake_logit=10.0)
    plan = AugmentPlan(entries=(("synonym", 1), ("embedding", 1)), rate=0.3)
    expanded, report = labeler.enhancement_round(sample_records, plan, (0.9, 0.9))

    assert report.selected_pos == report.variants == len(expanded.pseudo)
    assert report.selected_neg == 0
    assert len(expanded) == len(sample_records) + report.variants
    assert all(r.label == 1 for r in expanded.pseudo_records())
    assert all(e.p == pytest.approx(1 / (1 + math.exp(-10.0))) for e in expanded.pseudo)
    # both labels conserved: selected + dropped = variants
    assert report.selected + report.dropped == report.variants


def test_scores_preserve_order_and_duplicates(resources, sample_records, make_config):
    run_config = make_config(d_h=3, embedding_dim=4)
    network = DIDANetwork.initialize(resources.embeddings, 11, run_config.train)
    labeler = PseudoLabeler(network, resources, run_config)
    variant = _variant()
    scored = labeler.score_variants([variant, _variant(1), variant])

    assert [v for v, _ in scored] == [variant, _variant(1), variant]
    assert scored[0][1] == scored[2][1]
    assert all(0.0 < p < 1.0 for _, p in scored)
    assert labeler.scoring_failures == 0


def test_inherit_mode_copies_parent_labels(resources, sample_records, make_config):
    run_config = make_config(d_h=3, embedding_dim=4, variant="dida_a")
    labeler = _labeler(resources, run_config)
    plan = AugmentPlan(entries=(("synonym", 1),), rate=0.3)
    expanded, report = labeler.enhancement_round(sample_records, plan, (0.9, 0.9))

    parents = {r.id: r.label for r in sample_records}
    assert report.mode == "inherit"
    assert len(expanded.pseudo) == report.variants == 10
    for example in expanded.pseudo:
        assert example.y_tilde == parents[example.variant.parent_id]
        assert np.isnan(example.p)


def test_round_report_serializes(tmp_path):
    report = RoundReport(round=1, variants=4, selected_pos=1, selected_neg=2, tau_p=0.9, tau_n=0.8, dropped=1)
    path = report.save(tmp_path / "report.json")
    saved = json.loads(path.read_text(encoding="utf-8"))

    assert saved["selected_pos"] == 1
    assert saved["dropped"] == 1
    assert report.selected == 3
    assert {"round", "variants", "selected_neg", "tau_p", "tau_n", "mode", "per_strategy"} <= set(saved)


def test_expanded_set_flags_pseudo_examples():
    record, _ = make_record("r0", "a car", [], 1)
    expanded = ExpandedSet((record,), (PseudoExample(_variant(), 0.1, 0),))
    assert len(expanded) == 2
    assert expanded.pseudo_records()[0].label == 0
    assert expanded.originals[0].label == 1
