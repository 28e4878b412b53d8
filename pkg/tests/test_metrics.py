import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afgan.metrics import (
    REPORT_COLUMNS,
    ScoredSet,
    accuracy,
    auroc,
    average_precision,
    format_report,
    source_report,
)

import oracles


def test_accuracy_examples():
    assert accuracy(ScoredSet([0.9, 0.2], [1, 0])) == 1.0
    assert accuracy(ScoredSet([0.1, 0.8], [1, 0])) == 0.0
    assert accuracy(ScoredSet([0.5], [1])) == 1.0  # score >= threshold counts as fake
    with pytest.raises(ValueError):
        accuracy(ScoredSet([], []))


def test_ap_examples():
    assert average_precision(ScoredSet([0.9, 0.7, 0.6], [1, 0, 1])) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision(ScoredSet([0.9, 0.8, 0.1], [0, 0, 1])) == pytest.approx(1 / 3)
    assert average_precision(ScoredSet([0.9, 0.8, 0.1], [1, 1, 0])) == 1.0
    with pytest.raises(ValueError):
        average_precision(ScoredSet([0.3, 0.2], [0, 0]))


def test_auroc_examples():
    assert auroc(ScoredSet([0.35, 0.8, 0.1, 0.4], [1, 1, 0, 0])) == pytest.approx(0.75)
    assert auroc(ScoredSet([0.9, 0.8, 0.1], [1, 1, 0])) == 1.0
    assert auroc(ScoredSet([0.5] * 6, [1, 0] * 3)) == 0.5
    with pytest.raises(ValueError):
        auroc(ScoredSet([0.1, 0.2], [1, 1]))


def test_labels_must_be_binary():
    with pytest.raises(ValueError):
        ScoredSet([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        ScoredSet([0.1], [0, 1])


def test_ap_matches_threshold_sweep_exhaustively():
    # every labeling of size <= 8, with scores over a 3-level grid (exhaustive up
    # to size 6) or random tie-heavy draws (sizes 7 and 8)
    rng = np.random.default_rng(0)
    for n, labels in oracles.all_label_score_sets(8):
        grids = itertools.product(range(3), repeat=n) if n <= 6 else (rng.integers(0, 4, n) for _ in range(8))
        for scores in grids:
            scores = list(scores)
            got = average_precision(ScoredSet(scores, labels))
            assert got == pytest.approx(oracles.ap_threshold_sweep(scores, labels), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=50))
def test_auroc_equals_pairwise_count(items):
    scores = [s / 6 for s, _ in items]
    labels = [int(y) for _, y in items]
    if 0 < sum(labels) < len(labels):
        assert abs(auroc(ScoredSet(scores, labels)) - oracles.auroc_pairwise(scores, labels)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-40, 40), st.booleans()), min_size=2, max_size=40))
def test_auroc_invariant_under_monotone_transform_and_label_flip(items):
    scores = np.array([s / 8 for s, _ in items])
    labels = np.array([int(y) for _, y in items])
    if not 0 < labels.sum() < len(labels):
        return
    base = auroc(ScoredSet(scores, labels))
    assert 0 <= base <= 1
    assert auroc(ScoredSet(scores**3 + 2 * scores + 1, labels)) == pytest.approx(base, abs=1e-12)
    assert auroc(ScoredSet(scores, 1 - labels)) == pytest.approx(1 - base, abs=1e-12)
    assert 0 <= average_precision(ScoredSet(scores, labels)) <= 1


def test_source_report_rows_and_mean():
    rows = source_report([0.1, 0.2, 0.3], {"fake_b": [0.9, 0.8], "fake_a": [0.05, 0.95]})
    assert [r["source_tag"] for r in rows] == ["fake_a", "fake_b", "mean"]
    assert rows[1]["auroc"] == 1.0
    assert rows[-1]["n"] == 7
    assert rows[-1]["auroc"] == pytest.approx((rows[0]["auroc"] + 1.0) / 2)
    text = format_report(rows)
    assert text.splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert text.splitlines()[-1].startswith("mean,7,")
