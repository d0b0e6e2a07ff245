"""Label co-occurrence snapshots and chord-diagram export."""

import dataclasses
import json

import numpy as np
import pytest

from mlimb.cooccurrence import (
    chord_document,
    compare_snapshots,
    cooccurrence,
    random_label_subset,
)
from mlimb.data import LabelVocabulary
from mlimb.resampling import ResampleConfig, oversample
from tests.conftest import random_dataset
from tests.test_resampling import make_dataset


def test_hand_counts_and_links():
    d = make_dataset([(0, 1), (0,), (1,)], 2)
    summary = cooccurrence(d, (0, 1))
    assert summary.arc_sizes == (2, 2)
    assert summary.links == (((0, 1, 1)),)


def test_diagonal_excluded_and_zero_links_dropped():
    d = make_dataset([(0,), (0,), (2,)], 3)
    summary = cooccurrence(d, (0, 1, 2))
    assert summary.arc_sizes == (2, 0, 1)
    assert summary.links == ()


def test_duplication_doubles_counts():
    rng = np.random.default_rng(7)
    d = random_dataset(rng, ensure_labeled=True, max_labels=8)
    subset = tuple(range(d.label_count))
    base = cooccurrence(d, subset)
    doubled = cooccurrence(d.with_instances(
        list(d.instances)
        + [dataclasses.replace(i, id=i.id + "::p1") for i in d.instances]
    ), subset)
    assert doubled.arc_sizes == tuple(2 * c for c in base.arc_sizes)
    assert doubled.links == tuple((a, b, 2 * c) for a, b, c in base.links)


def test_subset_order_does_not_change_pair_identity():
    d = make_dataset([(0, 1, 2), (1, 2)], 3)
    fwd = cooccurrence(d, (0, 1, 2))
    rev = cooccurrence(d, (2, 1, 0))
    assert dict(((a, b), c) for a, b, c in fwd.links) == dict(
        ((a, b), c) for a, b, c in rev.links
    )
    assert sorted(zip((0, 1, 2), fwd.arc_sizes)) == sorted(zip((2, 1, 0), rev.arc_sizes))


def test_subset_validation():
    d = make_dataset([(0,)], 2)
    with pytest.raises(ValueError):
        cooccurrence(d, ())
    with pytest.raises(ValueError):
        cooccurrence(d, (0, 0))
    with pytest.raises(ValueError):
        cooccurrence(d, (0, 5))


def test_compare_snapshots_self_identical():
    rng = np.random.default_rng(11)
    d = random_dataset(rng, ensure_labeled=True, max_labels=10)
    subset = random_label_subset(d.vocabulary, min(4, d.label_count), seed=0)
    cmp = compare_snapshots(d, {"again": d}, subset)
    assert cmp.counts["original"] == cmp.counts["again"]
    assert cmp.scumble["original"] == cmp.scumble["again"]


def test_compare_snapshots_after_oversampling():
    d = make_dataset([(0,)] * 5 + [(1,)] * 2 + [(2,)], 3)
    out = oversample(d, ResampleConfig(method="proposed", p=0.25, r=2))
    cmp = compare_snapshots(d, {"replicated": out.dataset}, (0, 1, 2))
    assert cmp.counts["replicated"][2] == cmp.counts["original"][2] + 2
    doc = cmp.to_document()
    assert set(doc["snapshots"]) == {"original", "replicated"}
    json.loads(cmp.to_json())


def test_vocabulary_mismatch_rejected():
    a = make_dataset([(0,)], 2)
    b = make_dataset([(0,)], 3)
    with pytest.raises(ValueError):
        compare_snapshots(a, {"other": b}, (0,))


def test_random_subset_deterministic_and_sorted():
    vocab = LabelVocabulary(tuple(f"l{i}" for i in range(30)))
    s1 = random_label_subset(vocab, 6, seed=4)
    s2 = random_label_subset(vocab, 6, seed=4)
    assert s1 == s2
    assert list(s1) == sorted(set(s1))
    assert random_label_subset(vocab, 6, seed=5) != s1
    with pytest.raises(ValueError):
        random_label_subset(vocab, 31, seed=0)


def test_chord_document_shape():
    d = make_dataset([(0, 1), (0,), (1,)], 2)
    doc = chord_document(cooccurrence(d, (0, 1), snapshot_name="orig"), d.vocabulary)
    assert doc["snapshot"] == "orig"
    assert doc["arcs"] == [
        {"label": "l0", "count": 2},
        {"label": "l1", "count": 2},
    ]
    assert doc["links"] == [{"a": "l0", "b": "l1", "count": 1}]
    json.dumps(doc)
