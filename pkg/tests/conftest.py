"""Shared builders for randomized datasets used across the test modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mlimb.data import (
    Fingerprint,
    Instance,
    LabelVocabulary,
    MolecularGraph,
    MultiLabelDataset,
)

FIXTURES = Path(__file__).parent / "fixtures"


def random_graph(rng: np.random.Generator, node_dim: int, max_nodes: int = 5) -> MolecularGraph:
    n = int(rng.integers(1, max_nodes + 1))
    feats = rng.normal(size=(n, node_dim))
    edges = []
    for v in range(1, n):
        if rng.random() < 0.8:
            edges.append((int(rng.integers(v)), v))
    return MolecularGraph(node_features=feats, edges=tuple(edges))


def random_dataset(
    rng: np.random.Generator,
    max_instances: int = 50,
    max_labels: int = 20,
    graph_prob: float = 0.6,
    reg_width: int = 0,
    ensure_labeled: bool = False,
) -> MultiLabelDataset:
    """Small random dataset exercising every optional field."""
    n = int(rng.integers(1, max_instances + 1))
    n_labels = int(rng.integers(1, max_labels + 1))
    width = int(rng.integers(1, 25))
    node_dim = int(rng.integers(1, 4))
    vocab = LabelVocabulary(tuple(f"l{j}" for j in range(n_labels)))
    instances = []
    for i in range(n):
        labels = tuple(
            int(l) for l in np.nonzero(rng.random(n_labels) < rng.uniform(0.05, 0.5))[0]
        )
        if ensure_labeled and i == 0 and not labels:
            labels = (int(rng.integers(n_labels)),)
        graph = random_graph(rng, node_dim) if rng.random() < graph_prob else None
        reg = rng.normal(size=reg_width) if reg_width else None
        instances.append(
            Instance(
                id=f"i{i}",
                fingerprint=Fingerprint(rng.integers(0, 2, size=width).astype(np.uint8)),
                labels=labels,
                graph=graph,
                regression_targets=reg,
            )
        )
    return MultiLabelDataset(
        vocabulary=vocab,
        instances=instances,
        fingerprint_width=width,
        node_feature_dim=node_dim,
        regression_width=reg_width,
    )


@pytest.fixture
def tiny4() -> tuple[str, str]:
    records = (FIXTURES / "tiny4.jsonl").read_text(encoding="utf-8")
    vocab = (FIXTURES / "tiny4.labels.tsv").read_text(encoding="utf-8")
    return records, vocab
