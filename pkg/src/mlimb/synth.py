"""Seeded generator of synthetic multilabel molecular datasets.

The generator plants everything the rest of the toolkit wants to detect:
Zipf-skewed label frequencies (thousands of labels, most of them rare),
optional extra minority/majority co-occurrence, per-label fingerprint bits,
per-label shifts of graph node-feature means, and regression targets that
are a noisy linear function of the fingerprint. One integer seed determines
the dataset byte-for-byte.

Construction order (fixed so the random stream is reproducible): label
counts via largest-remainder allocation of round(target_card * n) positives,
per-label membership draws, co-occurrence boost coin flips, label shift
matrix, regression weights, then one block of draws per instance
(fingerprint noise, graph size, node features, extra edges, regression
noise).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import (
    Fingerprint,
    Instance,
    LabelVocabulary,
    MolecularGraph,
    MultiLabelDataset,
)

__all__ = ["SynthConfig", "generate", "allocate_counts"]


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int
    n_labels: int
    zipf_exponent: float = 1.1
    target_card: float = 2.0
    fingerprint_width: int = 128
    signal_bits_per_label: int = 1
    noise_flip_prob: float = 0.01
    graph_nodes_range: tuple[int, int] | None = (6, 12)
    node_feature_dim: int = 9
    regression_width: int = 0
    cooccurrence_boost: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_instances < 1 or self.n_labels < 1:
            raise ValueError("n_instances and n_labels must be positive")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be > 0")
        if self.target_card <= 0:
            raise ValueError("target_card must be > 0")
        if self.fingerprint_width < 1:
            raise ValueError("fingerprint_width must be positive")
        if self.signal_bits_per_label < 0:
            raise ValueError("signal_bits_per_label must be non-negative")
        if not (0.0 <= self.noise_flip_prob <= 1.0):
            raise ValueError("noise_flip_prob must lie in [0, 1]")
        if self.graph_nodes_range is not None:
            lo, hi = self.graph_nodes_range
            if not (1 <= lo <= hi):
                raise ValueError("graph_nodes_range must satisfy 1 <= min <= max")
        if self.node_feature_dim < 1:
            raise ValueError("node_feature_dim must be positive")
        if self.regression_width < 0:
            raise ValueError("regression_width must be non-negative")
        if self.cooccurrence_boost < 0:
            raise ValueError("cooccurrence_boost must be non-negative")
        if self.signal_bits_per_label * self.n_labels > self.fingerprint_width:
            raise ValueError(
                f"infeasible config: {self.n_labels} labels x {self.signal_bits_per_label} "
                f"dedicated bits exceed fingerprint width {self.fingerprint_width}"
            )

    def to_meta(self) -> dict:
        doc = asdict(self)
        if doc["graph_nodes_range"] is not None:
            doc["graph_nodes_range"] = list(doc["graph_nodes_range"])
        return {"generator": doc}


def allocate_counts(weights: np.ndarray, total: int, cap: int) -> np.ndarray:
    """Largest-remainder integer allocation of ``total`` over ``weights``.

    Result is sorted descending (rank 0 most frequent) and capped at ``cap``,
    so the rank-frequency curve is non-increasing by construction.
    """
    weights = np.asarray(weights, dtype=np.float64)
    quota = total * weights / weights.sum()
    base = np.floor(quota).astype(np.int64)
    frac = quota - base
    order = np.lexsort((np.arange(weights.size), -frac))
    short = int(total - base.sum())
    i = 0
    while short > 0:
        base[order[i % weights.size]] += 1
        short -= 1
        i += 1
    while short < 0:  # float quota drift; trim from the smallest fractions
        j = order[weights.size - 1 - (i % weights.size)]
        if base[j] > 0:
            base[j] -= 1
            short += 1
        i += 1
    counts = np.minimum(base, cap)
    return -np.sort(-counts)


def generate(config: SynthConfig) -> MultiLabelDataset:
    rng = np.random.default_rng(config.seed)
    n, L = config.n_instances, config.n_labels
    w = config.fingerprint_width

    # 1. Label frequencies: Zipf weights, integer counts, descending by rank.
    weights = np.power(np.arange(1, L + 1, dtype=np.float64), -config.zipf_exponent)
    total = int(round(config.target_card * n))
    counts = allocate_counts(weights, total, cap=n)

    # 2. Membership: label l lands on counts[l] distinct instances.
    label_sets: list[set[int]] = [set() for _ in range(n)]
    for l in range(L):
        if counts[l] == 0:
            continue
        for i in rng.choice(n, size=int(counts[l]), replace=False):
            label_sets[int(i)].add(l)

    # 3. Co-occurrence boost: instances of the rarest populated labels also
    # pick up a paired frequent label, raising minority/majority concurrence.
    if config.cooccurrence_boost > 0 and L >= 2:
        populated = [l for l in range(L) if counts[l] > 0]
        n_pairs = min(8, len(populated) // 2)
        minors = populated[-n_pairs:] if n_pairs else []
        majors = populated[:n_pairs]
        prob = min(1.0, config.cooccurrence_boost)
        for minor, major in zip(minors, majors):
            if minor == major:
                continue
            for i in range(n):
                if minor in label_sets[i] and rng.random() < prob:
                    label_sets[i].add(major)

    # 4. Planted structure shared across instances.
    label_shift = rng.normal(0.0, 1.0, size=(L, config.node_feature_dim))
    reg_weight = None
    if config.regression_width > 0:
        reg_weight = rng.normal(0.0, 1.0, size=(w, config.regression_width))

    s = config.signal_bits_per_label
    masks = np.zeros((L, w), dtype=np.uint8)
    for l in range(L):
        masks[l, l * s : (l + 1) * s] = 1

    id_width = len(str(n - 1))
    instances: list[Instance] = []
    for i in range(n):
        active = sorted(label_sets[i])

        bits = np.zeros(w, dtype=np.uint8)
        for l in active:
            bits |= masks[l]
        if config.noise_flip_prob > 0:
            flips = rng.random(w) < config.noise_flip_prob
            bits = bits ^ flips.astype(np.uint8)

        graph = None
        if config.graph_nodes_range is not None:
            lo, hi = config.graph_nodes_range
            n_nodes = int(rng.integers(lo, hi + 1))
            feats = rng.normal(0.0, 1.0, size=(n_nodes, config.node_feature_dim))
            if active:
                feats = feats + label_shift[active].sum(axis=0)
            edges: list[tuple[int, int]] = [
                (int(rng.integers(v)), v) for v in range(1, n_nodes)
            ]
            present = set(edges)
            for _ in range(int(rng.integers(0, n_nodes))):
                u, v = int(rng.integers(n_nodes)), int(rng.integers(n_nodes))
                a, b = min(u, v), max(u, v)
                if a != b and (a, b) not in present:
                    edges.append((a, b))
                    present.add((a, b))
            graph = MolecularGraph(node_features=feats, edges=tuple(edges))

        reg = None
        if reg_weight is not None:
            clean = bits.astype(np.float64) @ reg_weight / np.sqrt(w)
            reg = clean + rng.normal(0.0, 0.1, size=config.regression_width)

        instances.append(
            Instance(
                id=f"s{i:0{id_width}d}",
                fingerprint=Fingerprint(bits),
                labels=tuple(active),
                graph=graph,
                regression_targets=reg,
            )
        )

    name_width = max(4, len(str(L - 1)))
    vocabulary = LabelVocabulary(tuple(f"c{l:0{name_width}d}" for l in range(L)))
    return MultiLabelDataset(
        vocabulary=vocabulary,
        instances=instances,
        fingerprint_width=w,
        node_feature_dim=config.node_feature_dim,
        regression_width=config.regression_width,
        meta=json.loads(json.dumps(config.to_meta())),
    )
