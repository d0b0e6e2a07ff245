"""Dataset model and line-delimited file format for multilabel molecular data.

A dataset file is one JSON document per line: a header carrying the
dataset-level dimensions, followed by one record per instance. Label sets are
stored as sparse index arrays and fingerprints as hex strings, so files stay
compact even with thousands of mostly-absent labels. Serialization is
canonical (fixed key order, compact separators), which makes rewrites of a
parsed file byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "DatasetError",
    "FormatError",
    "ValidationError",
    "LabelVocabulary",
    "Fingerprint",
    "MolecularGraph",
    "Instance",
    "MultiLabelDataset",
    "parse_vocabulary",
    "format_vocabulary",
    "parse_dataset",
    "write_dataset",
    "load_dataset",
    "save_dataset",
    "default_vocabulary_path",
    "split_dataset",
]

HEADER_KEYS = ("fingerprint_width", "node_feature_dim", "label_count", "regression_width")
RECORD_KEYS = ("id", "fp", "labels", "graph", "reg", "origin")


class DatasetError(ValueError):
    """Base class for dataset parsing and validation failures."""


class FormatError(DatasetError):
    """A line could not be decoded as a dataset header or record."""


class ValidationError(DatasetError):
    """A decoded value violates a dataset-level invariant."""


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered label names; the position of a name is its label index."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if any(not isinstance(n, str) or not n for n in names):
            raise ValidationError("label names must be non-empty strings")
        if len(set(names)) != len(names):
            raise ValidationError("label names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self) -> int:
        return len(self.names)

    @property
    def entries(self) -> list[tuple[int, str]]:
        return list(enumerate(self.names))

    def name_of(self, index: int) -> str:
        return self.names[index]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]  # type: ignore[attr-defined]
        except KeyError:
            raise KeyError(f"unknown label name {name!r}") from None


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Fixed-width binary feature vector, stored as an array of 0/1 bytes."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("fingerprint must be a non-empty bit vector")
        if arr.max(initial=0) > 1:
            raise ValidationError("fingerprint bits must be 0 or 1")
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return int(self.bits.size)

    def to_hex(self) -> str:
        """Hex encoding of the bit vector, most-significant-bit-first."""
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, width: int) -> "Fingerprint":
        expected_chars = 2 * ((width + 7) // 8)
        if len(text) != expected_chars:
            raise FormatError(
                f"fingerprint hex has {len(text)} characters, expected {expected_chars} for width {width}"
            )
        try:
            raw = bytes.fromhex(text)
        except ValueError:
            raise FormatError(f"invalid fingerprint hex string {text!r}") from None
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if bits[width:].any():
            raise FormatError("fingerprint has bits set beyond the declared width")
        return cls(bits[:width])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(eq=False)
class MolecularGraph:
    """Undirected molecular graph: per-node feature rows plus an edge list.

    Self-edges are rejected; the network layer decides whether to add
    self-loops when it builds its adjacency operator.
    """

    node_features: np.ndarray
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValidationError("graph node features must be a non-empty 2-D matrix")
        self.node_features = feats
        n = feats.shape[0]
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if u == v:
                raise ValidationError(f"self-edge ({u}, {v}) is not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
        self.edges = edges

    @property
    def node_count(self) -> int:
        return int(self.node_features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.node_features.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MolecularGraph):
            return NotImplemented
        return (
            np.array_equal(self.node_features, other.node_features, equal_nan=True)
            and self.edges == other.edges
        )


@dataclass(eq=False)
class Instance:
    """One dataset row: fingerprint, optional graph, sparse label set.

    ``origin`` is empty for original instances and carries the source
    instance id for rows created by a resampling method.
    """

    id: str
    fingerprint: Fingerprint
    labels: tuple[int, ...]
    graph: MolecularGraph | None = None
    regression_targets: np.ndarray | None = None
    origin: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("instance id must be a non-empty string")
        labels = tuple(int(l) for l in self.labels)
        if len(set(labels)) != len(labels):
            raise ValidationError(f"instance {self.id!r}: duplicate label index")
        if any(l < 0 for l in labels):
            raise ValidationError(f"instance {self.id!r}: negative label index")
        self.labels = tuple(sorted(labels))
        if self.regression_targets is not None:
            reg = np.asarray(self.regression_targets, dtype=np.float64)
            if reg.ndim != 1:
                raise ValidationError(f"instance {self.id!r}: regression targets must be a vector")
            self.regression_targets = reg

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        if (self.id, self.labels, self.origin) != (other.id, other.labels, other.origin):
            return False
        if self.fingerprint != other.fingerprint or self.graph != other.graph:
            return False
        a, b = self.regression_targets, other.regression_targets
        if (a is None) != (b is None):
            return False
        return a is None or np.array_equal(a, b, equal_nan=True)


@dataclass(eq=False)
class MultiLabelDataset:
    """Validated, immutable-by-convention collection of instances.

    All fingerprints share ``fingerprint_width``, all graphs share
    ``node_feature_dim``, and regression targets (when present) share
    ``regression_width``. ``meta`` holds extra header fields (for example the
    generator configuration echoed by synthetic datasets) and survives
    round-trips through the file format.
    """

    vocabulary: LabelVocabulary
    instances: list[Instance]
    fingerprint_width: int
    node_feature_dim: int
    regression_width: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.fingerprint_width < 1:
            raise ValidationError("fingerprint_width must be positive")
        if self.node_feature_dim < 1:
            raise ValidationError("node_feature_dim must be positive")
        if self.regression_width < 0:
            raise ValidationError("regression_width must be non-negative")
        label_count = len(self.vocabulary)
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            seen: set[str] = set()
            for inst_id in ids:
                if inst_id in seen:
                    raise ValidationError(f"instance {inst_id!r}: duplicate instance id")
                seen.add(inst_id)
        for inst in self.instances:
            if inst.labels and inst.labels[-1] >= label_count:
                raise ValidationError(
                    f"instance {inst.id!r}: label index {inst.labels[-1]} outside vocabulary of size {label_count}"
                )
            if inst.fingerprint.width != self.fingerprint_width:
                raise ValidationError(
                    f"instance {inst.id!r}: fingerprint width {inst.fingerprint.width} != declared {self.fingerprint_width}"
                )
            if inst.graph is not None and inst.graph.feature_dim != self.node_feature_dim:
                raise ValidationError(
                    f"instance {inst.id!r}: node feature dim {inst.graph.feature_dim} != declared {self.node_feature_dim}"
                )
            if inst.regression_targets is not None:
                if self.regression_width == 0:
                    raise ValidationError(
                        f"instance {inst.id!r}: regression targets present but regression_width is 0"
                    )
                if inst.regression_targets.size != self.regression_width:
                    raise ValidationError(
                        f"instance {inst.id!r}: regression width {inst.regression_targets.size} != declared {self.regression_width}"
                    )

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def label_count(self) -> int:
        return len(self.vocabulary)

    def with_instances(self, instances: list[Instance]) -> "MultiLabelDataset":
        """New dataset sharing vocabulary, dimensions, and meta."""
        return MultiLabelDataset(
            vocabulary=self.vocabulary,
            instances=instances,
            fingerprint_width=self.fingerprint_width,
            node_feature_dim=self.node_feature_dim,
            regression_width=self.regression_width,
            meta=dict(self.meta),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiLabelDataset):
            return NotImplemented
        return (
            self.vocabulary.names == other.vocabulary.names
            and self.fingerprint_width == other.fingerprint_width
            and self.node_feature_dim == other.node_feature_dim
            and self.regression_width == other.regression_width
            and self.meta == other.meta
            and len(self.instances) == len(other.instances)
            and all(a == b for a, b in zip(self.instances, other.instances))
        )


# ---------------------------------------------------------------------------
# Vocabulary file: one "index<TAB>name" per line
# ---------------------------------------------------------------------------

def parse_vocabulary(source: str | Iterable[str]) -> LabelVocabulary:
    lines = source.splitlines() if isinstance(source, str) else [l.rstrip("\n") for l in source]
    pairs: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"vocabulary line {lineno}: expected 'index<TAB>name'")
        try:
            index = int(parts[0])
        except ValueError:
            raise FormatError(f"vocabulary line {lineno}: non-integer index {parts[0]!r}") from None
        pairs.append((index, parts[1]))
    indices = [i for i, _ in pairs]
    if sorted(indices) != list(range(len(pairs))):
        raise FormatError("vocabulary indices must be exactly 0..N-1 with no gaps or duplicates")
    names = [name for _, name in sorted(pairs)]
    return LabelVocabulary(tuple(names))


def format_vocabulary(vocabulary: LabelVocabulary) -> str:
    return "".join(f"{i}\t{name}\n" for i, name in vocabulary.entries)


# ---------------------------------------------------------------------------
# Record stream
# ---------------------------------------------------------------------------

def _format_header(dataset: MultiLabelDataset) -> str:
    header = {
        "fingerprint_width": dataset.fingerprint_width,
        "node_feature_dim": dataset.node_feature_dim,
        "label_count": dataset.label_count,
        "regression_width": dataset.regression_width,
    }
    for key in sorted(dataset.meta):
        if key in HEADER_KEYS:
            raise ValidationError(f"meta key {key!r} collides with a reserved header field")
        header[key] = dataset.meta[key]
    return json.dumps(header, separators=(",", ":"))


def _format_record(inst: Instance) -> str:
    record: dict = {"id": inst.id, "fp": inst.fingerprint.to_hex(), "labels": list(inst.labels)}
    if inst.graph is not None:
        record["graph"] = {
            "nodes": inst.graph.node_features.tolist(),
            "edges": [[u, v] for u, v in inst.graph.edges],
        }
    if inst.regression_targets is not None:
        record["reg"] = inst.regression_targets.tolist()
    if inst.origin is not None:
        record["origin"] = inst.origin
    return json.dumps(record, separators=(",", ":"))


def _parse_header(line: str, lineno: int) -> tuple[dict, dict]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {lineno}: invalid header JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise FormatError(f"line {lineno}: header must be a JSON object")
    required = {}
    for key in HEADER_KEYS:
        if key not in obj:
            raise FormatError(f"line {lineno}: header missing field {key!r}")
        value = obj[key]
        if not isinstance(value, int) or isinstance(value, bool):
            raise FormatError(f"line {lineno}: header field {key!r} must be an integer")
        required[key] = value
    meta = {k: v for k, v in obj.items() if k not in HEADER_KEYS}
    return required, meta


def _parse_record(line: str, lineno: int, fingerprint_width: int) -> Instance:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {lineno}: invalid record JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise FormatError(f"line {lineno}: record must be a JSON object")
    unknown = set(obj) - set(RECORD_KEYS)
    if unknown:
        raise FormatError(f"line {lineno}: unknown record field {sorted(unknown)[0]!r}")
    for key in ("id", "fp", "labels"):
        if key not in obj:
            raise FormatError(f"line {lineno}: record missing field {key!r}")
    inst_id = obj["id"]
    if not isinstance(inst_id, str) or not inst_id:
        raise FormatError(f"line {lineno}: record id must be a non-empty string")

    def fail(message: str) -> FormatError:
        return FormatError(f"line {lineno} (instance {inst_id!r}): {message}")

    if not isinstance(obj["fp"], str):
        raise fail("field 'fp' must be a hex string")
    if not isinstance(obj["labels"], list) or not all(
        isinstance(l, int) and not isinstance(l, bool) for l in obj["labels"]
    ):
        raise fail("field 'labels' must be an array of integers")

    try:
        fingerprint = Fingerprint.from_hex(obj["fp"], fingerprint_width)
    except FormatError as exc:
        raise fail(str(exc)) from None

    graph = None
    if "graph" in obj:
        g = obj["graph"]
        if not isinstance(g, dict) or set(g) != {"nodes", "edges"}:
            raise fail("field 'graph' must be an object with 'nodes' and 'edges'")
        nodes = g["nodes"]
        if (
            not isinstance(nodes, list)
            or not nodes
            or not all(isinstance(row, list) for row in nodes)
            or len({len(row) for row in nodes}) != 1
        ):
            raise fail("graph nodes must be a non-empty list of equal-length feature rows")
        edges = g["edges"]
        if not isinstance(edges, list) or not all(
            isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)
            for e in edges
        ):
            raise fail("graph edges must be a list of [u, v] integer pairs")
        try:
            graph = MolecularGraph(
                node_features=np.asarray(nodes, dtype=np.float64),
                edges=tuple((e[0], e[1]) for e in edges),
            )
        except ValidationError as exc:
            raise ValidationError(f"line {lineno} (instance {inst_id!r}): {exc}") from None

    reg = None
    if "reg" in obj:
        if not isinstance(obj["reg"], list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj["reg"]
        ):
            raise fail("field 'reg' must be an array of numbers")
        reg = np.asarray(obj["reg"], dtype=np.float64)

    origin = None
    if "origin" in obj:
        if not isinstance(obj["origin"], str) or not obj["origin"]:
            raise fail("field 'origin' must be a non-empty string")
        origin = obj["origin"]

    try:
        return Instance(
            id=inst_id,
            fingerprint=fingerprint,
            labels=tuple(obj["labels"]),
            graph=graph,
            regression_targets=reg,
            origin=origin,
        )
    except ValidationError as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None


def parse_dataset(records: str | Iterable[str], vocabulary: str | Iterable[str]) -> MultiLabelDataset:
    """Parse a record stream plus vocabulary into a validated dataset.

    An empty record stream yields an empty dataset with default dimensions.
    Diagnostics name the offending line number and instance id.
    """
    vocab = parse_vocabulary(vocabulary)
    lines = records.splitlines() if isinstance(records, str) else [l.rstrip("\n") for l in records]
    if not lines:
        return MultiLabelDataset(
            vocabulary=vocab, instances=[], fingerprint_width=1, node_feature_dim=1
        )
    header, meta = _parse_header(lines[0], 1)
    if header["label_count"] != len(vocab):
        raise FormatError(
            f"line 1: header label_count {header['label_count']} != vocabulary size {len(vocab)}"
        )
    instances = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise FormatError(f"line {lineno}: blank line in record stream")
        instances.append(_parse_record(line, lineno, header["fingerprint_width"]))
    return MultiLabelDataset(
        vocabulary=vocab,
        instances=instances,
        fingerprint_width=header["fingerprint_width"],
        node_feature_dim=header["node_feature_dim"],
        regression_width=header["regression_width"],
        meta=meta,
    )


def write_dataset(dataset: MultiLabelDataset, destination: TextIO | str | Path) -> None:
    """Serialize ``dataset`` records; output parses back to an equal dataset."""
    if isinstance(destination, (str, Path)):
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            write_dataset(dataset, fh)
        return
    destination.write(_format_header(dataset) + "\n")
    for inst in dataset.instances:
        destination.write(_format_record(inst) + "\n")


def default_vocabulary_path(records_path: str | Path) -> Path:
    """Sibling vocabulary file for a records file: data.jsonl -> data.labels.tsv."""
    path = Path(records_path)
    return path.with_name(path.stem + ".labels.tsv")


def load_dataset(records_path: str | Path, vocab_path: str | Path | None = None) -> MultiLabelDataset:
    records_path = Path(records_path)
    vocab_path = Path(vocab_path) if vocab_path is not None else default_vocabulary_path(records_path)
    return parse_dataset(
        records_path.read_text(encoding="utf-8"), vocab_path.read_text(encoding="utf-8")
    )


def save_dataset(
    dataset: MultiLabelDataset,
    records_path: str | Path,
    vocab_path: str | Path | None = None,
) -> None:
    records_path = Path(records_path)
    vocab_path = Path(vocab_path) if vocab_path is not None else default_vocabulary_path(records_path)
    write_dataset(dataset, records_path)
    vocab_path.write_text(format_vocabulary(dataset.vocabulary), encoding="utf-8")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_dataset(
    dataset: MultiLabelDataset, test_fraction: float, seed: int
) -> tuple[MultiLabelDataset, MultiLabelDataset]:
    """Deterministic disjoint train/test partition with |test| = round(f * |D|)."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset)
    if n < 2:
        raise ValueError("split requires at least 2 instances")
    n_test = int(math.floor(test_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_ids = set(perm[:n_test].tolist())
    # Both sides keep the original relative instance order.
    train = [inst for i, inst in enumerate(dataset.instances) if i not in test_ids]
    test = [inst for i, inst in enumerate(dataset.instances) if i in test_ids]
    return dataset.with_instances(train), dataset.with_instances(test)
