"""Multilabel imbalance toolkit for molecular effect datasets.

Measures label imbalance (IRLbl, MeanIR, cardinality, SCUMBLE), rebalances
datasets by minority-instance replication or MLSMOTE-style synthesis, and
trains hybrid graph/fingerprint networks to quantify the downstream effect.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402,F401
    DatasetError,
    Fingerprint,
    FormatError,
    Instance,
    LabelVocabulary,
    MolecularGraph,
    MultiLabelDataset,
    ValidationError,
    load_dataset,
    parse_dataset,
    save_dataset,
    split_dataset,
    write_dataset,
)
from .metrics import ImbalanceReport, imbalance_report  # noqa: E402,F401
from .resampling import ResampleConfig, ResampleOutcome, oversample  # noqa: E402,F401
from .synth import SynthConfig, generate  # noqa: E402,F401
