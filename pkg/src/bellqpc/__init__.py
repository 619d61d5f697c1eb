"""Simulator and analyzer for Bell-state entanglement-swapping private comparison."""

from .bell import BellCode, DecoyState, Statevector, code_of, label_of, oracle_swap_distribution, swap_collapse, swap_sample
from .classical import ConfigError, Digest, GroupSeq, HashConfig, SecretInput, group_bits, hash_digest
from .engine import AttackSpec, PairwiseResults, ProtocolParams, Transcript, replay, run_on_digests, run_protocol

__version__ = "0.1.0"

__all__ = [
    "AttackSpec",
    "BellCode",
    "ConfigError",
    "DecoyState",
    "Digest",
    "GroupSeq",
    "HashConfig",
    "PairwiseResults",
    "ProtocolParams",
    "SecretInput",
    "Statevector",
    "Transcript",
    "code_of",
    "group_bits",
    "hash_digest",
    "label_of",
    "oracle_swap_distribution",
    "replay",
    "run_on_digests",
    "run_protocol",
    "swap_collapse",
    "swap_sample",
]
