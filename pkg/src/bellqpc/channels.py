"""Simulated quantum/classical channels, attackers, and eavesdropping checks."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bell import BellCode, DecoyState
from .particles import ParticleRegister

ATTACK_KINDS = ("none", "intercept_resend", "measure_resend", "passive_classical")
EVE = "Eve"


@dataclass
class AttackerModel:
    kind: str = "none"
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    basis: str = "Z"  # used by measure_resend
    captured: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attacker kind {self.kind!r}")

    def observe(self, message: dict) -> None:
        if self.kind == "passive_classical":
            self.captured.append(copy.deepcopy(message))


def attacker_interpose(model: AttackerModel | None, register: ParticleRegister, particle: int) -> int:
    """Let the attacker act on one particle in flight and return what is forwarded.

    The measured particle itself is forwarded: after the measurement it *is*
    the fresh eigenstate an intercept-resend attacker would send on.
    """
    if model is None or model.kind == "none":
        return particle
    if model.kind == "passive_classical":
        raise ValueError("a passive classical eavesdropper does not touch particles")
    owner = register.holder[particle]
    register.hand_over([particle], EVE)
    basis = model.rng.choice(("Z", "X")) if model.kind == "intercept_resend" else model.basis
    basis = str(basis)
    bit = register.measure_qubit(EVE, particle, basis, model.rng)
    model.captured.append((particle, basis, bit))
    register.hand_over([particle], owner)
    return particle


@dataclass
class QuantumChannel:
    sender: str
    receiver: str
    attacker: AttackerModel | None = None
    delivered: list[int] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.sender}-{self.receiver}"

    def transmit(self, register: ParticleRegister, seq: Sequence[int]) -> list[int]:
        out = []
        for p in seq:
            if register.holder[p] != self.sender:
                raise RuntimeError(f"{self.sender} cannot send particle {p} it does not hold")
            p = attacker_interpose(self.attacker, register, p)
            register.hand_over([p], self.receiver)
            self.delivered.append(p)
            out.append(p)
        return out


@dataclass
class ClassicalChannel:
    """Public, append-only message log; every observer sees every message."""

    log: list[dict] = field(default_factory=list)
    observers: list[Callable[[dict], None]] = field(default_factory=list)

    def send(self, message: dict) -> dict:
        self.log.append(message)
        for obs in self.observers:
            obs(message)
        return message


# --------------------------------------------------------------------------
# decoy photons


def _random_positions(total: int, n: int, rng: np.random.Generator) -> list[int]:
    if n == 0:
        return []
    return sorted(int(i) for i in rng.choice(total, size=n, replace=False))


def _interleave(seq: Sequence[int], positions: Sequence[int], items: Sequence[int]) -> list[int]:
    out: list[int] = []
    it, rest = iter(items), iter(seq)
    marks = set(positions)
    for i in range(len(seq) + len(items)):
        out.append(next(it) if i in marks else next(rest))
    return out


def strip_positions(seq: Sequence[int], positions: Sequence[int]) -> list[int]:
    marks = set(positions)
    return [p for i, p in enumerate(seq) if i not in marks]


@dataclass
class DecoyBatch:
    positions: list[int]
    states: list[DecoyState]
    particles: list[int]

    def __post_init__(self) -> None:
        if len(set(self.positions)) != len(self.positions) or list(self.positions) != sorted(self.positions):
            raise ValueError("decoy positions must be strictly increasing")
        if not len(self.states) == len(self.positions) == len(self.particles):
            raise ValueError("one state and one particle per decoy position")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def bases(self) -> list[str]:
        return [s.basis for s in self.states]


def decoy_insert(
    register: ParticleRegister, owner: str, seq: Sequence[int], n_decoys: int, rng: np.random.Generator
) -> tuple[list[int], DecoyBatch]:
    """Hide ``n_decoys`` random single photons in ``seq``; returns the sender's secret record."""
    if n_decoys < 0:
        raise ValueError("n_decoys must be nonnegative")
    states = [list(DecoyState)[int(i)] for i in rng.integers(4, size=n_decoys)]
    positions = _random_positions(len(seq) + n_decoys, n_decoys, rng)
    particles = [register.new_qubit(owner, s.basis, s.bit) for s in states]
    return _interleave(seq, positions, particles), DecoyBatch(positions, states, particles)


def decoy_measure(
    register: ParticleRegister, party: str, batch: DecoyBatch, rng: np.random.Generator
) -> list[int]:
    """Receiver measures each decoy in the basis announced by the sender."""
    return [register.measure_qubit(party, p, b, rng) for p, b in zip(batch.particles, batch.bases)]


def decoy_verify(batch: DecoyBatch, receiver_results: Sequence[int]) -> float:
    if len(receiver_results) != len(batch):
        raise ValueError(f"{len(receiver_results)} results for {len(batch)} decoys")
    if not len(batch):
        return 0.0
    errors = sum(int(r) != s.bit for r, s in zip(receiver_results, batch.states))
    return errors / len(batch)


# --------------------------------------------------------------------------
# sample Bell pairs


@dataclass
class CheckPairBatch:
    positions: list[int]
    retained: list[int]
    transmitted: list[int]
    bases: list[str] = field(default_factory=list)
    retained_results: list[int] = field(default_factory=list)
    transmitted_results: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.positions)


def bellpair_insert(
    register: ParticleRegister,
    owner: str,
    s1: Sequence[int],
    s2: Sequence[int],
    n_checks: int,
    rng: np.random.Generator,
) -> tuple[list[int], list[int], CheckPairBatch]:
    """Insert fresh Phi+ pairs: first halves into ``s1``, second halves into ``s2``, same positions."""
    if len(s1) != len(s2):
        raise ValueError("both sequences must have the same length")
    positions = _random_positions(len(s1) + n_checks, n_checks, rng)
    pairs = [register.new_bell_pair(owner, BellCode.PHI_PLUS) for _ in range(n_checks)]
    retained = [p for p, _ in pairs]
    transmitted = [q for _, q in pairs]
    return (
        _interleave(s1, positions, retained),
        _interleave(s2, positions, transmitted),
        CheckPairBatch(positions, retained, transmitted),
    )


def bellpair_verify(register: ParticleRegister, batch: CheckPairBatch, rng: np.random.Generator) -> float:
    """Both holders measure each check pair in a shared random Z/X basis; returns the anticorrelated fraction."""
    batch.bases = [("Z", "X")[int(i)] for i in rng.integers(2, size=len(batch))]
    batch.retained_results, batch.transmitted_results = [], []
    for keep, sent, basis in zip(batch.retained, batch.transmitted, batch.bases):
        batch.retained_results.append(register.measure_qubit(register.holder[keep], keep, basis, rng))
        batch.transmitted_results.append(register.measure_qubit(register.holder[sent], sent, basis, rng))
    if not len(batch):
        return 0.0
    errors = sum(a != b for a, b in zip(batch.retained_results, batch.transmitted_results))
    return errors / len(batch)
