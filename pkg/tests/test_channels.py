import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqpc.bell import DecoyState
from bellqpc.channels import (
    AttackerModel,
    CheckPairBatch,
    ClassicalChannel,
    DecoyBatch,
    QuantumChannel,
    attacker_interpose,
    bellpair_insert,
    bellpair_verify,
    decoy_insert,
    decoy_measure,
    decoy_verify,
    strip_positions,
)
from bellqpc.particles import ParticleRegister


def test_quantum_channel_delivers_in_order():
    reg = ParticleRegister()
    seq = [reg.new_qubit("A", "Z", i % 2) for i in range(6)]
    ch = QuantumChannel("A", "B")
    assert ch.transmit(reg, seq) == seq
    assert ch.delivered == seq
    assert all(reg.holder[p] == "B" for p in seq)
    assert ch.name == "A-B"


def test_quantum_channel_refuses_foreign_particles():
    reg = ParticleRegister()
    p = reg.new_qubit("C", "Z", 0)
    with pytest.raises(RuntimeError):
        QuantumChannel("A", "B").transmit(reg, [p])


def test_classical_channel_observers_see_everything():
    seen = []
    ch = ClassicalChannel(observers=[seen.append])
    for i in range(3):
        ch.send({"i": i})
    assert seen == ch.log == [{"i": 0}, {"i": 1}, {"i": 2}]


def test_passive_observer_copies():
    eve = AttackerModel("passive_classical")
    msg = {"values": [1, 2]}
    eve.observe(msg)
    msg["values"].append(3)
    assert eve.captured == [{"values": [1, 2]}]
    reg = ParticleRegister()
    with pytest.raises(ValueError):
        attacker_interpose(eve, reg, reg.new_qubit("A", "Z", 0))


def test_unknown_attacker():
    with pytest.raises(ValueError):
        AttackerModel("jam")


@settings(max_examples=30)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_decoy_insert_strip_round_trip(n_data, n_decoys, seed):
    rng = np.random.default_rng(seed)
    reg = ParticleRegister()
    data = [reg.new_qubit("TP", "Z", 0) for _ in range(n_data)]
    mixed, batch = decoy_insert(reg, "TP", data, n_decoys, rng)
    assert len(mixed) == n_data + n_decoys
    assert [mixed[i] for i in batch.positions] == batch.particles
    assert strip_positions(mixed, batch.positions) == data


def test_decoy_clean_channel_zero_error():
    rng = np.random.default_rng(0)
    reg = ParticleRegister()
    _, batch = decoy_insert(reg, "TP", [], 500, rng)
    reg.hand_over(batch.particles, "P1")
    assert decoy_verify(batch, decoy_measure(reg, "P1", batch, rng)) == 0.0


def test_decoy_intercept_resend_rate():
    rng = np.random.default_rng(1)
    eve = AttackerModel("intercept_resend", np.random.default_rng(2))
    reg = ParticleRegister()
    _, batch = decoy_insert(reg, "TP", [], 10_000, rng)
    for p in batch.particles:
        attacker_interpose(eve, reg, p)
    reg.hand_over(batch.particles, "P1")
    rate = decoy_verify(batch, decoy_measure(reg, "P1", batch, rng))
    assert abs(rate - 0.25) < 0.02
    assert len(eve.captured) == 10_000


def test_decoy_batch_validation():
    with pytest.raises(ValueError):
        DecoyBatch([2, 1], [DecoyState.Z0] * 2, [0, 1])
    with pytest.raises(ValueError):
        DecoyBatch([1], [DecoyState.Z0] * 2, [0])
    batch = DecoyBatch([0], [DecoyState.Z0], [0])
    with pytest.raises(ValueError):
        decoy_verify(batch, [])
    assert decoy_verify(DecoyBatch([], [], []), []) == 0.0


def test_bellpair_clean_and_attacked():
    rng = np.random.default_rng(3)
    reg = ParticleRegister()
    s1, s2, batch = bellpair_insert(reg, "P1", [], [], 400, rng)
    reg.hand_over(batch.transmitted, "TP")
    assert bellpair_verify(reg, batch, rng) == 0.0

    eve = AttackerModel("intercept_resend", np.random.default_rng(4))
    reg = ParticleRegister()
    _, _, batch = bellpair_insert(reg, "P1", [], [], 10_000, rng)
    for p in batch.transmitted:
        attacker_interpose(eve, reg, p)
        reg.hand_over([p], "TP")
    assert abs(bellpair_verify(reg, batch, rng) - 0.25) < 0.02


def test_bellpair_insert_aligned():
    rng = np.random.default_rng(5)
    reg = ParticleRegister()
    a = [reg.new_qubit("P1", "Z", 0) for _ in range(4)]
    b = [reg.new_qubit("P1", "Z", 0) for _ in range(4)]
    s1, s2, batch = bellpair_insert(reg, "P1", a, b, 3, rng)
    for pos, keep, sent in zip(batch.positions, batch.retained, batch.transmitted):
        assert s1[pos] == keep and s2[pos] == sent
        assert reg.pair_code(keep, sent) == 0
    with pytest.raises(ValueError):
        bellpair_insert(reg, "P1", a, b[:2], 1, rng)
    assert len(CheckPairBatch([], [], [])) == 0
