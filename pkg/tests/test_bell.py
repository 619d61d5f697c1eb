import math
from functools import reduce
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqpc.bell import (
    BellCode,
    DecoyState,
    Statevector,
    bell_measure_pure,
    bell_state,
    code_of,
    eigenstate,
    fidelity,
    identify_bell,
    label_of,
    measure_decoy,
    oracle_swap_distribution,
    permute,
    project_bell,
    project_qubit,
    swap_collapse,
    swap_sample,
    tensor,
)

codes = st.sampled_from(list(BellCode))
S = 1 / math.sqrt(2)


# independent reference kets, written out by hand
KETS = {
    0b00: np.array([S, 0, 0, S]),
    0b01: np.array([S, 0, 0, -S]),
    0b10: np.array([0, S, S, 0]),
    0b11: np.array([0, S, -S, 0]),
}


def test_coding_table():
    assert code_of("phi+") == 0b00
    assert code_of("Φ⁻") == 0b01
    assert code_of("psi+") == 0b10
    assert code_of("Ψ⁻") == 0b11
    for c in BellCode:
        assert code_of(label_of(c)) == c


def test_bad_label():
    with pytest.raises(ValueError):
        code_of("foo")


def test_bell_state_kets():
    for c, ket in KETS.items():
        assert np.allclose(bell_state(c).amplitudes, ket)


@given(codes, codes)
def test_xor_closure(a, b):
    c = a ^ b
    assert isinstance(c, BellCode)
    assert c == int(a) ^ int(b)


def test_swap_collapse_examples():
    assert swap_collapse(0b00, 0b00, 0b10) == 0b10
    assert swap_collapse(0b01, 0b10, 0b00) == 0b11
    for a, m in product(BellCode, BellCode):
        assert swap_collapse(a, a, m) == m


def _brute_swap(a, b):
    """Project qubits 1,4 of |a>_12 |b>_34 by explicit bra contraction."""
    psi = np.kron(KETS[a], KETS[b]).reshape(2, 2, 2, 2)
    out = []
    for m in range(4):
        bra = KETS[m].conj().reshape(2, 2)
        rest = np.einsum("ad,abcd->cb", bra, psi)  # residual ordered (3, 2)
        p = float(np.sum(np.abs(rest) ** 2))
        rest = rest.reshape(4) / math.sqrt(p)
        n = [c for c in range(4) if abs(abs(np.vdot(KETS[c], rest)) - 1) < 1e-9]
        out.append((m, n[0], p))
    return out


def test_oracle_matches_brute_force():
    for a, b in product(range(4), repeat=2):
        got = [(int(m), int(n), p) for m, n, p in oracle_swap_distribution(a, b)]
        want = _brute_swap(a, b)
        assert [g[:2] for g in got] == [w[:2] for w in want]
        assert all(abs(g[2] - w[2]) < 1e-12 for g, w in zip(got, want))


def test_oracle_equals_algebra_exhaustive():
    for a, b in product(BellCode, BellCode):
        dist = oracle_swap_distribution(a, b)
        assert len(dist) == 4
        assert sorted(m for m, _, _ in dist) == list(BellCode)
        for m, n, p in dist:
            assert n == swap_collapse(a, b, m)
            assert abs(p - 0.25) < 1e-12


def test_oracle_examples():
    assert {(m, n) for m, n, _ in oracle_swap_distribution(0, 0)} == {(m, m) for m in BellCode}
    assert (0b00, 0b00) in {(m, n) for m, n, _ in oracle_swap_distribution(0b11, 0b11)}


def test_swap_sample_uniform():
    rng = np.random.default_rng(11)
    counts = np.zeros(4)
    for _ in range(4000):
        m, n = swap_sample(0, 0, rng)
        assert m == n
        counts[m] += 1
    sigma = math.sqrt(4000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 1000) < 3 * sigma)


@given(codes, codes, st.integers(0, 2**32 - 1))
def test_swap_sample_identity(a, b, seed):
    m, n = swap_sample(a, b, np.random.default_rng(seed))
    assert a ^ b == m ^ n


def test_swap_sample_known():
    # (00, 01) with m = 10 forces n = 11
    assert swap_collapse(0b00, 0b01, 0b10) == 0b11


@settings(max_examples=50)
@given(st.lists(codes, min_size=2, max_size=8), st.integers(0, 2**32 - 1))
def test_chain_folding(user_codes, seed):
    """Folding swaps over fresh pairs leaves TP holding the XOR of every user code."""
    rng = np.random.default_rng(seed)
    acc = user_codes[0]
    for r in user_codes[1:]:
        m, n = swap_sample(r, acc, rng)
        acc = m ^ n
    assert acc == reduce(lambda x, y: x ^ y, user_codes)


def test_chain_random_k8():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        k = int(rng.integers(2, 9))
        us = [BellCode(int(c)) for c in rng.integers(4, size=k)]
        acc = us[0]
        for r in us[1:]:
            m, n = swap_sample(r, acc, rng)
            acc = m ^ n
        assert acc == reduce(lambda x, y: x ^ y, us)


def test_chain_exhaustive_small():
    rng = np.random.default_rng(0)
    for k in (2, 3, 4):
        for us in product(BellCode, repeat=k):
            acc = BellCode(0)
            for r in us:
                m, n = swap_sample(r, acc, rng)
                acc = m ^ n
            assert acc == reduce(lambda x, y: x ^ y, us)


def test_bell_measure_pure_eigen():
    rng = np.random.default_rng(0)
    psi = bell_state(0b10)
    code, after = bell_measure_pure(psi, rng)
    assert code == 0b10
    assert fidelity(after, psi) > 1 - 1e-9
    code2, after2 = bell_measure_pure(after, rng)
    assert code2 == code
    assert after2.allclose(after)


def test_bell_measure_pure_superposition():
    # |0>|+> overlaps every Bell state with amplitude 1/2
    zero_plus = Statevector.from_amplitudes([S, S, 0, 0])
    for _, p, _ in project_bell(zero_plus, 0, 1):
        assert abs(p - 0.25) < 1e-12
    # |+>|+> = (Phi+ + Psi+)/sqrt2
    plus_plus = Statevector.from_amplitudes([0.5, 0.5, 0.5, 0.5])
    for c, p, _ in project_bell(plus_plus, 0, 1):
        assert abs(p - (0.5 if c in (0b00, 0b10) else 0.0)) < 1e-12
    rng = np.random.default_rng(5)
    outcomes = [bell_measure_pure(plus_plus, rng)[0] for _ in range(2000)]
    assert set(outcomes) == {0b00, 0b10}
    frac = outcomes.count(0b00) / 2000
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / 2000)


def test_statevector_validation():
    with pytest.raises(ValueError):
        Statevector.from_amplitudes([1, 1])
    with pytest.raises(ValueError):
        Statevector.from_amplitudes(np.ones(2**9) / math.sqrt(2**9))
    with pytest.raises(ValueError):
        Statevector.from_amplitudes([1, 0, 0])
    s = Statevector.from_amplitudes([1, 1], normalize=True)
    assert abs(np.linalg.norm(s.amplitudes) - 1) < 1e-12


def test_canonical_phase():
    s = Statevector.from_amplitudes([0, -1j])
    assert s.canonical().amplitudes[1] == pytest.approx(1)


def test_identify_and_permute():
    for c in BellCode:
        assert identify_bell(bell_state(c)) == c
    assert identify_bell(tensor(eigenstate("Z", 0), eigenstate("Z", 0))) is None
    s = tensor(eigenstate("Z", 1), eigenstate("Z", 0))  # |10>
    assert np.allclose(permute(s, [1, 0]).amplitudes, [0, 1, 0, 0])


@given(codes, codes, st.integers(0, 3), st.sampled_from("ZX"))
def test_measurements_preserve_norm(a, b, q, basis):
    psi = tensor(bell_state(a), bell_state(b))
    for _, p, post in project_qubit(psi, q, basis):
        if post is not None:
            assert abs(np.linalg.norm(post.amplitudes) - 1) < 1e-12
    for _, p, post in project_bell(psi, 0, 3):
        assert abs(np.linalg.norm(post.amplitudes) - 1) < 1e-12


def test_decoy_states():
    for d in DecoyState:
        assert (d.basis == "Z") == (d.label in ("Z0", "Z1"))


def test_measure_decoy():
    rng = np.random.default_rng(3)
    assert all(measure_decoy(DecoyState.Z0, "Z", rng) == 0 for _ in range(100))
    assert all(measure_decoy(DecoyState.X_MINUS, "X", rng) == 1 for _ in range(100))
    bits = [measure_decoy(DecoyState.X_PLUS, "Z", rng) for _ in range(4000)]
    assert abs(np.mean(bits) - 0.5) < 4 * math.sqrt(0.25 / 4000)
    for bit, p, _ in project_qubit(DecoyState.X_PLUS.state, 0, "Z"):
        assert abs(p - 0.5) < 1e-12
