"""Bell-state coding, swapping algebra and a small statevector oracle.

Codes pack a Bell state into two bits ``b1 b2``: the first bit is the
bit-flip component and the second the phase component, so that

    00 <-> Phi+    01 <-> Phi-    10 <-> Psi+    11 <-> Psi-

with Phi+- = (|00> +- |11>)/sqrt2 and Psi+- = (|01> +- |10>)/sqrt2.
Qubit 0 is always the leftmost tensor factor (most significant index bit).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_QUBITS = 8
NORM_TOL = 1e-12
BELL_TOL = 1e-9


class BellCode(enum.IntEnum):
    PHI_PLUS = 0b00
    PHI_MINUS = 0b01
    PSI_PLUS = 0b10
    PSI_MINUS = 0b11

    @property
    def b1(self) -> int:
        return self >> 1

    @property
    def b2(self) -> int:
        return self & 1

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def bits(self) -> str:
        return format(int(self), "02b")

    def __xor__(self, other: int) -> "BellCode":  # type: ignore[override]
        return BellCode(int(self) ^ int(other))

    __rxor__ = __xor__


_LABELS = {
    BellCode.PHI_PLUS: "phi+",
    BellCode.PHI_MINUS: "phi-",
    BellCode.PSI_PLUS: "psi+",
    BellCode.PSI_MINUS: "psi-",
}
_BY_LABEL = {v: k for k, v in _LABELS.items()}
_PRETTY = {"phi+": "Φ⁺", "phi-": "Φ⁻", "psi+": "Ψ⁺", "psi-": "Ψ⁻"}

#: The fixed label -> code assignment used by every protocol.
STANDARD_CODING = {label: code for code, label in _LABELS.items()}


def code_of(label: str | BellCode) -> BellCode:
    """Return the 2-bit code of a Bell label (``"phi+"``, ``"Ψ⁻"``, ...)."""
    if isinstance(label, BellCode):
        return label
    key = label.strip().lower()
    for ascii_name, pretty in _PRETTY.items():
        if label.strip() == pretty:
            key = ascii_name
    try:
        return _BY_LABEL[key]
    except KeyError:
        raise ValueError(f"unknown Bell label {label!r}") from None


def label_of(code: int) -> str:
    return _LABELS[BellCode(code)]


def pretty_label(code: int) -> str:
    return _PRETTY[label_of(code)]


def swap_collapse(a: int, b: int, m: int) -> BellCode:
    """Code of the unmeasured cross pair after swapping pairs ``a``, ``b`` with outcome ``m``."""
    return BellCode(int(a) ^ int(b) ^ int(m))


def swap_sample(a: int, b: int, rng: np.random.Generator) -> tuple[BellCode, BellCode]:
    m = BellCode(int(rng.integers(4)))
    return m, swap_collapse(a, b, m)


# --------------------------------------------------------------------------
# statevectors


@dataclass(frozen=True, eq=False)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise ValueError("amplitude vector length must be 2**num_qubits")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"statevector not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex] | np.ndarray, normalize: bool = False) -> "Statevector":
        arr = np.asarray(amps, dtype=complex).reshape(-1)
        n = int(round(math.log2(arr.shape[0])))
        if normalize:
            arr = arr / np.linalg.norm(arr)
        return cls(n, arr)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def canonical(self) -> "Statevector":
        """Same ray, with the first nonzero amplitude made real positive."""
        amps = self.amplitudes
        idx = int(np.flatnonzero(np.abs(amps) > NORM_TOL)[0])
        phase = amps[idx] / abs(amps[idx])
        out = amps / phase
        out[idx] = abs(amps[idx])
        return Statevector(self.num_qubits, out)

    def allclose(self, other: "Statevector", atol: float = 1e-12) -> bool:
        return self.num_qubits == other.num_qubits and np.allclose(
            self.canonical().amplitudes, other.canonical().amplitudes, atol=atol
        )

    def __repr__(self) -> str:
        return f"Statevector({self.num_qubits}, {np.round(self.amplitudes, 6).tolist()})"


_S = 1 / math.sqrt(2)
_BELL_AMPS = {
    BellCode.PHI_PLUS: np.array([_S, 0, 0, _S], dtype=complex),
    BellCode.PHI_MINUS: np.array([_S, 0, 0, -_S], dtype=complex),
    BellCode.PSI_PLUS: np.array([0, _S, _S, 0], dtype=complex),
    BellCode.PSI_MINUS: np.array([0, _S, -_S, 0], dtype=complex),
}
for _v in _BELL_AMPS.values():
    _v.setflags(write=False)

# single-qubit eigenvectors, indexed by (basis, bit); X basis: bit 0 = |+>, bit 1 = |->
_EIGEN = {
    ("Z", 0): np.array([1, 0], dtype=complex),
    ("Z", 1): np.array([0, 1], dtype=complex),
    ("X", 0): np.array([_S, _S], dtype=complex),
    ("X", 1): np.array([_S, -_S], dtype=complex),
}


def bell_state(code: int) -> Statevector:
    return Statevector(2, _BELL_AMPS[BellCode(code)])


def eigenstate(basis: str, bit: int) -> Statevector:
    return Statevector(1, _EIGEN[(basis, bit)])


def tensor(*states: Statevector) -> Statevector:
    amps = np.array([1.0 + 0j])
    n = 0
    for s in states:
        amps = np.kron(amps, s.amplitudes)
        n += s.num_qubits
    return Statevector(n, amps)


def permute(state: Statevector, order: Sequence[int]) -> Statevector:
    """Reorder qubits: new qubit ``i`` is old qubit ``order[i]``."""
    if sorted(order) != list(range(state.num_qubits)):
        raise ValueError(f"{order!r} is not a permutation of the qubits")
    return Statevector(state.num_qubits, np.transpose(state.tensor, order).reshape(-1))


def fidelity(a: Statevector, b: Statevector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def identify_bell(state: Statevector, tol: float = BELL_TOL) -> BellCode | None:
    """Return the code if ``state`` is a Bell state (fidelity 1 within tol)."""
    if state.num_qubits != 2:
        return None
    for code in BellCode:
        if abs(fidelity(state, bell_state(code)) - 1.0) <= tol:
            return code
    return None


def _contract(state: Statevector, qubits: Sequence[int], bra: np.ndarray) -> np.ndarray:
    """Contract ``<bra|`` on ``qubits``; returns the unnormalized residual tensor."""
    t = np.moveaxis(state.tensor, list(qubits), list(range(len(qubits))))
    t = t.reshape(2 ** len(qubits), -1)
    return bra.conj() @ t


def project_bell(state: Statevector, q1: int, q2: int) -> list[tuple[BellCode, float, Statevector | None]]:
    """Bell-basis projection of qubits ``(q1, q2)``.

    Returns ``(code, probability, residual)`` for all four outcomes; the
    residual covers the remaining qubits in ascending order (``None`` if
    nothing remains or the outcome has zero probability).
    """
    if q1 == q2:
        raise ValueError("Bell measurement needs two distinct qubits")
    rest = state.num_qubits - 2
    out = []
    for code in BellCode:
        vec = _contract(state, (q1, q2), _BELL_AMPS[code])
        p = float(np.vdot(vec, vec).real)
        residual = None
        if rest and p > NORM_TOL:
            residual = Statevector(rest, vec / math.sqrt(p)).canonical()
        out.append((code, p, residual))
    return out


def project_qubit(state: Statevector, q: int, basis: str) -> list[tuple[int, float, Statevector | None]]:
    """Single-qubit projection onto the Z or X eigenbasis."""
    rest = state.num_qubits - 1
    out = []
    for bit in (0, 1):
        vec = _contract(state, (q,), _EIGEN[(basis, bit)])
        p = float(np.vdot(vec, vec).real)
        residual = None
        if rest and p > NORM_TOL:
            residual = Statevector(rest, vec / math.sqrt(p)).canonical()
        out.append((bit, p, residual))
    return out


def born_choice(probs: Sequence[float], rng: np.random.Generator) -> int:
    u = rng.random() * sum(probs)
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    # floating point slack: fall back to the last outcome with support
    return max(i for i, p in enumerate(probs) if p > 0)


def oracle_swap_distribution(a: int, b: int) -> list[tuple[BellCode, BellCode, float]]:
    """Exact swapping statistics for |a>_{12} (x) |b>_{34}, measuring qubits (1, 4).

    Each entry is ``(m, n, p)``: Bell outcome ``m`` on (1, 4), probability
    ``p`` and the code ``n`` of the residual pair (3, 2).
    """
    state = tensor(bell_state(a), bell_state(b))
    dist = []
    for m, p, residual in project_bell(state, 0, 3):
        # residual is over qubits (2, 3) in ascending order; reorder to (3, 2)
        pair = permute(residual, (1, 0))
        n = identify_bell(pair)
        if n is None:
            raise RuntimeError(f"residual pair for a={a}, b={b}, m={m} is not a Bell state")
        dist.append((m, n, p))
    return dist


def bell_measure_pure(pair: Statevector, rng: np.random.Generator) -> tuple[BellCode, Statevector]:
    """Bell-basis measurement of a two-qubit pure state.

    A Bell state is returned unchanged with its code; anything else is
    sampled with the Born rule and projected.
    """
    if pair.num_qubits != 2:
        raise ValueError("bell_measure_pure expects a two-qubit state")
    code = identify_bell(pair)
    if code is not None:
        return code, pair
    probs = [float(abs(np.vdot(_BELL_AMPS[c], pair.amplitudes)) ** 2) for c in BellCode]
    code = BellCode(born_choice(probs, rng))
    return code, bell_state(code)


# --------------------------------------------------------------------------
# decoy photons


class DecoyState(enum.Enum):
    Z0 = ("Z", 0)
    Z1 = ("Z", 1)
    X_PLUS = ("X", 0)
    X_MINUS = ("X", 1)

    @property
    def basis(self) -> str:
        return self.value[0]

    @property
    def bit(self) -> int:
        return self.value[1]

    @property
    def label(self) -> str:
        return {"Z0": "Z0", "Z1": "Z1", "X_PLUS": "X+", "X_MINUS": "X-"}[self.name]

    @property
    def state(self) -> Statevector:
        return eigenstate(*self.value)


def measure_decoy(state: DecoyState, basis: str, rng: np.random.Generator) -> int:
    """Measure a decoy photon: deterministic in its own basis, a fair coin otherwise."""
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    if basis == state.basis:
        return state.bit
    return int(rng.integers(2))
