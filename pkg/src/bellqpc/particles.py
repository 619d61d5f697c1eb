"""Particle register: every qubit of a run, grouped into entangled clusters.

Protocol particles only ever live in clusters of at most two qubits: fresh
Bell pairs, single photons, and the two pairs left after a Bell measurement.
Clusters whose state is a known Bell state or a Z/X eigenstate take an
algebraic fast path; anything else (e.g. a pair half that an attacker has
measured) falls back to the statevector routines in :mod:`bellqpc.bell`,
which is exact for this cluster size.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .bell import (
    BellCode,
    Statevector,
    bell_state,
    born_choice,
    eigenstate,
    identify_bell,
    permute,
    project_bell,
    project_qubit,
    tensor,
)

LIVE = "live"
MEASURED = "measured"
DISCARDED = "discarded"


_CODES = tuple(BellCode)


@dataclass(slots=True)
class _Cluster:
    qubits: list[int]
    code: BellCode | None = None  # two-qubit Bell state
    eigen: tuple[str, int] | None = None  # single qubit in (basis, bit)
    _state: Statevector | None = None

    @property
    def state(self) -> Statevector:
        if self._state is None:
            if self.code is not None:
                self._state = bell_state(self.code)
            elif self.eigen is not None:
                self._state = eigenstate(*self.eigen)
            else:  # pragma: no cover - clusters are always built with one of the three
                raise RuntimeError("cluster without a state")
        return self._state


@dataclass
class ParticleRegister:
    """Owns the joint quantum state and the custody of every particle."""

    _clusters: dict[int, _Cluster] = field(default_factory=dict)
    _where: dict[int, int] = field(default_factory=dict)  # particle -> cluster id
    holder: dict[int, str] = field(default_factory=dict)
    status: dict[int, str] = field(default_factory=dict)
    _ids: itertools.count = field(default_factory=itertools.count)

    # -- construction -----------------------------------------------------

    def _new_cluster(self, qubits: list[int], **kw) -> None:
        cid = next(self._ids)
        self._clusters[cid] = _Cluster(list(qubits), **kw)
        for q in qubits:
            self._where[q] = cid

    def _new_particle(self, owner: str) -> int:
        pid = next(self._ids)
        self.holder[pid] = owner
        self.status[pid] = LIVE
        return pid

    def new_bell_pair(self, owner: str, code: BellCode = BellCode.PHI_PLUS) -> tuple[int, int]:
        p, q = self._new_particle(owner), self._new_particle(owner)
        self._new_cluster([p, q], code=BellCode(code))
        return p, q

    def new_qubit(self, owner: str, basis: str, bit: int) -> int:
        p = self._new_particle(owner)
        self._new_cluster([p], eigen=(basis, bit))
        return p

    # -- inspection -------------------------------------------------------

    def pair_code(self, p: int, q: int) -> BellCode | None:
        """Bell code of particles (p, q) if they form an isolated Bell pair."""
        c = self._clusters[self._where[p]]
        if q not in c.qubits or len(c.qubits) != 2:
            return None
        if c.code is not None:
            return c.code
        return identify_bell(c.state)

    def joint_state(self, *particles: int) -> Statevector:
        """State of ``particles`` (which must be a union of whole clusters), in the given order."""
        cids = []
        for p in particles:
            cid = self._where[p]
            if cid not in cids:
                cids.append(cid)
        qubits = [q for cid in cids for q in self._clusters[cid].qubits]
        if sorted(qubits) != sorted(particles):
            raise ValueError("particles are entangled with qubits outside the requested set")
        state = tensor(*(self._clusters[cid].state for cid in cids))
        return permute(state, [qubits.index(p) for p in particles])

    def live(self) -> list[int]:
        return [p for p, s in self.status.items() if s == LIVE]

    # -- custody ----------------------------------------------------------

    def _require(self, party: str, *particles: int) -> None:
        for p in particles:
            if self.holder[p] != party:
                raise RuntimeError(f"{party} does not hold particle {p} (held by {self.holder[p]})")
            if self.status[p] == DISCARDED:
                raise RuntimeError(f"particle {p} was discarded")

    def hand_over(self, particles, to: str) -> None:
        for p in particles:
            self.holder[p] = to

    def discard(self, particles) -> None:
        for p in particles:
            self.status[p] = DISCARDED

    def discard_live(self) -> None:
        self.discard(self.live())

    # -- measurements -----------------------------------------------------

    def measure_qubit(self, party: str, p: int, basis: str, rng: np.random.Generator) -> int:
        self._require(party, p)
        self.status[p] = MEASURED
        cid = self._where[p]
        c = self._clusters[cid]
        if len(c.qubits) == 1 and c.eigen is not None:
            if c.eigen[0] == basis:
                return c.eigen[1]
            bit = int(rng.integers(2))
            c.eigen, c._state = (basis, bit), None
            return bit
        del self._clusters[cid]
        others = [q for q in c.qubits if q != p]
        if c.code is not None:
            # Z outcomes differ by the flip bit, X outcomes by the phase bit
            bit = int(rng.integers(2))
            partner_bit = bit ^ (c.code >> 1 if basis == "Z" else c.code & 1)
            self._new_cluster([p], eigen=(basis, bit))
            self._new_cluster(others, eigen=(basis, partner_bit))
            return bit
        outcomes = project_qubit(c.state, c.qubits.index(p), basis)
        bit = born_choice([o[1] for o in outcomes], rng)
        self._new_cluster([p], eigen=(basis, bit))
        if others:
            self._new_cluster(others, _state=outcomes[bit][2])
        return bit

    def bell_measure(self, party: str, p: int, q: int, rng: np.random.Generator) -> BellCode:
        """Bell-basis measurement of particles (p, q); entanglement swapping if they sit in two pairs."""
        self._require(party, p, q)
        self.status[p] = self.status[q] = MEASURED
        cp, cq = self._where[p], self._where[q]
        if cp == cq:
            c = self._clusters[cp]
            if c.code is not None:
                return c.code  # eigenstate: non-perturbing
            if len(c.qubits) == 2:
                state = c.state if c.qubits == [p, q] else permute(c.state, (1, 0))
                code = identify_bell(state)
                if code is not None:
                    c.code = code
                    return code
        a, b = self._clusters[cp], self._clusters[cq]
        if cp != cq and a.code is not None and b.code is not None:
            m = _CODES[int(rng.integers(4))]
            n = _CODES[int(a.code) ^ int(b.code) ^ int(m)]
            rest = [x for x in a.qubits if x != p] + [x for x in b.qubits if x != q]
            del self._clusters[cp], self._clusters[cq]
            self._new_cluster([p, q], code=m)
            self._new_cluster(rest, code=n)
            return m
        return self._bell_measure_general(p, q, rng)

    def _bell_measure_general(self, p: int, q: int, rng: np.random.Generator) -> BellCode:
        cids = list(dict.fromkeys((self._where[p], self._where[q])))
        qubits = [x for cid in cids for x in self._clusters[cid].qubits]
        state = tensor(*(self._clusters[cid].state for cid in cids))
        for cid in cids:
            del self._clusters[cid]
        outcomes = project_bell(state, qubits.index(p), qubits.index(q))
        m = BellCode(born_choice([o[1] for o in outcomes], rng))
        self._new_cluster([p, q], code=m)
        rest = [x for x in qubits if x not in (p, q)]
        if rest:
            residual = outcomes[m][2]
            # Bell states are symmetric under qubit exchange up to a sign,
            # so the code does not depend on the residual qubit order
            code = identify_bell(residual) if len(rest) == 2 else None
            if code is not None:
                self._new_cluster(rest, code=code)
            else:
                self._new_cluster(rest, _state=residual)
        return m
