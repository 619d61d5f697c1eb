"""Party orchestration for the entanglement-swapping comparison protocols.

Every variant runs the same chain of rounds.  Users P1..PK and TP each
prepare one Phi+ pair per group.  In round k, Pk and TP swap their second
particle sequences; Pk Bell-measures (its first particles, what TP sent)
and TP's held pairs collapse.  From round 2 on, TP Bell-measures its held
pairs as well, Pk collects the masked/unmasked codes it needs, and TP
scores every pair (m, k) with m < k.

The variants differ only in how groups are formed (raw input or keyed
digest), the number of users, and how each transmission is checked:

========  ===  ========  ====================================
variant    K   groups    transmission check
========  ===  ========  ====================================
lwc2       2   raw       none
llcll2     2   raw       decoy photons (P1's relayed to P2)
hash2      2   digest    decoy photons, or none (``decoys=False``)
three      3   digest    sample Bell pairs
multi     >=2  digest    sample Bell pairs
========  ===  ========  ====================================
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from functools import reduce
from typing import Sequence

import numpy as np

from .channels import (
    AttackerModel,
    ClassicalChannel,
    QuantumChannel,
    bellpair_insert,
    bellpair_verify,
    decoy_insert,
    decoy_measure,
    decoy_verify,
    strip_positions,
)
from .classical import (
    DEFAULT_HASH_BITS,
    DEFAULT_KEY,
    HASH_PRIMITIVE,
    ConfigError,
    Digest,
    GroupSeq,
    HashConfig,
    SecretInput,
    group_bits,
    group_score,
    hash_digest,
    total_score,
)
from .particles import ParticleRegister

TRANSCRIPT_SCHEMA = "bellqpc.transcript/1"
REPORT_SCHEMA = "bellqpc.report/1"
VARIANTS = ("lwc2", "llcll2", "hash2", "three", "multi")
TWO_PARTY = ("lwc2", "llcll2", "hash2")
HASHED = ("hash2", "three", "multi")
CLI_ATTACKS = ("none", "intercept-resend", "measure-resend", "passive", "tp-bell")
_ATTACKER_KIND = {
    "none": "none",
    "intercept-resend": "intercept_resend",
    "measure-resend": "measure_resend",
    "passive": "passive_classical",
    "tp-bell": "none",
}
TP = "TP"
ALIASES = {"A": "P1", "B": "P2", "C": "P3", "T": TP}
PUBLIC = "public"


class ProtocolAbort(Exception):
    pass


class ReplayDivergence(RuntimeError):
    """Re-executing a transcript's header did not reproduce its events."""


def party(i: int) -> str:
    return f"P{i}"


def canonical_party(name: str) -> str:
    name = name.strip().upper()
    return ALIASES.get(name, name)


def parse_channel(name: str) -> tuple[str, str]:
    try:
        a, b = name.split("-")
    except ValueError:
        raise ConfigError(f"--attack-channel must look like P1-TP, got {name!r}") from None
    return canonical_party(a), canonical_party(b)


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    channel: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in CLI_ATTACKS:
            raise ConfigError(f"--attack must be one of {', '.join(CLI_ATTACKS)}; got {self.kind!r}")
        if self.kind in ("intercept-resend", "measure-resend"):
            if not self.channel:
                raise ConfigError(f"--attack {self.kind} needs --attack-channel")
            object.__setattr__(self, "channel", "-".join(parse_channel(self.channel)))

    @property
    def quantum(self) -> bool:
        return self.kind in ("intercept-resend", "measure-resend")


@dataclass(frozen=True)
class ProtocolParams:
    variant: str
    k: int = 2
    bit_length: int = 8
    hash_bits: int = DEFAULT_HASH_BITS
    seed: int = 0
    check_count: int | None = None
    decoys: bool = True
    attack: AttackSpec = field(default_factory=AttackSpec)
    hash_key: str = DEFAULT_KEY.hex()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"--protocol must be one of {', '.join(VARIANTS)}; got {self.variant!r}")
        if self.variant in TWO_PARTY and self.k != 2:
            raise ConfigError(f"--k must be 2 for {self.variant}")
        if self.variant == "three" and self.k != 3:
            raise ConfigError("--k must be 3 for three")
        if self.k < 2:
            raise ConfigError("--k must be at least 2")
        if self.bit_length < 1:
            raise ConfigError("bit_length must be positive")
        if self.check_count is not None and self.check_count < 0:
            raise ConfigError("--check-count must be nonnegative")
        if self.attack.channel:
            for p in parse_channel(self.attack.channel):
                if p != TP and p not in [party(i) for i in range(1, self.k + 1)]:
                    raise ConfigError(f"--attack-channel names unknown party {p!r}")
        if self.hashed:
            self.hash_config  # validates N against the primitive

    @property
    def hashed(self) -> bool:
        return self.variant in HASHED

    @property
    def hash_config(self) -> HashConfig:
        return HashConfig(bytes.fromhex(self.hash_key), self.hash_bits)

    @property
    def compared_bits(self) -> int:
        return self.hash_bits if self.hashed else self.bit_length

    @property
    def n_groups(self) -> int:
        return (self.compared_bits + 1) // 2

    @property
    def checks(self) -> int:
        return self.n_groups if self.check_count is None else self.check_count

    @property
    def check_scheme(self) -> str:
        if self.variant == "lwc2" or (self.variant == "hash2" and not self.decoys):
            return "none"
        return "decoy" if self.variant in TWO_PARTY else "bellpair"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack"] = asdict(self.attack)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolParams":
        d = dict(d)
        d["attack"] = AttackSpec(**d.get("attack", {}))
        return cls(**d)


# --------------------------------------------------------------------------
# transcripts and results


@dataclass
class Transcript:
    header: dict
    events: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("schema") != TRANSCRIPT_SCHEMA:
            raise ValueError("not a bellqpc transcript")
        return cls(rows[0], rows[1:])

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams.from_dict(self.header["params"])

    @property
    def aborted(self) -> bool:
        return any(e["type"] == "abort" for e in self.events)

    def of_type(self, *types: str) -> list[dict]:
        return [e for e in self.events if e["type"] in types]

    def classical_events(self) -> list[dict]:
        return [e for e in self.events if e["vis"] == PUBLIC and e["type"] != "q_send"]

    def visible_to(self, role: str) -> list[dict]:
        return [e for e in self.events if e["vis"] in (PUBLIC, role)]


@dataclass
class PairwiseResults:
    k: int
    totals: dict[tuple[int, int], int] = field(default_factory=dict)
    verdicts: dict[tuple[int, int], str] = field(default_factory=dict)
    status: str = "completed"

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    def equal(self, m: int, k: int) -> bool:
        m, k = min(m, k), max(m, k)
        return self.verdicts[(m, k)] == "equal"

    def matrix(self) -> list[list[str | None]]:
        out: list[list[str | None]] = [[None] * self.k for _ in range(self.k)]
        for (m, k), v in self.verdicts.items():
            out[m - 1][k - 1] = out[k - 1][m - 1] = v
        return out

    def total_matrix(self) -> list[list[int | None]]:
        out: list[list[int | None]] = [[None] * self.k for _ in range(self.k)]
        for (m, k), v in self.totals.items():
            out[m - 1][k - 1] = out[k - 1][m - 1] = v
        return out

    def to_report(self, params: ProtocolParams, transcript: Transcript | None = None) -> dict:
        report = {
            "schema": REPORT_SCHEMA,
            "status": self.status,
            "variant": params.variant,
            "k": self.k,
            "seed": params.seed,
            "params": params.to_dict(),
            "executions": 1,
            "pairs": [
                {"m": m, "k": k, "total": self.totals[(m, k)], "verdict": self.verdicts[(m, k)]}
                for (m, k) in sorted(self.verdicts)
            ],
            "verdict_matrix": self.matrix(),
            "total_matrix": self.total_matrix(),
        }
        if transcript is not None:
            report["hash_primitive"] = transcript.header["hash"]["primitive"] if transcript.header["hash"] else None
            report["checks"] = [
                {k: e[k] for k in ("channel", "scheme", "count", "error_rate")} for e in transcript.of_type("check_result")
            ]
            abort = transcript.of_type("abort")
            report["abort"] = {k: abort[0][k] for k in ("channel", "error_rate")} if abort else None
        return report


# --------------------------------------------------------------------------
# the run


def _xor(values) -> int:
    return reduce(lambda a, b: a ^ b, values, 0)


class _Run:
    def __init__(self, params: ProtocolParams, groups: Sequence[GroupSeq], header: dict):
        self.params = params
        self.groups = list(groups)
        self.k = params.k
        self.n = params.n_groups
        self.transcript = Transcript(header)
        proto_seq, eve_seq = np.random.SeedSequence(params.seed).spawn(2)
        self.rng = np.random.default_rng(proto_seq)
        self.register = ParticleRegister()
        atk = params.attack
        self.attacker = AttackerModel(_ATTACKER_KIND[atk.kind], np.random.default_rng(eve_seq))
        self.classical = ClassicalChannel(observers=[self.transcript.events.append, self.attacker.observe])
        self.codes: dict[str, list[int]] = {}
        self.inbox: dict[str, dict[str, list[int]]] = {}
        self.results = PairwiseResults(self.k)

    # -- event helpers ----------------------------------------------------

    def _event(self, type_: str, vis: str, **fields) -> dict:
        return {"seq": len(self.transcript.events), "type": type_, "vis": vis, **fields}

    def emit(self, type_: str, vis: str, **fields) -> None:
        self.transcript.events.append(self._event(type_, vis, **fields))

    def publish(self, type_: str, **fields) -> dict:
        return self.classical.send(self._event(type_, PUBLIC, **fields))

    def send(self, sender: str, receivers: list[str], rnd: int, symbol: str, values) -> None:
        self.publish("classical_send", sender=sender, receivers=receivers, round=rnd, symbol=symbol, values=values)
        for r in receivers:
            self.inbox.setdefault(r, {})[symbol] = values

    def qchannel(self, sender: str, receiver: str) -> QuantumChannel:
        ch = QuantumChannel(sender, receiver)
        if self.params.attack.quantum and self.params.attack.channel == ch.name:
            ch.attacker = self.attacker
        return ch

    def transmit(self, sender: str, receiver: str, seq: list[int], rnd: int) -> list[int]:
        ch = self.qchannel(sender, receiver)
        self.emit("q_send", PUBLIC, channel=ch.name, round=rnd, count=len(seq))
        return ch.transmit(self.register, seq)

    def check(self, channel: str, scheme: str, rnd: int, count: int, error_rate: float) -> None:
        self.publish("check_result", channel=channel, scheme=scheme, round=rnd, count=count, error_rate=error_rate)
        if error_rate > 0:
            raise ProtocolAbort(channel, error_rate)

    # -- protocol ---------------------------------------------------------

    def run(self) -> tuple[PairwiseResults, Transcript]:
        try:
            self._execute()
        except ProtocolAbort as exc:
            channel, rate = exc.args
            self.publish("abort", channel=channel, error_rate=rate, reason="eavesdropping check failed")
            self.register.discard_live()
            self.results = PairwiseResults(self.k, status="aborted")
            return self.results, self.transcript
        dangling = self.register.live()
        if dangling:
            raise RuntimeError(f"particles never measured: {dangling}")
        return self.results, self.transcript

    def _execute(self) -> None:
        reg, n = self.register, self.n
        s1: dict[str, list[int]] = {}
        s2: dict[str, list[int]] = {}
        for i in range(1, self.k + 1):
            p = party(i)
            pairs = [reg.new_bell_pair(p) for _ in range(n)]
            s1[p], s2[p] = [a for a, _ in pairs], [b for _, b in pairs]
            self.emit("prepare", p, actor=p, pairs=n, groups=list(self.groups[i - 1].groups))
        pairs = [reg.new_bell_pair(TP) for _ in range(n)]
        tp_s1, tp_s2 = [a for a, _ in pairs], [b for _, b in pairs]
        self.emit("prepare", TP, actor=TP, pairs=n)

        relay = None  # P1's decoy record travelling with its sequence (decoy scheme)
        for rnd in range(1, self.k + 1):
            user = party(rnd)
            user_s1, got_tp, got_user, relay = self._exchange(rnd, user, s1[user], s2[user], tp_s1, tp_s2, relay)
            tp_s1 = got_tp[0]
            codes = [int(reg.bell_measure(user, a, b, self.rng)) for a, b in zip(user_s1, got_tp[1])]
            self.codes[user] = codes
            self.emit("bell_measure", user, actor=user, round=rnd, codes=codes)
            tp_s2 = got_user
            if rnd == 1:
                if self.params.attack.kind == "tp-bell" and relay is None:
                    # TP measures its own collapsed pairs: legal and invisible to everyone else
                    spy = [reg.bell_measure(TP, a, b, self.rng) for a, b in zip(tp_s1, tp_s2)]
                    self.emit("bell_measure", TP, actor=TP, round=rnd, codes=[int(c) for c in spy], attack=True)
                self._check_chain(rnd, tp_s1, s2[user])
                continue
            tp_codes = [int(reg.bell_measure(TP, a, b, self.rng)) for a, b in zip(tp_s1, tp_s2)]
            self.codes[TP] = tp_codes
            self.emit("bell_measure", TP, actor=TP, round=rnd, codes=tp_codes)
            self._check_chain(rnd, tp_s1, s2[user], tp_codes)
            self._compare(rnd)

    def _exchange(self, rnd, user, user_s1, user_s2, tp_s1, tp_s2, relay):
        """Swap second sequences between ``user`` and TP under the variant's check scheme.

        Returns (user's first sequence, (TP first, sequence user received),
        sequence TP received, pending relay record).
        """
        scheme, c, reg, rng = self.params.check_scheme, self.params.checks, self.register, self.rng
        up, down = f"{user}-{TP}", f"{TP}-{user}"
        if scheme == "none":
            got_user = self.transmit(user, TP, user_s2, rnd)
            got_tp = self.transmit(TP, user, tp_s2, rnd)
            return user_s1, (tp_s1, got_tp), got_user, None

        if scheme == "bellpair":
            u1, u2, ub = bellpair_insert(reg, user, user_s1, user_s2, c, rng)
            t1, t2, tb = bellpair_insert(reg, TP, tp_s1, tp_s2, c, rng)
            got_user = self.transmit(user, TP, u2, rnd)
            got_tp = self.transmit(TP, user, t2, rnd)
            for sender, receiver, batch, name in ((user, TP, ub, up), (TP, user, tb, down)):
                rate = bellpair_verify(reg, batch, rng)
                self.publish("check_announce", scheme="bellpair", channel=name, round=rnd, sender=sender,
                             receiver=receiver, positions=batch.positions, bases=batch.bases)
                self.publish("check_announce", scheme="bellpair", channel=name, round=rnd, sender=receiver,
                             receiver=sender, results=batch.transmitted_results)
                self.check(name, "bellpair", rnd, len(batch), rate)
            return (
                strip_positions(u1, ub.positions),
                (strip_positions(t1, tb.positions), strip_positions(got_tp, tb.positions)),
                strip_positions(got_user, ub.positions),
                None,
            )

        # decoy photons, two users only
        ud_seq, ud = decoy_insert(reg, user, user_s2, c, rng)
        if rnd == 1:
            td_seq, td = decoy_insert(reg, TP, tp_s2, c, rng)
        else:
            td_seq, td = tp_s2, relay  # forward P1's protected sequence untouched
        got_user = self.transmit(user, TP, ud_seq, rnd)
        got_tp = self.transmit(TP, user, td_seq, rnd)

        def run_check(owner, measurer, batch, name):
            self.publish("check_announce", scheme="decoy", channel=name, round=rnd, sender=owner,
                         receiver=measurer, positions=batch.positions, bases=batch.bases)
            results = decoy_measure(reg, measurer, batch, rng)
            self.publish("check_announce", scheme="decoy", channel=name, round=rnd, sender=measurer,
                         receiver=owner, results=results)
            self.check(name, "decoy", rnd, len(batch), decoy_verify(batch, results))

        if rnd == 1:
            run_check(TP, user, td, down)
            return user_s1, (tp_s1, strip_positions(got_tp, td.positions)), got_user, ud
        run_check(user, TP, ud, up)
        run_check(party(1), user, relay, f"{party(1)}-{TP}-{user}")
        return (
            user_s1,
            (tp_s1, strip_positions(got_tp, relay.positions)),
            strip_positions(got_user, ud.positions),
            None,
        )

    def _check_chain(self, rnd: int, tp_s1, user_s2, tp_codes=None) -> None:
        """TP's pair j must carry code R^{P1}_j xor ... xor R^{Pk}_j."""
        expected = [_xor(self.codes[party(i)][j] for i in range(1, rnd + 1)) for j in range(self.n)]
        actual = [self.register.pair_code(a, b) for a, b in zip(tp_s1, user_s2)]
        ok = actual == expected and (tp_codes is None or tp_codes == expected)
        if not ok and not self.params.attack.quantum:
            raise AssertionError(f"chain invariant broken in round {rnd}")
        if not ok:
            self.emit("chain_break", TP, round=rnd)

    def _compare(self, rnd: int) -> None:
        """Round ``rnd``: P_rnd aggregates, TP scores every pair (m, rnd)."""
        k_name = party(rnd)
        for i in range(1, rnd):
            p = party(i)
            masked = [r ^ g for r, g in zip(self.codes[p], self.groups[i - 1].groups)]
            self.send(p, [k_name], rnd, f"masked:{p}", masked)
            if rnd > 2:
                self.send(p, [k_name], rnd, f"code:{p}", list(self.codes[p]))
        box = self.inbox[k_name]
        own = [r ^ g for r, g in zip(self.codes[k_name], self.groups[rnd - 1].groups)]
        for m in range(1, rnd):
            parts = [box[f"masked:{party(m)}"], own]
            parts += [box[f"code:{party(i)}"] for i in range(1, rnd) if i != m]
            combined = [_xor(col) for col in zip(*parts)]
            self.send(k_name, [TP], rnd, f"combined:{party(m)},{k_name}", combined)
        for m in range(1, rnd):
            combined = self.inbox[TP][f"combined:{party(m)},{k_name}"]
            scores = [group_score(r, t) for r, t in zip(combined, self.codes[TP])]
            total = total_score(scores)
            self.emit("tp_score", TP, actor=TP, round=rnd, pair=[m, rnd], scores=scores, total=total)
            self.publish("classical_send", sender=TP, receivers=[party(m), k_name], round=rnd,
                         symbol=f"total:{party(m)},{k_name}", values=[total])
            verdict = "equal" if total == 0 else "unequal"
            self.results.totals[(m, rnd)] = total
            self.results.verdicts[(m, rnd)] = verdict
            self.emit("verdict", party(m), pair=[m, rnd], total=total, verdict=verdict)
            self.emit("verdict", k_name, pair=[m, rnd], total=total, verdict=verdict)


# --------------------------------------------------------------------------
# entry points


def _header(params: ProtocolParams, kind: str, width: int, values: list[str]) -> dict:
    return {
        "schema": TRANSCRIPT_SCHEMA,
        "params": params.to_dict(),
        "seed": params.seed,
        "hash": (
            {"primitive": HASH_PRIMITIVE, "bits": params.hash_bits, "key": params.hash_key}
            if params.hashed and kind == "secret"
            else None
        ),
        "inputs": {"kind": kind, "bit_length": width, "values": values},
    }


def groups_for(params: ProtocolParams, x: SecretInput) -> GroupSeq:
    if x.length != params.bit_length:
        raise ConfigError(f"input has {x.length} bits, protocol expects L={params.bit_length}")
    if params.hashed:
        return group_bits(hash_digest(params.hash_config, x))
    return group_bits(x)


def run_protocol(params: ProtocolParams, inputs: Sequence[SecretInput]) -> tuple[PairwiseResults, Transcript]:
    if len(inputs) != params.k:
        raise ConfigError(f"{params.variant} with K={params.k} needs {params.k} inputs, got {len(inputs)}")
    groups = [groups_for(params, x) for x in inputs]
    header = _header(params, "secret", params.bit_length, [x.to_hex() for x in inputs])
    return _Run(params, groups, header).run()


def run_on_digests(params: ProtocolParams, digests: Sequence[Digest]) -> tuple[PairwiseResults, Transcript]:
    """Run a hash variant on given digests, bypassing the hash (for exhaustive sweeps)."""
    if not params.hashed:
        raise ConfigError(f"{params.variant} compares raw inputs, not digests")
    if len(digests) != params.k or any(d.length != params.hash_bits for d in digests):
        raise ConfigError(f"need {params.k} digests of {params.hash_bits} bits")
    header = _header(params, "digest", params.hash_bits, [d.to_hex() for d in digests])
    return _Run(params, [group_bits(d) for d in digests], header).run()


def _variant(params: ProtocolParams, variant: str, k: int) -> ProtocolParams:
    if params.variant != variant or params.k != k:
        params = replace(params, variant=variant, k=k)
    return params


def run_two_party_lwc(params: ProtocolParams, x: SecretInput, y: SecretInput):
    return run_protocol(_variant(params, "lwc2", 2), [x, y])


def run_two_party_llcll(params: ProtocolParams, x: SecretInput, y: SecretInput):
    return run_protocol(_variant(params, "llcll2", 2), [x, y])


def run_two_party_hash(params: ProtocolParams, x: SecretInput, y: SecretInput):
    return run_protocol(_variant(params, "hash2", 2), [x, y])


def run_three_party(params: ProtocolParams, x: SecretInput, y: SecretInput, z: SecretInput):
    return run_protocol(_variant(params, "three", 3), [x, y, z])


def run_multi_party(params: ProtocolParams, inputs: Sequence[SecretInput]):
    return run_protocol(_variant(params, "multi", len(inputs)), inputs)


def replay(transcript: Transcript, check: bool = True) -> Transcript:
    """Re-execute a transcript from its header.

    With ``check`` the fresh transcript must match byte for byte, otherwise
    :class:`ReplayDivergence` is raised.
    """
    header = transcript.header
    try:
        params = ProtocolParams.from_dict(header["params"])
        if header["seed"] != params.seed:
            raise ReplayDivergence("header seed disagrees with params seed")
        inp = header["inputs"]
        if inp["kind"] == "digest":
            values = [Digest.from_int(int(v, 16), inp["bit_length"]) for v in inp["values"]]
            _, fresh = run_on_digests(params, values)
        else:
            values = [SecretInput.from_hex(v, inp["bit_length"]) for v in inp["values"]]
            _, fresh = run_protocol(params, values)
    except (KeyError, TypeError, ValueError) as exc:
        raise ReplayDivergence(f"cannot re-execute header: {exc}") from exc
    if check and fresh.to_jsonl() != transcript.to_jsonl():
        raise ReplayDivergence("replayed transcript differs from the original")
    return fresh


_PUBLIC_SYMBOLS = {"masked", "code", "combined"}


def validate_transcript(transcript: Transcript) -> list[str]:
    """Whitelist check on classical traffic; returns a list of violations (empty if clean)."""
    problems = []
    for e in transcript.events:
        if e["type"] != "classical_send":
            continue
        kind = e["symbol"].split(":")[0]
        sender = e["sender"]
        if sender == TP:
            if kind != "total":
                problems.append(f"event {e['seq']}: TP sent {e['symbol']}")
        elif kind not in _PUBLIC_SYMBOLS:
            problems.append(f"event {e['seq']}: {sender} sent {e['symbol']}")
        elif kind == "combined" and e["receivers"] != [TP]:
            problems.append(f"event {e['seq']}: combined value sent to {e['receivers']}")
    return problems
