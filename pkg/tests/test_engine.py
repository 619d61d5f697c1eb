import json
from functools import reduce
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqpc.classical import ConfigError, Digest, SecretInput
from bellqpc.engine import (
    TP,
    AttackSpec,
    ProtocolParams,
    ReplayDivergence,
    Transcript,
    _Run,
    _header,
    groups_for,
    replay,
    run_on_digests,
    run_protocol,
    run_three_party,
    run_two_party_hash,
    run_two_party_llcll,
    run_two_party_lwc,
    validate_transcript,
)


def x8(v):
    return SecretInput.from_int(v, 8)


@pytest.mark.parametrize("runner", [run_two_party_lwc, run_two_party_llcll, run_two_party_hash])
def test_two_party_verdicts(runner):
    p = ProtocolParams("lwc2", seed=1)
    res, _ = runner(p, x8(0xA5), x8(0xA5))
    assert res.verdicts == {(1, 2): "equal"} and res.totals[(1, 2)] == 0
    res, _ = runner(p, x8(0xA5), x8(0xA4))
    assert res.verdicts == {(1, 2): "unequal"}


def test_unhashed_total_is_hamming_distance():
    res, _ = run_two_party_lwc(ProtocolParams("lwc2", seed=3), x8(0b1111_0000), x8(0b0000_0000))
    assert res.totals[(1, 2)] == 4


def test_three_party():
    res, t = run_three_party(ProtocolParams("three", k=3, seed=2), x8(1), x8(1), x8(2))
    assert res.verdicts == {(1, 2): "equal", (1, 3): "unequal", (2, 3): "unequal"}
    assert not validate_transcript(t)


def test_five_party_mixed_inputs():
    a, b, c = x8(0x11), x8(0x22), x8(0x33)
    params = ProtocolParams("multi", k=5, seed=4)
    res, t = run_protocol(params, [a, a, b, c, a])
    equal = {pair for pair, v in res.verdicts.items() if v == "equal"}
    assert equal == {(1, 2), (1, 5), (2, 5)}
    assert len(res.verdicts) == 10


def test_odd_hash_bits_pad():
    res, _ = run_two_party_hash(ProtocolParams("hash2", hash_bits=5, seed=0), x8(7), x8(7))
    assert res.equal(1, 2)


def test_config_errors():
    with pytest.raises(ConfigError, match="--k"):
        ProtocolParams("lwc2", k=3)
    with pytest.raises(ConfigError, match="--k"):
        ProtocolParams("three", k=4)
    with pytest.raises(ConfigError, match="--protocol"):
        ProtocolParams("bb84")
    with pytest.raises(ConfigError):
        ProtocolParams("hash2", hash_bits=513)
    with pytest.raises(ConfigError, match="--attack-channel"):
        AttackSpec("intercept-resend")
    with pytest.raises(ConfigError, match="--attack-channel"):
        ProtocolParams("lwc2", attack=AttackSpec("intercept-resend", "P7-TP"))
    with pytest.raises(ConfigError):
        run_protocol(ProtocolParams("lwc2"), [x8(1)])
    with pytest.raises(ConfigError):
        run_protocol(ProtocolParams("lwc2", bit_length=4), [x8(1), x8(1)])


def test_channel_aliases():
    assert AttackSpec("measure-resend", "a-tp").channel == "P1-TP"
    assert AttackSpec("measure-resend", "TP-C").channel == "TP-P3"


def test_params_round_trip():
    p = ProtocolParams("multi", k=4, seed=9, check_count=3, attack=AttackSpec("intercept-resend", "P2-TP"))
    assert ProtocolParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_determinism_and_replay():
    p = ProtocolParams("multi", k=4, seed=11, hash_bits=16)
    inputs = [x8(v) for v in (1, 2, 1, 3)]
    _, t1 = run_protocol(p, inputs)
    _, t2 = run_protocol(p, inputs)
    assert t1.to_jsonl() == t2.to_jsonl()
    parsed = Transcript.from_jsonl(t1.to_jsonl())
    assert replay(parsed).to_jsonl() == t1.to_jsonl()


def test_replay_detects_tampering():
    _, t = run_protocol(ProtocolParams("three", k=3, seed=1), [x8(1), x8(2), x8(3)])
    t.events[5] = dict(t.events[5], seq=999)
    with pytest.raises(ReplayDivergence):
        replay(t)
    bad = Transcript(dict(t.header, seed=t.header["seed"] + 1), t.events)
    with pytest.raises(ReplayDivergence):
        replay(bad)


def test_from_jsonl_rejects_foreign():
    with pytest.raises(ValueError):
        Transcript.from_jsonl('{"schema":"other"}\n')


def test_replay_digest_runs():
    p = ProtocolParams("multi", k=3, hash_bits=4, seed=6)
    _, t = run_on_digests(p, [Digest.from_int(v, 4) for v in (3, 3, 9)])
    assert replay(Transcript.from_jsonl(t.to_jsonl())).to_jsonl() == t.to_jsonl()


@pytest.mark.parametrize("variant,k", [("lwc2", 2), ("llcll2", 2), ("hash2", 2), ("three", 3), ("multi", 5)])
def test_whitelist_and_clean_checks(variant, k):
    res, t = run_protocol(ProtocolParams(variant, k=k, seed=3), [x8(i % 3) for i in range(k)])
    assert validate_transcript(t) == []
    assert all(e["error_rate"] == 0 for e in t.of_type("check_result"))
    assert not res.aborted


def test_whitelist_flags_forbidden_traffic():
    _, t = run_protocol(ProtocolParams("three", k=3, seed=3), [x8(1)] * 3)
    leak = {"type": "classical_send", "seq": 10_000, "vis": "public", "sender": "P1",
            "receivers": ["P2"], "round": 2, "symbol": "groups:P1", "values": [0]}
    tp_leak = dict(leak, sender=TP, symbol="combined:P1,P2")
    misroute = dict(leak, symbol="combined:P1,P2", receivers=["P3"])
    t.events += [leak, tp_leak, misroute]
    assert len(validate_transcript(t)) == 3


def test_passive_eavesdropper_sees_exactly_public_classical_traffic():
    params = ProtocolParams("multi", k=4, seed=8, attack=AttackSpec("passive"))
    inputs = [x8(v) for v in (5, 5, 6, 7)]
    groups = [groups_for(params, x) for x in inputs]
    run = _Run(params, groups, _header(params, "secret", 8, [x.to_hex() for x in inputs]))
    res, t = run.run()
    assert run.attacker.captured == t.classical_events()
    assert not res.aborted
    assert run.register.live() == []


def test_events_have_visibility_and_sequence():
    _, t = run_protocol(ProtocolParams("multi", k=3, seed=1), [x8(1), x8(2), x8(1)])
    assert [e["seq"] for e in t.events] == list(range(len(t.events)))
    for e in t.events:
        assert e["vis"] in ("public", TP, "P1", "P2", "P3")
        if e["type"] in ("bell_measure", "tp_score", "prepare", "verdict"):
            assert e["vis"] != "public"
    for e in t.of_type("tp_score"):
        assert all(s in (0, 1, 2) for s in e["scores"]) and sum(e["scores"]) == e["total"]


def _chain_ok(t, k):
    user = {}
    tp = {}
    for e in t.of_type("bell_measure"):
        if e["actor"] == TP:
            tp[e["round"]] = e["codes"]
        else:
            user[e["round"]] = e["codes"]
    for rnd in range(2, k + 1):
        expected = [reduce(lambda a, b: a ^ b, col) for col in zip(*(user[i] for i in range(1, rnd + 1)))]
        if tp[rnd] != expected:
            return False
    return True


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_chain_invariant(k, seed):
    """TP's round-k code is the XOR of all user codes from rounds 1..k."""
    params = ProtocolParams("multi", k=k, hash_bits=16, seed=seed)
    _, t = run_protocol(params, [x8(i) for i in range(k)])
    assert _chain_ok(t, k)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["lwc2", "llcll2", "hash2", "three", "multi"]), st.integers(0, 2**31 - 1),
       st.lists(st.integers(0, 255), min_size=5, max_size=5))
def test_verdict_matches_digest_equality(variant, seed, values):
    k = {"three": 3, "multi": 5}.get(variant, 2)
    params = ProtocolParams(variant, k=k, hash_bits=32, seed=seed)
    inputs = [x8(v) for v in values[:k]]
    res, t = run_protocol(params, inputs)
    groups = [groups_for(params, x) for x in inputs]
    for m, kk in combinations(range(1, k + 1), 2):
        assert res.equal(m, kk) == (groups[m - 1] == groups[kk - 1])
    assert replay(t).to_jsonl() == t.to_jsonl()


def test_intercept_resend_aborts_and_releases_particles():
    params = ProtocolParams("multi", k=3, seed=2, attack=AttackSpec("intercept-resend", "P1-TP"))
    inputs = [x8(1)] * 3
    groups = [groups_for(params, x) for x in inputs]
    run = _Run(params, groups, _header(params, "secret", 8, [x.to_hex() for x in inputs]))
    res, t = run.run()
    assert res.aborted and t.aborted
    assert res.verdicts == {}
    assert run.register.live() == []
    abort = t.of_type("abort")[0]
    assert abort["vis"] == "public" and abort["error_rate"] > 0


def test_attack_on_unchecked_lwc2_breaks_chain_but_completes():
    params = ProtocolParams("lwc2", seed=1, attack=AttackSpec("intercept-resend", "P1-TP"))
    res, t = run_protocol(params, [x8(9), x8(9)])
    # no check on lwc2: the disturbance goes unnoticed and corrupts the result
    assert not res.aborted
    assert t.of_type("chain_break")
    assert not res.equal(1, 2)


def test_report_contents(schema_validator):
    params = ProtocolParams("multi", k=4, seed=5)
    res, t = run_protocol(params, [x8(1), x8(1), x8(2), x8(3)])
    report = res.to_report(params, t)
    schema_validator("report", report)
    schema_validator("transcript-header", t.header)
    for e in t.events:
        schema_validator("transcript-event", e)
    assert report["executions"] == 1 and len(report["pairs"]) == 6
    assert report["verdict_matrix"][0][1] == "equal"


def test_aborted_report_validates(schema_validator):
    params = ProtocolParams("llcll2", seed=3, attack=AttackSpec("intercept-resend", "P1-TP"))
    res, t = run_protocol(params, [x8(1), x8(1)])
    assert res.aborted
    schema_validator("report", res.to_report(params, t))
