"""``bellqpc`` command line: run, verify, leakage, attack, oracle."""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .bell import code_of, label_of, oracle_swap_distribution, swap_collapse, BellCode
from .classical import DEFAULT_HASH_BITS, ConfigError, HashConfig, SecretInput
from .engine import (
    CLI_ATTACKS,
    VARIANTS,
    AttackSpec,
    ProtocolParams,
    Transcript,
    run_protocol,
)

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2), which collides with "aborted"
        raise UsageError(message)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def derive_seed(seed: int, trial: int) -> int:
    """Per-trial seed from (seed, trial index); independent of scheduling order."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


# --------------------------------------------------------------------------
# run


@dataclass
class RunConfig:
    params: ProtocolParams
    inputs: list[SecretInput]
    transcript_path: Path | None
    report_path: Path | None
    trials: int
    workers: int


def load_inputs(path: str) -> tuple[list[str], int]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--inputs: cannot read {path}: {exc}") from None
    if not isinstance(doc, dict) or "inputs" not in doc or "bit_length" not in doc:
        raise ConfigError('--inputs file must be {"inputs": ["<hex>", ...], "bit_length": L}')
    return [str(v) for v in doc["inputs"]], int(doc["bit_length"])


def _hash_key(args) -> str:
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
            key = bytes.fromhex(cfg["hash_key"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"--config: need a JSON file with a hex 'hash_key' ({exc})") from None
        return HashConfig(key, 2).key.hex()
    return HashConfig.from_env(2).key.hex()


def build_run_config(args) -> RunConfig:
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    if args.inputs:
        hexes, bit_length = load_inputs(args.inputs)
    elif args.input:
        if args.bit_length is None:
            raise ConfigError("--input needs --bit-length")
        hexes, bit_length = args.input, args.bit_length
    else:
        raise ConfigError("one of --inputs or --input is required")
    k = args.k if args.k is not None else {"three": 3}.get(args.protocol, 2 if args.protocol != "multi" else len(hexes))
    if args.no_decoys and args.protocol != "hash2":
        raise ConfigError("--no-decoys only applies to --protocol hash2")
    if args.attack_channel and args.attack not in ("intercept-resend", "measure-resend"):
        raise ConfigError("--attack-channel only applies to intercept-resend/measure-resend")
    params = ProtocolParams(
        variant=args.protocol,
        k=k,
        bit_length=bit_length,
        hash_bits=args.hash_bits,
        seed=seed,
        check_count=args.check_count,
        decoys=not args.no_decoys,
        attack=AttackSpec(args.attack, args.attack_channel),
        hash_key=_hash_key(args),
    )
    if len(hexes) != k:
        raise ConfigError(f"--k {k} needs {k} inputs, got {len(hexes)}")
    try:
        inputs = [SecretInput.from_hex(h, bit_length) for h in hexes]
    except ValueError as exc:
        raise ConfigError(f"--inputs: {exc}") from None
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    return RunConfig(
        params, inputs,
        Path(args.transcript) if args.transcript else None,
        Path(args.report) if args.report else None,
        args.trials, args.workers,
    )


def _print_matrix(results, out) -> None:
    k = results.k
    names = [f"P{i}" for i in range(1, k + 1)]
    print("      " + " ".join(f"{n:>8}" for n in names), file=out)
    for i, row in enumerate(results.matrix()):
        cells = ["-" if v is None else v for v in row]
        print(f"{names[i]:>5} " + " ".join(f"{c:>8}" for c in cells), file=out)


def cmd_run(cfg: RunConfig, out=sys.stdout) -> int:
    if cfg.trials > 1:
        return _run_trials(cfg, out)
    results, transcript = run_protocol(cfg.params, cfg.inputs)
    report = results.to_report(cfg.params, transcript)
    if cfg.transcript_path:
        cfg.transcript_path.write_text(transcript.to_jsonl())
    if cfg.report_path:
        cfg.report_path.write_text(_dump(report) + "\n")
    print(f"protocol={cfg.params.variant} K={cfg.params.k} seed={cfg.params.seed} status={results.status}", file=out)
    if results.aborted:
        abort = report["abort"]
        print(f"aborted: check on {abort['channel']} saw error rate {abort['error_rate']:.3f}", file=out)
        return EXIT_ABORT
    _print_matrix(results, out)
    return EXIT_OK


def _run_trials(cfg: RunConfig, out) -> int:
    def one(i: int):
        params = replace(cfg.params, seed=derive_seed(cfg.params.seed, i))
        results, _ = run_protocol(params, cfg.inputs)
        return results

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        all_results = list(pool.map(one, range(cfg.trials)))
    aborted = sum(r.aborted for r in all_results)
    tally: dict[str, dict[str, int]] = {}
    for r in all_results:
        for (m, k), v in r.verdicts.items():
            tally.setdefault(f"{m},{k}", {}).setdefault(v, 0)
            tally[f"{m},{k}"][v] += 1
    summary = {
        "schema": "bellqpc.trials/1",
        "variant": cfg.params.variant,
        "seed": cfg.params.seed,
        "trials": cfg.trials,
        "aborted": aborted,
        "abort_rate": aborted / cfg.trials,
        "verdicts": tally,
    }
    if cfg.report_path:
        cfg.report_path.write_text(_dump(summary) + "\n")
    print(_dump(summary), file=out)
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def _set_diff(got: dict, want: dict) -> list[str]:
    out = []
    for r in sorted(want):
        for label, pairs in (("missing", want[r] - got.get(r, set())), ("unexpected", got.get(r, set()) - want[r])):
            if pairs:
                shown = ", ".join(f"({a:02b},{b:02b})" for a, b in sorted(pairs))
                out.append(f"R'={r} {label}: {shown}")
    return out


def run_verification(coding=None) -> list[tuple[str, bool, str]]:
    """Every table/oracle/constant check as (name, passed, detail)."""
    kw = {} if coding is None else {"coding": coding}
    checks = []

    problems = analysis.compare_swap_table(analysis.build_swap_table(0b00, **kw))
    checks.append(("swap-table", not problems, "\n".join(problems) or "16 rows x 4 G_B choices match"))

    try:
        sets = analysis.candidate_sets(**kw)
        diff = _set_diff(sets, analysis.REFERENCE_CANDIDATES)
        ok = not diff
        detail = "\n".join(diff) or f"sizes {[len(sets[r]) for r in (0, 1, 2)]}"
    except ValueError as exc:
        ok, detail = False, str(exc)
    checks.append(("candidate-sets", ok, detail))

    sets3 = analysis.digest_candidates_from_runs(seeds=4)
    diff = _set_diff(sets3, analysis.REFERENCE_DIGEST_CANDIDATES)
    checks.append(("digest-candidate-sets", not diff, "\n".join(diff) or f"sizes {[len(sets3[r]) for r in (0, 1, 2)]} from hash2 runs"))

    bad = []
    for a in BellCode:
        for b in BellCode:
            for m, n, p in oracle_swap_distribution(a, b):
                if n != swap_collapse(a, b, m) or abs(p - 0.25) > 1e-12:
                    bad.append(f"({a.bits},{b.bits}) m={m.bits}: n={n.bits} p={p}")
    checks.append(("oracle-equivalence", not bad, "; ".join(bad) or "16 pair combinations x 4 outcomes"))

    l1, l2 = analysis.leaked_bits(1), analysis.leaked_bits(2)
    ok = abs(l1 - (np.log2(3) - 1)) < 1e-9 and abs(l2 - np.log2(3)) < 1e-9
    checks.append(("leaked-bits", ok, f"R'=1: {l1:.3f} bit, R'=2: {l2:.3f} bit"))
    mi = analysis.mutual_information()
    checks.append(("mutual-information", abs(mi - 1.5) < 1e-12, f"I((G_A,G_B);R') = {mi:.3f} bit"))
    return checks


def cmd_verify(out=sys.stdout, coding=None, as_json: bool = False) -> int:
    start = time.perf_counter()
    checks = run_verification(coding)
    elapsed = time.perf_counter() - start
    if as_json:
        print(_dump({"checks": [{"name": n, "pass": bool(ok), "detail": d} for n, ok, d in checks], "seconds": elapsed}), file=out)
    else:
        for name, ok, detail in checks:
            first, *rest = detail.split("\n")
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {first}", file=out)
            for line in rest:
                print(f"       {line}", file=out)
        print(f"{sum(ok for _, ok, _ in checks)}/{len(checks)} checks passed in {elapsed:.2f}s", file=out)
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_CONFIG


# --------------------------------------------------------------------------
# leakage / attack / oracle


def cmd_leakage(args, out=sys.stdout) -> int:
    if args.transcript:
        transcript = Transcript.from_jsonl(Path(args.transcript).read_text())
        view = analysis.observer_view(transcript, args.role)
        print(_dump({"role": view.role, "recovered": view.recovered, "leaked_bits": view.leaked_bits,
                     "distances": view.distances}), file=out)
        return EXIT_OK
    sets = analysis.candidate_sets()
    doc = {
        "candidate_sets": {str(r): sorted(f"{a:02b},{b:02b}" for a, b in s) for r, s in sets.items()},
        "leaked_bits": {"1": analysis.leaked_bits(1), "2": analysis.leaked_bits(2)},
        "mutual_information_bits": analysis.mutual_information(),
    }
    print(_dump(doc), file=out)
    return EXIT_OK


def cmd_attack(args, out=sys.stdout) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    if args.kind == "tp-bell":
        variant = args.variant or "lwc2"
        report = analysis.tp_bell_attack_experiment(variant, args.trials, seed=seed, bit_length=args.bit_length,
                                                    hash_bits=args.hash_bits)
        print(_dump({"seed": seed, **report.as_dict()}), file=out)
        return EXIT_OK
    kind = args.kind.replace("-", "_")
    variant = args.variant or "llcll2"
    scheme = "decoy" if variant in ("llcll2", "hash2") else "bellpair"
    checks = args.check_count or 20
    per = analysis.per_particle_detection(scheme, args.photons, seed=seed, attack=kind)
    freq = analysis.abort_frequency(variant, checks, args.trials, channel=args.attack_channel, seed=seed,
                                    attack=args.kind)
    doc = {
        "seed": seed,
        "variant": variant,
        "scheme": scheme,
        "attack": args.kind,
        "per_particle_error_rate": per,
        "per_particle_samples": args.photons,
        "checks_per_transmission": checks,
        "abort_frequency": freq,
        "abort_trials": args.trials,
        "closed_form_abort": analysis.detection_closed_form(checks),
    }
    print(_dump(doc), file=out)
    return EXIT_OK


def cmd_oracle(a: str, b: str, out=sys.stdout) -> int:
    ca, cb = code_of(a), code_of(b)
    dist = [
        {"m": m.bits, "m_label": label_of(m), "n": n.bits, "n_label": label_of(n), "p": p}
        for m, n, p in oracle_swap_distribution(ca, cb)
    ]
    print(_dump({"a": ca.bits, "b": cb.bits, "outcomes": dist}), file=out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bellqpc", description="Bell-state entanglement-swapping private comparison simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute one protocol run (or --trials of them)")
    r.add_argument("--protocol", choices=VARIANTS, required=True)
    r.add_argument("--k", type=int)
    r.add_argument("--inputs", help='JSON file {"inputs": [hex, ...], "bit_length": L}')
    r.add_argument("--input", action="append", help="inline hex secret (repeat per user)")
    r.add_argument("--bit-length", type=int)
    r.add_argument("--hash-bits", type=int, default=DEFAULT_HASH_BITS)
    r.add_argument("--seed", type=int)
    r.add_argument("--check-count", type=int)
    r.add_argument("--no-decoys", action="store_true", help="hash2 without decoy photons")
    r.add_argument("--attack", choices=CLI_ATTACKS, default="none")
    r.add_argument("--attack-channel", help="e.g. P1-TP or TP-P2 (A/B/C accepted for P1/P2/P3)")
    r.add_argument("--config", help='JSON file with {"hash_key": "<hex>"}')
    r.add_argument("--transcript", help="write the JSONL transcript here")
    r.add_argument("--report", help="write the JSON report here")
    r.add_argument("--trials", type=int, default=1)
    r.add_argument("--workers", type=int, default=4)

    v = sub.add_parser("verify", help="rebuild the tables and oracle checks")
    v.add_argument("--json", action="store_true")

    lk = sub.add_parser("leakage", help="leakage constants, or an observer's view of a transcript")
    lk.add_argument("--transcript")
    lk.add_argument("--role", default="TP")

    a = sub.add_parser("attack", help="attack experiments")
    a.add_argument("--kind", choices=("tp-bell", "intercept-resend", "measure-resend"), default="tp-bell")
    a.add_argument("--variant", choices=VARIANTS)
    a.add_argument("--trials", type=int, default=100)
    a.add_argument("--photons", type=int, default=10_000)
    a.add_argument("--check-count", type=int)
    a.add_argument("--attack-channel", default="TP-P1")
    a.add_argument("--bit-length", type=int, default=32)
    a.add_argument("--hash-bits", type=int, default=DEFAULT_HASH_BITS)
    a.add_argument("--seed", type=int)

    o = sub.add_parser("oracle", help="statevector swapping distribution for two Bell pairs")
    o.add_argument("--a", required=True, help="phi+, phi-, psi+ or psi-")
    o.add_argument("--b", required=True)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return cmd_run(build_run_config(args), out)
        if args.command == "verify":
            return cmd_verify(out, as_json=args.json)
        if args.command == "leakage":
            return cmd_leakage(args, out)
        if args.command == "attack":
            return cmd_attack(args, out)
        return cmd_oracle(args.a, args.b, out)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"bellqpc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
