"""Classical side of the comparison: inputs, keyed digests, 2-bit groups, masks, scores."""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

HASH_PRIMITIVE = "hmac-sha512"
MAX_HASH_BITS = hashlib.sha512().digest_size * 8
DEFAULT_HASH_BITS = 128
DEFAULT_KEY = b"bellqpc shared hash key"
KEY_ENV = "QPC_HASH_KEY"


class ConfigError(ValueError):
    """Invalid protocol or hash configuration."""


def _check_bits(bits: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError("bit sequences may only contain 0 and 1")
    return out


@dataclass(frozen=True)
class SecretInput:
    """An L-bit secret, stored most significant bit first (x_{L-1} ... x_0)."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", _check_bits(self.bits))
        if not self.bits:
            raise ValueError("secret input must have positive length")

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def value(self) -> int:
        return int("".join(map(str, self.bits)), 2)

    @classmethod
    def from_int(cls, value: int, length: int) -> "SecretInput":
        if length <= 0:
            raise ValueError("length must be positive")
        if not 0 <= value < 2**length:
            raise ValueError(f"{value} does not fit in {length} bits")
        return cls(tuple(int(c) for c in format(value, f"0{length}b")))

    @classmethod
    def from_hex(cls, text: str, length: int) -> "SecretInput":
        text = text.strip().lower().removeprefix("0x")
        try:
            value = int(text, 16) if text else 0
        except ValueError:
            raise ValueError(f"not a hex string: {text!r}") from None
        return cls.from_int(value, length)

    def to_hex(self) -> str:
        return format(self.value, f"0{(self.length + 3) // 4}x")


@dataclass(frozen=True)
class Digest:
    """N-bit hash output, most significant bit first (x#_{N-1} ... x#_0)."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", _check_bits(self.bits))

    @property
    def length(self) -> int:
        return len(self.bits)

    @classmethod
    def from_int(cls, value: int, length: int) -> "Digest":
        return cls(SecretInput.from_int(value, length).bits)

    def to_hex(self) -> str:
        return format(int("".join(map(str, self.bits)), 2), f"0{(self.length + 3) // 4}x")


@dataclass(frozen=True)
class GroupSeq:
    groups: tuple[int, ...]
    padded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        if any(not 0 <= g <= 3 for g in self.groups):
            raise ValueError("groups are two-bit values")

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def bit_length(self) -> int:
        return 2 * len(self.groups) - int(self.padded)

    def ungroup(self) -> tuple[int, ...]:
        bits = [b for g in self.groups for b in (g >> 1, g & 1)]
        if self.padded:
            bits.pop()
        return tuple(bits)


@dataclass(frozen=True)
class HashConfig:
    key: bytes = DEFAULT_KEY
    output_bits: int = DEFAULT_HASH_BITS

    def __post_init__(self) -> None:
        if not self.key:
            raise ConfigError("hash key must be nonempty")
        if self.output_bits < 2:
            raise ConfigError("hash output must have at least 2 bits")
        if self.output_bits > MAX_HASH_BITS:
            raise ConfigError(
                f"{HASH_PRIMITIVE} yields at most {MAX_HASH_BITS} bits; {self.output_bits} requested"
            )

    @classmethod
    def from_env(cls, output_bits: int = DEFAULT_HASH_BITS, env: dict | None = None) -> "HashConfig":
        env = os.environ if env is None else env
        raw = env.get(KEY_ENV)
        if raw is None:
            return cls(DEFAULT_KEY, output_bits)
        try:
            key = bytes.fromhex(raw.strip())
        except ValueError:
            raise ConfigError(f"{KEY_ENV} must be hex") from None
        return cls(key, output_bits)


def hash_digest(cfg: HashConfig, x: SecretInput) -> Digest:
    """Keyed digest H(X): HMAC-SHA-512 over (L, X), truncated to N bits."""
    msg = x.length.to_bytes(4, "big") + x.value.to_bytes((x.length + 7) // 8, "big")
    raw = hmac.new(cfg.key, msg, hashlib.sha512).digest()
    n = cfg.output_bits
    value = int.from_bytes(raw, "big") >> (MAX_HASH_BITS - n)
    return Digest.from_int(value, n)


def group_bits(d: Digest | SecretInput | Sequence[int]) -> GroupSeq:
    """Split a bit string into 2-bit groups, MSB first; an odd tail gets a 0 pad bit."""
    bits = list(d.bits if isinstance(d, (Digest, SecretInput)) else _check_bits(d))
    if not bits:
        raise ValueError("cannot group an empty bit string")
    padded = len(bits) % 2 == 1
    if padded:
        bits.append(0)
    return GroupSeq(tuple((bits[i] << 1) | bits[i + 1] for i in range(0, len(bits), 2)), padded)


def mask(group: int, code: int) -> int:
    return int(group) ^ int(code)


def group_score(r: int, t: int) -> int:
    """(r1 xor t1) + (r2 xor t2) for two 2-bit values."""
    d = int(r) ^ int(t)
    return (d >> 1) + (d & 1)


def total_score(scores: Iterable[int]) -> int:
    scores = list(scores)
    if any(s not in (0, 1, 2) for s in scores):
        raise ValueError("group scores must be 0, 1 or 2")
    return sum(scores)
