"""Keccak-256 (the pre-NIST padding variant used by Ethereum).

Single vendored implementation shared by hashing call sites everywhere in
the package: the SHA3 opcode, function selectors, deterministic address
derivation.  Kept dependency-free on purpose; guarded by known-answer tests
and an independent reference implementation in the test suite.
"""

from __future__ import annotations

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

# rotation offsets laid out for the flat 5x5 state, state[x + 5*y]
_ROTATIONS = (
    0, 1, 62, 28, 27,
    36, 44, 6, 55, 20,
    3, 10, 43, 25, 39,
    41, 45, 15, 21, 8,
    18, 2, 61, 56, 14,
)

_MASK = (1 << 64) - 1

_RATE_BYTES = 136  # 1600-bit state, 512-bit capacity for a 256-bit digest


def _rol(v: int, n: int) -> int:
    n &= 63
    return ((v << n) | (v >> (64 - n))) & _MASK


def _keccak_f(state: list[int]) -> None:
    for rc in _ROUND_CONSTANTS:
        # theta
        c = [state[x] ^ state[x + 5] ^ state[x + 10] ^ state[x + 15] ^ state[x + 20]
             for x in range(5)]
        for x in range(5):
            d = c[(x - 1) % 5] ^ _rol(c[(x + 1) % 5], 1)
            for y in range(0, 25, 5):
                state[x + y] ^= d
        # rho + pi
        b = [0] * 25
        for x in range(5):
            for y in range(5):
                b[y + 5 * ((2 * x + 3 * y) % 5)] = _rol(state[x + 5 * y], _ROTATIONS[x + 5 * y])
        # chi
        for x in range(5):
            for y in range(0, 25, 5):
                state[x + y] = b[x + y] ^ ((~b[(x + 1) % 5 + y]) & b[(x + 2) % 5 + y])
        # iota
        state[0] ^= rc


def _sponge(data: bytes, pad_byte: int) -> bytes:
    state = [0] * 25
    padded = data + bytes([pad_byte]) + b"\x00" * (_RATE_BYTES - 1 - len(data) % _RATE_BYTES)
    # final bit of the pad10*1 rule (merges with the domain byte in the
    # single-byte-pad case)
    padded = padded[:-1] + bytes([padded[-1] | 0x80])
    for block_start in range(0, len(padded), _RATE_BYTES):
        block = padded[block_start:block_start + _RATE_BYTES]
        for i in range(_RATE_BYTES // 8):
            state[i] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _keccak_f(state)
    return b"".join(state[i].to_bytes(8, "little") for i in range(4))


def keccak256(data: bytes) -> bytes:
    """32-byte Keccak-256 digest (legacy 0x01 domain padding)."""
    return _sponge(data, 0x01)


def sha3_256_compat(data: bytes) -> bytes:
    """Same sponge with the NIST SHA3-256 domain padding (0x06).

    Exists so the test suite can pin the permutation against hashlib.
    """
    return _sponge(data, 0x06)
