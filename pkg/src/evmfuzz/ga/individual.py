"""Test-case representation: a short sequence of transactions plus the
environment each one runs under."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..abi import FunctionSpec, encode_calldata
from ..evm import EnvOverrides, Transaction

MAX_INPUTS = 5  # maximum transactions per individual


@dataclass
class Input:
    """One transaction: who sends what to the contract, and the world it
    executes in.

    fn is None for raw (fallback) calldata.  pool_tags remembers which field
    values were drawn from a mutation pool — (pool kind, pool key, value) per
    taint-variable base name — so failing constraints can evict exactly the
    values that caused a revert.
    """

    fn: FunctionSpec | None
    sender: int
    value: int = 0
    gas_limit: int = 8_000_000
    args: list = field(default_factory=list)
    raw_calldata: bytes = b""
    calldata_size: int | None = None
    env: EnvOverrides = field(default_factory=EnvOverrides)
    pool_tags: dict[str, tuple[str, object, object]] = field(default_factory=dict)

    def calldata(self) -> bytes:
        if self.fn is None:
            data = self.raw_calldata
        else:
            data = encode_calldata(self.fn, self.args)
        if self.calldata_size is not None:
            if self.calldata_size <= len(data):
                data = data[:self.calldata_size]
            else:
                data = data.ljust(self.calldata_size, b"\x00")
        return data

    def transaction(self, to: int) -> Transaction:
        return Transaction(
            sender=self.sender,
            to=to,
            value=self.value,
            gas_limit=self.gas_limit,
            data=self.calldata(),
        )

    def copy(self) -> "Input":
        return Input(
            fn=self.fn,
            sender=self.sender,
            value=self.value,
            gas_limit=self.gas_limit,
            args=_copy_args(self.args),
            raw_calldata=self.raw_calldata,
            calldata_size=self.calldata_size,
            env=self.env.copy(),
            pool_tags=dict(self.pool_tags),
        )

    def describe(self) -> dict:
        return {
            "fn": self.fn.name if self.fn else "",
            "selector": self.fn.selector.hex() if self.fn else "",
            "sender": f"{self.sender:#042x}",
            "value": self.value,
            "gas_limit": self.gas_limit,
            "args": [_jsonable(v) for v in self.args],
            "calldata": self.calldata().hex(),
            "timestamp": self.env.timestamp,
            "block_number": self.env.block_number,
            "call_results": {
                f"{addr:#x}": [success, ret.hex()]
                for addr, (success, ret) in sorted(self.env.call_results.items())
            },
        }


def _copy_args(args: list) -> list:
    return [list(a) if isinstance(a, list) else a for a in args]


def _jsonable(value):
    if isinstance(value, bytes):
        return "0x" + value.hex()
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class Individual:
    inputs: list[Input]

    def copy(self) -> "Individual":
        return Individual([inp.copy() for inp in self.inputs])

    def fingerprint(self) -> str:
        blob = json.dumps(
            [inp.describe() for inp in self.inputs], sort_keys=True
        ).encode()
        return hashlib.sha256(blob).digest()[:6].hex()

    def describe(self) -> list[dict]:
        return [inp.describe() for inp in self.inputs]

    def __len__(self) -> int:
        return len(self.inputs)
