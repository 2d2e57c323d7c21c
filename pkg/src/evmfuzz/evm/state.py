"""World state for the emulated chain: accounts, balances, code, storage."""

from __future__ import annotations

from dataclasses import dataclass, field

# One ether in wei; accounts are funded generously so value fuzzing never
# runs dry before an interesting transfer does.
ETHER = 10**18
INITIAL_BALANCE = 10**12 * ETHER

DEPLOYER = 0xD0E0A0000000000000000000000000000000D001
BENIGN = 0xBE111C0000000000000000000000000000000B01
ATTACKER_1 = 0xA77AC4E200000000000000000000000000000A01
ATTACKER_2 = 0xA77AC4E200000000000000000000000000000A02


@dataclass(frozen=True)
class AccountSet:
    """The fixed cast of externally-owned accounts a campaign fuzzes with."""

    deployer: int = DEPLOYER
    benign: int = BENIGN
    attackers: tuple[int, ...] = (ATTACKER_1, ATTACKER_2)

    def all(self) -> tuple[int, ...]:
        return (self.deployer, self.benign) + self.attackers

    def is_attacker(self, address: int) -> bool:
        return address in self.attackers


@dataclass
class Snapshot:
    balances: dict[int, int]
    code: dict[int, bytes]
    storage: dict[tuple[int, int], int]
    received_from: dict[int, int]
    nonces: dict[int, int]


class EmulatedState:
    """Balances, deployed code, storage, and bookkeeping for one campaign.

    Storage is keyed (address, slot).  received_from records the cumulative
    wei each sender has moved into the contract under test; the leaking-ether
    detector needs it to tell refunds apart from theft.
    """

    def __init__(self, accounts: AccountSet | None = None) -> None:
        self.accounts = accounts or AccountSet()
        self.balances: dict[int, int] = {
            address: INITIAL_BALANCE for address in self.accounts.all()
        }
        self.code: dict[int, bytes] = {}
        self.storage: dict[tuple[int, int], int] = {}
        self.received_from: dict[int, int] = {}
        self.nonces: dict[int, int] = {}

    def balance_of(self, address: int) -> int:
        return self.balances.get(address, 0)

    def credit(self, address: int, amount: int) -> None:
        self.balances[address] = self.balances.get(address, 0) + amount

    def debit(self, address: int, amount: int) -> None:
        self.balances[address] = self.balances.get(address, 0) - amount

    def sload(self, address: int, slot: int) -> int:
        return self.storage.get((address, slot), 0)

    def sstore(self, address: int, slot: int, value: int) -> None:
        if value == 0:
            self.storage.pop((address, slot), None)
        else:
            self.storage[(address, slot)] = value

    def snapshot(self) -> Snapshot:
        # Values are immutable ints/bytes, so per-dict copies are fully
        # independent.
        return Snapshot(
            balances=dict(self.balances),
            code=dict(self.code),
            storage=dict(self.storage),
            received_from=dict(self.received_from),
            nonces=dict(self.nonces),
        )

    def restore(self, snap: Snapshot) -> None:
        self.balances = dict(snap.balances)
        self.code = dict(snap.code)
        self.storage = dict(snap.storage)
        self.received_from = dict(snap.received_from)
        self.nonces = dict(snap.nonces)
