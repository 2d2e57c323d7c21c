"""Hand-assembled contracts the acceptance tests fuzz.

Each fixture mirrors the bytecode solc emits for the corresponding Solidity
idiom — four-byte dispatcher, CALLVALUE guards on non-payable functions,
2300-gas stipend on ``transfer`` — without the optimizer noise, so findings
land on single recognizable instructions.

The generators at the bottom produce randomized storage-access programs and
single-guard contracts together with independently computed expectations
(slot identities from the chosen layout parameters; guard satisfiability by
construction), so the analysis under test is never consulted twice.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random

from evmfuzz.abi import ContractAbi, parse_abi
from evmfuzz.asm import assemble
from evmfuzz.keccak import keccak256

ETHER = 10**18

# constant counterparties: a token contract and a burn-style payout sink
TOKEN = 0x70CE70CE70CE70CE70CE70CE70CE70CE70CE70CE
SINK = 0x000000000000000000000000000000000000CAFE


def sel(signature: str) -> str:
    return keccak256(signature.encode())[:4].hex()


@dataclass(frozen=True)
class Compiled:
    """What a compiler drop for one contract looks like to the fuzzer."""

    name: str
    abi_json: str
    runtime: bytes
    creation: bytes | None = None
    constructor_args: bytes = b""
    contract_balance: int = 0  # pre-funding some fixtures need to pay out

    def abi(self) -> ContractAbi:
        return parse_abi(self.abi_json)


# every creation snippet ends by returning the runtime image embedded after it
RETURN_RUNTIME = """
    PUSH @code_end-@runtime
    DUP1
    PUSH @runtime
    PUSH1 0x00
    CODECOPY
    PUSH1 0x00
    RETURN
"""


def embed(runtime: bytes) -> str:
    return f"runtime:\n    DATA 0x{runtime.hex()}\n"


# ---------------------------------------------------------------------------
# TokenSale: a crowdsale whose "constructor" is an ordinary public function,
# so anyone can become owner and later drain the proceeds.
#
#   slot 0  start    (sale opening time, set at deployment and by Tokensale)
#   slot 1  end      (start + 30 days)
#   slot 2  sold     (flag set once a purchase succeeds)
#   slot 3  owner    (whoever called Tokensale() last)
#
# buy() prices a token at 42 ether plus 1 ether per elapsed day and passes
# the proceeds claim on to a fixed token contract; withdraw() sends the
# whole balance to the owner once the sale is over.

_TOKENSALE = sel("Tokensale()")
_BUY = sel("buy()")
_WITHDRAW = sel("withdraw()")

TOKEN_SALE_RUNTIME = assemble(
    f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    DUP1
    PUSH4 0x{_TOKENSALE}
    EQ
    PUSH @tokensale
    JUMPI
    DUP1
    PUSH4 0x{_BUY}
    EQ
    PUSH @buy
    JUMPI
    PUSH4 0x{_WITHDRAW}
    EQ
    PUSH @withdraw
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT

tokensale:                  ; should have been the constructor
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    TIMESTAMP
    PUSH1 0x00
    SSTORE                  ; start = now
    TIMESTAMP
    PUSH3 0x278d00
    ADD
    PUSH1 0x01
    SSTORE                  ; end = now + 30 days
    CALLER
    PUSH1 0x03
    SSTORE                  ; owner = msg.sender
    STOP

buy:
    JUMPDEST
    TIMESTAMP
    PUSH1 0x01
    SLOAD
    LT                      ; require(now <= end)
    PUSH @revert
    JUMPI
    CALLVALUE
    TIMESTAMP
    PUSH1 0x00
    SLOAD
    SWAP1
    SUB                     ; now - start
    PUSH3 0x015180
    SWAP1
    DIV                     ; elapsed days
    PUSH8 0x0de0b6b3a7640000
    MUL
    PUSH9 0x0246ddf97976680000
    ADD                     ; 42 ether + 1 ether per day
    EQ
    ISZERO                  ; require(msg.value == price)
    PUSH @revert
    JUMPI
    PUSH4 0x23b872dd        ; token.transferFrom(this, msg.sender, 1)
    PUSH1 0xe0
    SHL
    PUSH1 0x00
    MSTORE
    ADDRESS
    PUSH1 0x04
    MSTORE
    CALLER
    PUSH1 0x24
    MSTORE
    PUSH1 0x01
    PUSH1 0x44
    MSTORE
    PUSH1 0x20
    PUSH1 0x00
    PUSH1 0x64
    PUSH1 0x00
    PUSH1 0x00
    PUSH20 0x{TOKEN:040x}
    GAS
    CALL
    ISZERO                  ; require(token.transferFrom(..))
    PUSH @revert
    JUMPI
    PUSH1 0x01
    PUSH1 0x02
    SSTORE                  ; sold = true
    STOP

withdraw:
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    PUSH1 0x01
    SLOAD
    TIMESTAMP
    LT                      ; require(now >= end)
    PUSH @revert
    JUMPI
    PUSH1 0x02
    SLOAD
    ISZERO                  ; require(sold)
    PUSH @revert
    JUMPI
    CALLER
    PUSH1 0x03
    SLOAD
    EQ
    ISZERO                  ; require(msg.sender == owner)
    PUSH @revert
    JUMPI
    PUSH1 0x00              ; owner.transfer(this.balance)
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    ADDRESS
    BALANCE
    PUSH1 0x03
    SLOAD
    PUSH2 0x08fc
    CALL
    ISZERO
    PUSH @revert
    JUMPI
    STOP
"""
)

TOKEN_SALE = Compiled(
    name="TokenSale",
    abi_json=(
        '[{"type": "function", "name": "Tokensale", "inputs": [],'
        ' "stateMutability": "nonpayable"},'
        ' {"type": "function", "name": "buy", "inputs": [],'
        ' "stateMutability": "payable"},'
        ' {"type": "function", "name": "withdraw", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=TOKEN_SALE_RUNTIME,
    # field initializers run at deployment; the misnamed constructor does not
    creation=assemble(
        f"""
    TIMESTAMP
    PUSH1 0x00
    SSTORE
    TIMESTAMP
    PUSH3 0x278d00
    ADD
    PUSH1 0x01
    SSTORE
    {RETURN_RUNTIME}
    {embed(TOKEN_SALE_RUNTIME)}
    """
    ),
)


# ---------------------------------------------------------------------------
# SafeAssert: the constructor requires a positive parameter, run() asserts
# the stored copy is still positive.  Nothing ever writes it again, so the
# assert cannot fire — a fuzzer reporting one here is hallucinating.

_RUN = sel("run()")

SAFE_ASSERT_RUNTIME = assemble(
    f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_RUN}
    EQ
    PUSH @run
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
run:
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    PUSH1 0x00
    SLOAD
    PUSH @ok
    JUMPI
    INVALID                 ; assert(param > 0)
ok:
    JUMPDEST
    STOP
"""
)

SAFE_ASSERT = Compiled(
    name="SafeAssert",
    abi_json=(
        '[{"type": "constructor", "inputs": [{"type": "uint256"}]},'
        ' {"type": "function", "name": "run", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=SAFE_ASSERT_RUNTIME,
    creation=assemble(
        f"""
    PUSH1 0x20              ; the argument is appended after the code
    CODESIZE
    PUSH1 0x20
    SWAP1
    SUB
    PUSH1 0x00
    CODECOPY
    PUSH1 0x00
    MLOAD
    DUP1
    ISZERO
    PUSH @bad
    JUMPI                   ; require(_param > 0)
    PUSH1 0x00
    SSTORE                  ; param = _param
    {RETURN_RUNTIME}
bad:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
    {embed(SAFE_ASSERT_RUNTIME)}
    """
    ),
    constructor_args=(1).to_bytes(32, "big"),
)


# ---------------------------------------------------------------------------
# GuardedAdd: a token whose transfer() contains the textbook `balance += v`
# overflow — unreachable, because nobody can fund a balance first, so the
# guard forces v == 0 forever.  Zero overflow findings expected.

_TRANSFER = sel("transfer(address,uint256)")

GUARDED_ADD_RUNTIME = assemble(
    f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_TRANSFER}
    EQ
    PUSH @transfer
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
transfer:
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    CALLER                  ; slot of balanceOf[msg.sender]
    PUSH1 0x00
    MSTORE
    PUSH1 0x00
    PUSH1 0x20
    MSTORE
    PUSH1 0x40
    PUSH1 0x00
    SHA3
    DUP1
    SLOAD                   ; [slot, balance]
    PUSH1 0x24
    CALLDATALOAD            ; [slot, balance, value]
    DUP1
    DUP3
    LT                      ; require(balanceOf[msg.sender] >= value)
    PUSH @revert
    JUMPI
    DUP1
    DUP3
    SUB                     ; balanceOf[msg.sender] -= value
    DUP4
    SSTORE
    PUSH1 0x04
    CALLDATALOAD
    PUSH20 0xffffffffffffffffffffffffffffffffffffffff
    AND
    PUSH1 0x00
    MSTORE                  ; slot of balanceOf[to]
    PUSH1 0x40
    PUSH1 0x00
    SHA3
    DUP1
    SLOAD
    DUP3
    ADD                     ; balanceOf[to] += value
    SWAP1
    SSTORE
    POP
    POP
    POP
    STOP
"""
)

GUARDED_ADD = Compiled(
    name="GuardedAdd",
    abi_json=(
        '[{"type": "function", "name": "transfer",'
        ' "inputs": [{"type": "address"}, {"type": "uint256"}],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=GUARDED_ADD_RUNTIME,
)


# ---------------------------------------------------------------------------
# OwnedProxy: a delegatecall relay whose target only the deployer can set.
# The delegatecall itself is not attacker-controllable, so reporting it is a
# false positive.
#
#   slot 0  callee
#   slot 1  owner (set at deployment)

_SET_CALLEE = sel("setCallee(address)")
_FORWARD = sel("forward(bytes)")


def _proxy_runtime(owner_gated: bool) -> bytes:
    guard = """
    CALLER
    PUSH1 0x01
    SLOAD
    EQ
    ISZERO                  ; require(msg.sender == owner)
    PUSH @revert
    JUMPI
    """
    return assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    DUP1
    PUSH4 0x{_SET_CALLEE}
    EQ
    PUSH @setcallee
    JUMPI
    PUSH4 0x{_FORWARD}
    EQ
    PUSH @forward
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
setcallee:
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    {guard if owner_gated else ""}
    PUSH1 0x04
    CALLDATALOAD
    PUSH20 0xffffffffffffffffffffffffffffffffffffffff
    AND
    PUSH1 0x00
    SSTORE                  ; callee = newCallee
    STOP
forward:
    JUMPDEST
    CALLVALUE
    PUSH @revert
    JUMPI
    PUSH1 0x04              ; scatter _data into memory
    CALLDATALOAD
    PUSH1 0x04
    ADD
    DUP1
    CALLDATALOAD            ; [length position, length]
    SWAP1
    PUSH1 0x20
    ADD                     ; [length, byte position]
    DUP2
    SWAP1
    PUSH1 0x00
    CALLDATACOPY            ; [length]
    PUSH1 0x00              ; require(callee.delegatecall(_data))
    PUSH1 0x00
    DUP3
    PUSH1 0x00
    PUSH1 0x00
    SLOAD
    GAS
    DELEGATECALL
    ISZERO
    PUSH @revert
    JUMPI
    STOP
"""
    )


_PROXY_ABI = (
    '[{"type": "function", "name": "setCallee",'
    ' "inputs": [{"type": "address"}], "stateMutability": "nonpayable"},'
    ' {"type": "function", "name": "forward",'
    ' "inputs": [{"type": "bytes"}], "stateMutability": "nonpayable"}]'
)

_OWNED_PROXY_RUNTIME = _proxy_runtime(owner_gated=True)

OWNED_PROXY = Compiled(
    name="OwnedProxy",
    abi_json=_PROXY_ABI,
    runtime=_OWNED_PROXY_RUNTIME,
    creation=assemble(
        f"""
    CALLER
    PUSH1 0x01
    SSTORE                  ; owner = msg.sender
    {RETURN_RUNTIME}
    {embed(_OWNED_PROXY_RUNTIME)}
    """
    ),
)


# ---------------------------------------------------------------------------
# the positive mini-corpus: one deliberately broken contract per detector

_POKE = sel("poke(uint256)")

FAILING_ASSERT = Compiled(  # AF
    name="FailingAssert",
    abi_json=(
        '[{"type": "function", "name": "poke",'
        ' "inputs": [{"type": "uint256"}], "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_POKE}
    EQ
    PUSH @poke
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
poke:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    PUSH1 0x0a
    SWAP1
    LT                      ; assert(x < 10)
    PUSH @ok
    JUMPI
    INVALID
ok:
    JUMPDEST
    STOP
"""
    ),
)

_ADD = sel("add(uint256)")

RUNNING_TOTAL = Compiled(  # IO
    name="RunningTotal",
    abi_json=(
        '[{"type": "function", "name": "add",'
        ' "inputs": [{"type": "uint256"}], "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_ADD}
    EQ
    PUSH @add
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
add:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    PUSH1 0x00
    SLOAD
    ADD                     ; total += x, unchecked
    PUSH1 0x00
    SSTORE
    STOP
"""
    ),
)

_REFUND = sel("refund()")

EAGER_REFUND = Compiled(  # RE: pays out with gas to spare, then writes state
    name="EagerRefund",
    abi_json=(
        '[{"type": "function", "name": "refund", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_REFUND}
    EQ
    PUSH @refund
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
refund:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x01              ; one wei
    PUSH20 0x{SINK:040x}
    PUSH2 0xc350            ; 50000 gas: enough to re-enter
    CALL
    ISZERO
    PUSH @revert
    JUMPI
    PUSH1 0x01
    PUSH1 0x00
    SSTORE                  ; bookkeeping after the payout
    STOP
"""
    ),
    contract_balance=ETHER,
)

_LUCKY = sel("lucky()")

BLOCK_LOTTERY = Compiled(  # BD: pays out on even timestamps
    name="BlockLottery",
    abi_json=(
        '[{"type": "function", "name": "lucky", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_LUCKY}
    EQ
    PUSH @lucky
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
lucky:
    JUMPDEST
    PUSH1 0x02
    TIMESTAMP
    MOD                     ; now % 2
    PUSH @skip
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x01
    PUSH20 0x{SINK:040x}
    PUSH2 0x08fc
    CALL
    ISZERO
    PUSH @revert
    JUMPI
skip:
    JUMPDEST
    STOP
"""
    ),
    contract_balance=ETHER,
)

_SET_PRICE = sel("setPrice(uint256)")
_PAY = sel("pay()")

POSTED_PRICE = Compiled(  # TD: pays an amount someone else last posted
    name="PostedPrice",
    abi_json=(
        '[{"type": "function", "name": "setPrice",'
        ' "inputs": [{"type": "uint256"}], "stateMutability": "nonpayable"},'
        ' {"type": "function", "name": "pay", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    DUP1
    PUSH4 0x{_SET_PRICE}
    EQ
    PUSH @setprice
    JUMPI
    PUSH4 0x{_PAY}
    EQ
    PUSH @pay
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
setprice:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    PUSH1 0x00
    SSTORE                  ; price = p, no access control
    STOP
pay:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    SLOAD                   ; amount = price
    PUSH20 0x{SINK:040x}
    PUSH2 0x08fc
    CALL
    ISZERO
    PUSH @revert
    JUMPI
    STOP
"""
    ),
    contract_balance=ETHER,
)

_PING = sel("ping()")

UNCHECKED_PING = Compiled(  # UE: drops the call's success flag on the floor
    name="UncheckedPing",
    abi_json=(
        '[{"type": "function", "name": "ping", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_PING}
    EQ
    PUSH @ping
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
ping:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH20 0x{TOKEN:040x}
    GAS
    CALL
    POP                     ; ignore whether it worked
    STOP
"""
    ),
)

_OPEN_RELAY_RUNTIME = _proxy_runtime(owner_gated=False)

OPEN_RELAY = Compiled(  # UD: anyone may pick the delegatecall target
    name="OpenRelay",
    abi_json=_PROXY_ABI,
    runtime=_OPEN_RELAY_RUNTIME,
)

_GIVE = sel("give()")

TIP_JAR = Compiled(  # LE: hands a wei to any caller, funded by others
    name="TipJar",
    abi_json=(
        '[{"type": "function", "name": "give", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_GIVE}
    EQ
    PUSH @give
    JUMPI
revert:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    REVERT
give:
    JUMPDEST
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x00
    PUSH1 0x01
    CALLER
    PUSH2 0x08fc
    CALL
    ISZERO
    PUSH @revert
    JUMPI
    STOP
"""
    ),
    contract_balance=ETHER,
)

PIGGY_BANK = Compiled(  # LO: swallows ether with no instruction to send any
    name="PiggyBank",
    abi_json='[{"type": "fallback", "stateMutability": "payable"}]',
    runtime=assemble("STOP"),
)

_KILL = sel("kill()")

KILL_SWITCH = Compiled(  # US: anyone can destruct the contract
    name="KillSwitch",
    abi_json=(
        '[{"type": "function", "name": "kill", "inputs": [],'
        ' "stateMutability": "nonpayable"}]'
    ),
    runtime=assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_KILL}
    EQ
    PUSH @kill
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
kill:
    JUMPDEST
    CALLER
    SELFDESTRUCT
"""
    ),
)

MINI_CORPUS: dict[str, Compiled] = {
    "AF": FAILING_ASSERT,
    "IO": RUNNING_TOTAL,
    "RE": EAGER_REFUND,
    "BD": BLOCK_LOTTERY,
    "TD": POSTED_PRICE,
    "UE": UNCHECKED_PING,
    "UD": OPEN_RELAY,
    "LE": TIP_JAR,
    "LO": PIGGY_BANK,
    "US": KILL_SWITCH,
}


# ---------------------------------------------------------------------------
# randomized storage-access programs
#
# Five shapes of storage addressing, mirroring how compilers lay out state:
# a declared slot, a slot plus a compile-time offset, a mapping entry, an
# array element, and a mapping nested inside a mapping.  The expected slot
# identity is known from the chosen parameters alone, so checking the
# analysis needs no second hash implementation.


@dataclass(frozen=True)
class SlotProgram:
    source_len: int
    runtime: bytes
    expected_reads: frozenset
    expected_writes: frozenset
    shapes: tuple


_SLOT_SHAPES = ("fixed", "offset", "mapping", "array", "nested")


def _access_snippet(rng: Random, shape: str) -> tuple[str, tuple]:
    """One storage access; returns (assembly, expected slot identity)."""
    if shape == "fixed":
        slot = rng.randrange(64)
        return f"PUSH {slot}\n", (slot, ())
    if shape == "offset":
        base = rng.randrange(1 << 16)
        delta = rng.randrange(1, 1 << 8)
        return f"PUSH {delta}\nPUSH {base}\nADD\n", (base + delta, ())
    if shape == "mapping":
        base = rng.randrange(64)
        key = rng.getrandbits(256)
        return (
            f"PUSH {key}\nPUSH1 0x00\nMSTORE\n"
            f"PUSH {base}\nPUSH1 0x20\nMSTORE\n"
            "PUSH1 0x40\nPUSH1 0x00\nSHA3\n",
            (base, (("map", key),)),
        )
    if shape == "array":
        base = rng.randrange(64)
        index = rng.randrange(256)
        return (
            f"PUSH {base}\nPUSH1 0x00\nMSTORE\n"
            "PUSH1 0x20\nPUSH1 0x00\nSHA3\n"
            f"PUSH {index}\nADD\n",
            (base, (("arr", index),)),
        )
    if shape == "nested":
        base = rng.randrange(64)
        outer = rng.getrandbits(256)
        inner = rng.getrandbits(256)
        return (
            f"PUSH {outer}\nPUSH1 0x00\nMSTORE\n"
            f"PUSH {base}\nPUSH1 0x20\nMSTORE\n"
            "PUSH1 0x40\nPUSH1 0x00\nSHA3\n"
            f"PUSH1 0x20\nMSTORE\n"
            f"PUSH {inner}\nPUSH1 0x00\nMSTORE\n"
            "PUSH1 0x40\nPUSH1 0x00\nSHA3\n",
            (base, (("map", outer), ("map", inner))),
        )
    raise ValueError(shape)


def random_slot_program(rng: Random) -> SlotProgram:
    """A straight-line program mixing reads and writes across all shapes."""
    source = []
    reads = set()
    writes = set()
    shapes = []
    for _ in range(rng.randrange(3, 9)):
        shape = rng.choice(_SLOT_SHAPES)
        shapes.append(shape)
        snippet, identity = _access_snippet(rng, shape)
        if rng.random() < 0.5:
            source.append(snippet + "SLOAD\nPOP\n")
            reads.add(identity)
        else:
            # value first, computed slot on top: SSTORE pops key then value
            value = rng.getrandbits(64)
            source.append(f"PUSH {value}\n" + snippet + "SSTORE\n")
            writes.add(identity)
    source.append("STOP\n")
    text = "".join(source)
    return SlotProgram(
        source_len=len(text),
        runtime=assemble(text),
        expected_reads=frozenset(reads),
        expected_writes=frozenset(writes),
        shapes=tuple(shapes),
    )


# ---------------------------------------------------------------------------
# randomized single-guard contracts
#
# probe(x) runs one linear or bitwise comparison over its argument and only
# a satisfying x reaches the marker store.  Satisfiable guards are built
# from a random witness; unsatisfiable ones from a structural contradiction
# (a result bit outside an AND mask, forcing bits with OR, an odd target
# for an even multiplier, x < 0).

_PROBE = sel("probe(uint256)")

_WIN_BLOCK = "JUMPDEST\nPUSH2 0xbeef\nPUSH1 0x00\nSSTORE\nSTOP\n"

_MOD = 1 << 256
_FULL = _MOD - 1


@dataclass(frozen=True)
class GuardProgram:
    form: str
    satisfiable: bool
    runtime: bytes
    win_pc: int
    witness: int | None  # one argument that opens the guard, if any exists
    abi_json: str = (
        '[{"type": "function", "name": "probe",'
        ' "inputs": [{"type": "uint256"}], "stateMutability": "nonpayable"}]'
    )

    def abi(self) -> ContractAbi:
        return parse_abi(self.abi_json)


def _guard_ops(rng: Random, form: str, satisfiable: bool) -> tuple[str, int | None]:
    """Assembly turning the argument on top of the stack into a 0/1 flag,
    plus one satisfying argument (None when there is none)."""
    witness = rng.getrandbits(256)
    if form == "eq":
        return f"PUSH {witness}\nEQ\n", witness
    if form == "add":
        addend = rng.getrandbits(256)
        target = (witness + addend) % _MOD
        return f"PUSH {addend}\nADD\nPUSH {target}\nEQ\n", witness
    if form == "sub":
        sub = rng.getrandbits(256)
        target = (witness - sub) % _MOD
        return f"PUSH {sub}\nSWAP1\nSUB\nPUSH {target}\nEQ\n", witness
    if form == "mul":
        if satisfiable:
            factor = rng.getrandbits(128) | 1  # odd: invertible mod 2**256
            target = (witness * factor) % _MOD
        else:
            factor = (rng.getrandbits(128) << 1) or 2  # even times anything...
            target = rng.getrandbits(256) | 1  # ...never lands on odd
        return (
            f"PUSH {factor}\nMUL\nPUSH {target}\nEQ\n",
            witness if satisfiable else None,
        )
    if form == "xor":
        mask = rng.getrandbits(256)
        return f"PUSH {mask}\nXOR\nPUSH {witness ^ mask}\nEQ\n", witness
    if form == "and":
        mask = rng.getrandbits(256) & (_FULL ^ 1)  # bit 0 stays out of the mask
        if satisfiable:
            target = witness & mask
        else:
            target = (witness & mask) | 1  # bit 0 survives no AND with mask
        return (
            f"PUSH {mask}\nAND\nPUSH {target}\nEQ\n",
            witness if satisfiable else None,
        )
    if form == "or":
        forced = rng.getrandbits(256) | 1
        if satisfiable:
            target = witness | forced
        else:
            target = (witness | forced) ^ 1  # bit 0 is forced yet missing
        return (
            f"PUSH {forced}\nOR\nPUSH {target}\nEQ\n",
            witness if satisfiable else None,
        )
    if form == "shr":
        shift = rng.randrange(1, 129)
        if satisfiable:
            target = witness >> shift
        else:
            target = (1 << (256 - shift)) + 1  # above everything x >> n reaches
        return (
            f"PUSH {shift}\nSHR\nPUSH {target}\nEQ\n",
            witness if satisfiable else None,
        )
    if form == "lt":
        if satisfiable:
            bound = rng.getrandbits(256) | 1
            return f"PUSH {bound}\nSWAP1\nLT\n", rng.randrange(bound)
        return "PUSH 0\nSWAP1\nLT\n", None  # x < 0 never holds
    raise ValueError(form)


_GUARD_FORMS = ("eq", "add", "sub", "mul", "xor", "and", "or", "shr", "lt")
_ALWAYS_SAT = {"eq", "add", "sub", "xor"}


def random_guard_program(rng: Random) -> GuardProgram:
    form = rng.choice(_GUARD_FORMS)
    satisfiable = True if form in _ALWAYS_SAT else rng.random() < 0.5
    ops, witness = _guard_ops(rng, form, satisfiable)
    runtime = assemble(
        f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{_PROBE}
    EQ
    PUSH @body
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
body:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    {ops}
    PUSH @win
    JUMPI
    STOP
win:
    {_WIN_BLOCK}
"""
    )
    return GuardProgram(
        form=form,
        satisfiable=satisfiable,
        runtime=runtime,
        win_pc=len(runtime) - len(assemble(_WIN_BLOCK)),
        witness=witness,
    )
