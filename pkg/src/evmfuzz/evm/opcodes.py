"""Opcode table and bytecode scanning helpers."""

from __future__ import annotations

# code -> (mnemonic, stack items consumed, stack items produced)
TABLE: dict[int, tuple[str, int, int]] = {
    0x00: ("STOP", 0, 0),
    0x01: ("ADD", 2, 1),
    0x02: ("MUL", 2, 1),
    0x03: ("SUB", 2, 1),
    0x04: ("DIV", 2, 1),
    0x05: ("SDIV", 2, 1),
    0x06: ("MOD", 2, 1),
    0x07: ("SMOD", 2, 1),
    0x08: ("ADDMOD", 3, 1),
    0x09: ("MULMOD", 3, 1),
    0x0A: ("EXP", 2, 1),
    0x0B: ("SIGNEXTEND", 2, 1),
    0x10: ("LT", 2, 1),
    0x11: ("GT", 2, 1),
    0x12: ("SLT", 2, 1),
    0x13: ("SGT", 2, 1),
    0x14: ("EQ", 2, 1),
    0x15: ("ISZERO", 1, 1),
    0x16: ("AND", 2, 1),
    0x17: ("OR", 2, 1),
    0x18: ("XOR", 2, 1),
    0x19: ("NOT", 1, 1),
    0x1A: ("BYTE", 2, 1),
    0x1B: ("SHL", 2, 1),
    0x1C: ("SHR", 2, 1),
    0x1D: ("SAR", 2, 1),
    0x20: ("SHA3", 2, 1),
    0x30: ("ADDRESS", 0, 1),
    0x31: ("BALANCE", 1, 1),
    0x32: ("ORIGIN", 0, 1),
    0x33: ("CALLER", 0, 1),
    0x34: ("CALLVALUE", 0, 1),
    0x35: ("CALLDATALOAD", 1, 1),
    0x36: ("CALLDATASIZE", 0, 1),
    0x37: ("CALLDATACOPY", 3, 0),
    0x38: ("CODESIZE", 0, 1),
    0x39: ("CODECOPY", 3, 0),
    0x3A: ("GASPRICE", 0, 1),
    0x3B: ("EXTCODESIZE", 1, 1),
    0x3D: ("RETURNDATASIZE", 0, 1),
    0x3E: ("RETURNDATACOPY", 3, 0),
    0x40: ("BLOCKHASH", 1, 1),
    0x41: ("COINBASE", 0, 1),
    0x42: ("TIMESTAMP", 0, 1),
    0x43: ("NUMBER", 0, 1),
    0x44: ("DIFFICULTY", 0, 1),
    0x45: ("GASLIMIT", 0, 1),
    0x50: ("POP", 1, 0),
    0x51: ("MLOAD", 1, 1),
    0x52: ("MSTORE", 2, 0),
    0x53: ("MSTORE8", 2, 0),
    0x54: ("SLOAD", 1, 1),
    0x55: ("SSTORE", 2, 0),
    0x56: ("JUMP", 1, 0),
    0x57: ("JUMPI", 2, 0),
    0x58: ("PC", 0, 1),
    0x59: ("MSIZE", 0, 1),
    0x5A: ("GAS", 0, 1),
    0x5B: ("JUMPDEST", 0, 0),
    0xF0: ("CREATE", 3, 1),
    0xF1: ("CALL", 7, 1),
    0xF2: ("CALLCODE", 7, 1),
    0xF3: ("RETURN", 2, 0),
    0xF4: ("DELEGATECALL", 6, 1),
    0xFA: ("STATICCALL", 6, 1),
    0xFD: ("REVERT", 2, 0),
    0xFE: ("INVALID", 0, 0),
    0xFF: ("SELFDESTRUCT", 1, 0),
}

for _n in range(32):
    TABLE[0x60 + _n] = (f"PUSH{_n + 1}", 0, 1)
for _n in range(16):
    TABLE[0x80 + _n] = (f"DUP{_n + 1}", _n + 1, _n + 2)
    TABLE[0x90 + _n] = (f"SWAP{_n + 1}", _n + 2, _n + 2)
for _n in range(5):
    TABLE[0xA0 + _n] = (f"LOG{_n}", _n + 2, 0)

NAME_TO_CODE: dict[str, int] = {name: code for code, (name, _, _) in TABLE.items()}

TERMINALS = {"STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"}
CALL_OPS = {"CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"}
SEND_OPS = {"CREATE", "CALL", "CALLCODE", "DELEGATECALL", "SELFDESTRUCT"}
BLOCK_OPS = {"BLOCKHASH", "COINBASE", "TIMESTAMP", "NUMBER", "DIFFICULTY", "GASLIMIT"}


def push_width(code: int) -> int:
    """Immediate width for PUSH opcodes, 0 otherwise."""
    return code - 0x5F if 0x60 <= code <= 0x7F else 0


def instruction_starts(code: bytes) -> list[int]:
    """Byte offsets that begin an instruction (PUSH immediates skipped)."""
    starts = []
    pc = 0
    while pc < len(code):
        starts.append(pc)
        pc += 1 + push_width(code[pc])
    return starts


def valid_jumpdests(code: bytes) -> frozenset[int]:
    return frozenset(pc for pc in instruction_starts(code) if code[pc] == 0x5B)


def disassemble(code: bytes) -> list[tuple[int, str, int | None]]:
    """(pc, mnemonic, push immediate or None) per instruction."""
    out = []
    pc = 0
    while pc < len(code):
        opcode = code[pc]
        name = TABLE.get(opcode, ("INVALID",))[0] if opcode in TABLE else f"UNKNOWN_{opcode:#04x}"
        width = push_width(opcode)
        if width:
            immediate = int.from_bytes(code[pc + 1:pc + 1 + width], "big")
            out.append((pc, name, immediate))
        else:
            out.append((pc, name, None))
        pc += 1 + width
    return out
