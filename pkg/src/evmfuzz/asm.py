"""Tiny two-pass assembler for hand-written test bytecode.

Syntax, one or more tokens per line, ``;`` starts a comment:

    entry:              ; label definition
        PUSH1 0x04      ; explicit-width push
        PUSH 1000000    ; minimal-width push (decimal or 0x hex)
        PUSH @entry     ; label reference, emitted as PUSH2
        PUSH @b-@a      ; label difference (e.g. runtime code length)
        JUMPI
        DATA 0xdeadbeef ; raw bytes appended verbatim

Label references always occupy a fixed two-byte immediate so offsets are
stable across passes; code larger than 64 KiB is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

from .evm import opcodes


class AsmError(ValueError):
    pass


@dataclass
class _Item:
    kind: str  # "op" | "push" | "data"
    line: int
    opcode: int = 0
    width: int = 0
    value: int | None = None
    ref: str | None = None  # "@label" or "@a-@b"
    blob: bytes = b""

    def size(self) -> int:
        if self.kind == "data":
            return len(self.blob)
        return 1 + self.width


def _tokenize(source: str) -> list[tuple[int, str]]:
    tokens = []
    for lineno, line in enumerate(source.splitlines(), start=1):
        body = line.split(";", 1)[0]
        for token in body.split():
            tokens.append((lineno, token))
    return tokens


def _parse_int(token: str, lineno: int) -> int:
    try:
        value = int(token, 0)
    except ValueError:
        raise AsmError(f"line {lineno}: bad integer {token!r}") from None
    if value < 0:
        raise AsmError(f"line {lineno}: negative immediate {token!r}")
    return value


def assemble(source: str) -> bytes:
    tokens = _tokenize(source)
    items: list[_Item] = []
    labels: dict[str, int] = {}
    offset = 0
    i = 0
    while i < len(tokens):
        lineno, token = tokens[i]
        i += 1
        if token.endswith(":"):
            name = token[:-1]
            if not name or name in labels:
                raise AsmError(f"line {lineno}: bad or duplicate label {token!r}")
            labels[name] = offset
            continue
        upper = token.upper()
        if upper == "DATA":
            if i >= len(tokens):
                raise AsmError(f"line {lineno}: DATA needs an operand")
            _, operand = tokens[i]
            i += 1
            hexstr = operand[2:] if operand.lower().startswith("0x") else operand
            try:
                blob = bytes.fromhex(hexstr)
            except ValueError:
                raise AsmError(f"line {lineno}: bad DATA hex {operand!r}") from None
            item = _Item("data", lineno, blob=blob)
        elif upper.startswith("PUSH"):
            explicit = upper[4:]
            if i >= len(tokens):
                raise AsmError(f"line {lineno}: {upper} needs an operand")
            _, operand = tokens[i]
            i += 1
            item = _Item("push", lineno)
            if operand.startswith("@"):
                item.ref = operand
                item.width = int(explicit) if explicit else 2
            else:
                item.value = _parse_int(operand, lineno)
                if explicit:
                    item.width = int(explicit)
                    if item.value >> (8 * item.width):
                        raise AsmError(
                            f"line {lineno}: {operand} does not fit PUSH{item.width}"
                        )
                else:
                    item.width = max(1, (item.value.bit_length() + 7) // 8)
            if not 1 <= item.width <= 32:
                raise AsmError(f"line {lineno}: bad push width {item.width}")
            item.opcode = 0x5F + item.width
        else:
            code = opcodes.NAME_TO_CODE.get(upper)
            if code is None:
                raise AsmError(f"line {lineno}: unknown mnemonic {token!r}")
            if opcodes.push_width(code):
                raise AsmError(f"line {lineno}: {upper} requires an immediate operand")
            item = _Item("op", lineno, opcode=code)
        items.append(item)
        offset += item.size()
    labels["code_end"] = labels.get("code_end", offset)

    def resolve(ref: str, lineno: int) -> int:
        parts = ref.split("-")
        total = None
        for part in parts:
            if not part.startswith("@") or part[1:] not in labels:
                raise AsmError(f"line {lineno}: unknown label in {ref!r}")
            value = labels[part[1:]]
            total = value if total is None else total - value
        assert total is not None
        if total < 0:
            raise AsmError(f"line {lineno}: negative label difference {ref!r}")
        return total

    out = bytearray()
    for item in items:
        if item.kind == "data":
            out.extend(item.blob)
            continue
        out.append(item.opcode)
        if item.kind == "push":
            value = item.value if item.ref is None else resolve(item.ref, item.line)
            if value >> (8 * item.width):
                raise AsmError(f"line {item.line}: value {value:#x} does not fit")
            out.extend(value.to_bytes(item.width, "big"))
    return bytes(out)


def creation_wrapper(runtime: bytes) -> bytes:
    """Standard constructor-less creation code: copy runtime, return it."""
    prefix = assemble(
        f"""
        PUSH2 {len(runtime)}
        DUP1
        PUSH @runtime      ; offset of runtime inside creation code
        PUSH1 0x00
        CODECOPY
        PUSH1 0x00
        RETURN
        runtime:
        """
    )
    return prefix + runtime
