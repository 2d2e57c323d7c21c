"""Campaign driver: deploy the target, then alternate generations of genetic
search with constraint solving whenever coverage stops growing.

Each generation executes every individual from the post-deployment snapshot,
taints the traces, feeds annotations to the detectors, and evicts pool values
that sat in failing path conditions.  A generation that uncovers no new
instruction triggers the solver: open branches (conditional jumps observed in
one direction only) are negated and any model found is written back into a
copy of the witnessing individual, which is injected into the next
population.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .abi import ContractAbi
from .analysis import (
    CoverageStore,
    PathConstraint,
    SolverBridge,
    TaintReport,
    parse_var,
    purge_reverting_values,
    read_set,
    taint_individual,
    write_set,
)
from .detectors import ALL_KINDS, DetectorSuite
from .evm import EmulatedState, EnvOverrides, Interpreter, Transaction
from .evm.interpreter import DEFAULT_CALL_RESULT, _derive_address
from .ga import (
    Evaluation,
    GaConfig,
    GeneticEngine,
    Individual,
    Input,
    compute_fitness,
)
from .ga.engine import FALLBACK_KEY, MAX_GAS, MIN_GAS

REPORT_VERSION = 1

INPUT_WALL_CAP = 1.0  # seconds; pathological bytecode must not stall the loop

ADDRESS_MASK = (1 << 160) - 1
MAX_SOLVED_CALLDATA_SIZE = 4096
MAX_SOLVED_RETURN_SIZE = 1 << 20
MAX_SOLVED_EXTCODE_SIZE = 1 << 24
# Solved block values stay inside plausible chain history: a model that pins
# the clock near 2**256 replays fine but makes every date sum wrap, flooding
# the overflow detector with arithmetic no real block could produce.
MAX_SOLVED_TIMESTAMP = 1 << 48
MAX_SOLVED_BLOCK_NUMBER = 1 << 32


@dataclass
class CampaignConfig:
    seed: int = 1
    timeout: float = 60.0  # wall-clock budget, seconds
    generations: int | None = None  # evolution cap; 0 = initial population only
    solver_enabled: bool = True
    raw_aware: bool = True
    env_fuzzing: bool = True
    solver_timeout_ms: int = 100
    solver_argv: tuple[str, ...] | None = None  # external solver command
    max_solver_calls: int = 16  # per activation, not per campaign
    detectors: tuple[str, ...] = ALL_KINDS
    trace_dir: str | None = None
    # transactions replayed after deployment, before the campaign snapshot:
    # {"from": addr, "to": addr?, "value": n?, "data": hex?, "timestamp": n?}
    initial_state: tuple = ()

    def jsonable(self) -> dict:
        return {
            "seed": self.seed,
            "timeout": self.timeout,
            "generations": self.generations,
            "solver": self.solver_enabled,
            "raw_aware": self.raw_aware,
            "env_fuzzing": self.env_fuzzing,
            "solver_timeout_ms": self.solver_timeout_ms,
            "solver_argv": list(self.solver_argv) if self.solver_argv else None,
            "detectors": list(self.detectors),
            "initial_state": [dict(tx) for tx in self.initial_state],
        }


def _as_int(value) -> int:
    return int(value, 0) if isinstance(value, str) else int(value)


class Campaign:
    """One fuzzing run against one contract."""

    def __init__(
        self,
        abi: ContractAbi,
        runtime_code: bytes,
        creation_code: bytes | None = None,
        constructor_args: bytes = b"",
        config: CampaignConfig | None = None,
        pre_storage: dict[int, int] | None = None,
        contract_balance: int = 0,
    ) -> None:
        self.config = config or CampaignConfig()
        self.rng = Random(self.config.seed)
        self.interpreter = Interpreter(wall_cap=INPUT_WALL_CAP)
        self.state = EmulatedState()
        accounts = self.state.accounts

        if creation_code is not None:
            self.address, _ = self.interpreter.deploy(
                self.state,
                creation_code,
                sender=accounts.deployer,
                constructor_args=constructor_args,
            )
            runtime = self.state.code[self.address]
        else:
            # No constructor to run: install the runtime image directly at
            # the address a deployment would have produced.
            nonce = self.state.nonces.get(accounts.deployer, 0)
            self.state.nonces[accounts.deployer] = nonce + 1
            self.address = _derive_address(accounts.deployer, nonce)
            self.state.code[self.address] = runtime_code
            runtime = runtime_code
        for slot, value in (pre_storage or {}).items():
            self.state.sstore(self.address, slot, value)
        if contract_balance:
            self.state.credit(self.address, contract_balance)
        for tx in self.config.initial_state:
            self._replay(tx)

        self.runtime = runtime
        self.coverage = CoverageStore(runtime)
        self.engine = GeneticEngine(
            self.rng,
            abi,
            accounts,
            self.address,
            GaConfig(
                raw_aware=self.config.raw_aware,
                env_fuzzing=self.config.env_fuzzing,
            ),
        )
        if self.config.solver_argv:
            external_argv = list(self.config.solver_argv)
        elif self.config.solver_enabled:
            external_argv = "auto"
        else:
            external_argv = None  # a disabled solver must never probe or spawn
        self.bridge = SolverBridge(
            enabled=self.config.solver_enabled,
            timeout_ms=self.config.solver_timeout_ms,
            external_argv=external_argv,
        )
        self.detectors = DetectorSuite(
            accounts, self.address, runtime, enabled=self.config.detectors
        )
        self.findings = []
        self.series: list[list[float]] = []
        self.generations = 0
        self.executions = 0
        self._base = self.state.snapshot()
        self._infeasible: set[tuple[int, bool]] = set()
        self._trace_dir = Path(self.config.trace_dir) if self.config.trace_dir else None
        if self._trace_dir:
            self._trace_dir.mkdir(parents=True, exist_ok=True)

    def _replay(self, tx: dict) -> None:
        env = EnvOverrides()
        if "timestamp" in tx:
            env.timestamp = _as_int(tx["timestamp"])
        data = tx.get("data", "")
        self.interpreter.execute(
            self.state,
            Transaction(
                sender=_as_int(tx["from"]),
                to=_as_int(tx.get("to", self.address)),
                value=_as_int(tx.get("value", 0)),
                gas_limit=MAX_GAS,
                data=bytes.fromhex(data.removeprefix("0x")) if data else b"",
            ),
            env,
        )

    # ------------------------------------------------------------------
    # execution

    def run_individual(
        self, individual: Individual
    ) -> tuple[list, list[TaintReport], list[dict[int, int]]]:
        """Execute one individual from the deployment snapshot."""
        self.state.restore(self._base)
        traces = []
        received_before = []
        for inp in individual.inputs:
            received_before.append(dict(self.state.received_from))
            trace = self.interpreter.execute(
                self.state, inp.transaction(self.address), inp.env
            )
            traces.append(trace)
            self.engine.observe_trace(trace)
        self.executions += len(traces)
        reports = taint_individual(individual.inputs, traces)
        return traces, reports, received_before

    def _evaluate(self, traces, executed_before) -> Evaluation:
        reads: frozenset = frozenset()
        writes: frozenset = frozenset()
        for trace in traces:
            reads |= read_set(trace)
            if trace.state_delta_applied:
                writes |= write_set(trace)
        return Evaluation(
            fitness=compute_fitness(traces, executed_before),
            storage_reads=reads,
            storage_writes=writes,
        )

    def _dump_traces(self, individual: Individual, traces) -> None:
        if not self._trace_dir:
            return
        path = self._trace_dir / f"{individual.fingerprint()}.jsonl"
        with path.open("w") as handle:
            for index, trace in enumerate(traces):
                for line in trace.jsonl():
                    handle.write(line[:-1] + f', "input": {index}}}\n')

    # ------------------------------------------------------------------
    # the generation loop

    def run(self) -> dict:
        """The feedback loop.  The budget is checked at generation boundaries
        only; the per-input wall cap bounds each execution in between.  One
        series point lands after every executed population, so the series is
        always one longer than the evolved-generation count."""
        started = time.monotonic()
        deadline = started + self.config.timeout
        population = self.engine.initial_population()
        stagnation = 0

        while True:
            executed_before = self.coverage.snapshot_executed()
            evals: list[Evaluation] = []
            witnesses: list[tuple[Individual, list[TaintReport]]] = []
            grew = False
            for individual in population:
                traces, reports, received_before = self.run_individual(individual)
                for trace in traces:
                    grew = self.coverage.merge_trace(trace) or grew
                evals.append(self._evaluate(traces, executed_before))
                witnesses.append((individual, reports))
                self.findings.extend(
                    self.detectors.inspect(individual, traces, reports, received_before)
                )
                purge_reverting_values(
                    individual.inputs, traces, reports, self.engine.pools
                )
                self._dump_traces(individual, traces)
            self.series.append(
                [round((time.monotonic() - started) * 1000.0, 1), self.coverage.percent()]
            )

            injected: list[Individual] = []
            if grew:
                stagnation = 0
            else:
                stagnation += 1
                injected = self._solve_open_branches(witnesses)

            cap = self.config.generations
            if cap is not None and self.generations >= cap:
                break
            if time.monotonic() >= deadline:
                break
            if stagnation >= self.engine.config.stagnation_limit and not injected:
                population = self.engine.reinitialize()
                stagnation = 0
            else:
                population = self.engine.evolve(population, evals)
                population[: len(injected)] = injected
            self.generations += 1

        return self.report(time.monotonic() - started)

    # ------------------------------------------------------------------
    # solver activation

    def _solve_open_branches(
        self, witnesses: list[tuple[Individual, list[TaintReport]]]
    ) -> list[Individual]:
        """Negate never-taken sides of observed branches; returns patched
        copies of the witnessing individuals for every model found."""
        if not self.config.solver_enabled:
            return []
        injected: list[Individual] = []
        budget = self.config.max_solver_calls
        for branch in self.coverage.find_open_branches():
            if budget <= 0:
                break
            key = (branch.pc, branch.want_taken)
            if key in self._infeasible:
                continue
            witness = self._find_witness(witnesses, branch.pc, not branch.want_taken)
            if witness is None:
                continue
            individual, constraints, target_index, var_values = witness
            budget -= 1
            result = self.bridge.solve_branch(constraints, target_index, var_values)
            if result.status == "sat" and result.model:
                # a branch that stays open despite a model (replay drifted,
                # value got purged) is solved again from a fresh witness
                injected.append(self._apply_model(individual, result.model))
            elif result.status == "unsat":
                # the other side is infeasible from this prefix; don't retry
                self._infeasible.add(key)
        return injected

    def _find_witness(
        self,
        witnesses: list[tuple[Individual, list[TaintReport]]],
        pc: int,
        observed_taken: bool,
    ) -> tuple[Individual, list[PathConstraint], int, dict[str, int]] | None:
        """Locate an individual whose path went through the branch in the
        direction we already have, along with its constraint prefix."""
        for individual, reports in witnesses:
            merged: list[PathConstraint] = []
            var_values: dict[str, int] = {}
            target = -1
            for report in reports:
                for constraint in report.constraints:
                    if (
                        target < 0
                        and constraint.pc == pc
                        and constraint.taken == observed_taken
                    ):
                        target = len(merged)
                    merged.append(constraint)
                # later inputs observe post-write storage; last value wins,
                # matching what the target input actually read
                var_values.update(report.var_values)
            if target >= 0:
                return individual, merged, target, var_values
        return None

    # ------------------------------------------------------------------
    # writing models back into test cases

    def _apply_model(self, individual: Individual, model: dict[str, int]) -> Individual:
        patched = individual.copy()
        for name in sorted(model):
            info = parse_var(name)
            if info.input_index is None or info.input_index >= len(patched.inputs):
                continue
            self._apply_var(patched.inputs[info.input_index], info, model[name])
        return patched

    def _apply_var(self, inp: Input, info, value: int) -> None:
        pools = self.engine.pools
        selector = inp.fn.selector if inp.fn else FALLBACK_KEY
        kind = info.kind
        if kind == "callvalue":
            inp.value = value
            pools.insert("amount", selector, value)
            inp.pool_tags["callvalue"] = ("amount", selector, value)
        elif kind in ("caller", "origin"):
            sender = value & ADDRESS_MASK
            inp.sender = sender
            pools.insert("sender", selector, sender)
            inp.pool_tags["caller"] = ("sender", selector, sender)
        elif kind == "timestamp":
            stamp = min(value, MAX_SOLVED_TIMESTAMP)
            inp.env.timestamp = stamp
            pools.insert("timestamp", selector, stamp)
            inp.pool_tags["timestamp"] = ("timestamp", selector, stamp)
        elif kind == "blocknumber":
            number = min(value, MAX_SOLVED_BLOCK_NUMBER)
            inp.env.block_number = number
            pools.insert("block_number", selector, number)
            inp.pool_tags["blocknumber"] = ("block_number", selector, number)
        elif kind == "calldatasize":
            size = min(value, MAX_SOLVED_CALLDATA_SIZE)
            inp.calldata_size = size
            pools.insert("calldata_size", selector, size)
            inp.pool_tags["calldatasize"] = ("calldata_size", selector, size)
        elif kind == "gas":
            gas = min(max(value, MIN_GAS), MAX_GAS)
            inp.gas_limit = gas
            pools.insert("gas_limit", selector, gas)
            inp.pool_tags["gas"] = ("gas_limit", selector, gas)
        elif kind == "arg":
            self._apply_argument(inp, info.extra, value)
        elif kind == "callres":
            callee = info.extra
            _, ret = inp.env.call_results.get(callee, DEFAULT_CALL_RESULT)
            solved = (1 if value else 0, ret)
            inp.env.call_results[callee] = solved
            pools.insert("call_result", callee, solved)
            inp.pool_tags[f"callret_{callee:x}"] = ("call_result", callee, solved)
        elif kind == "callret":
            callee, chunk = info.extra
            success, ret = inp.env.call_results.get(callee, DEFAULT_CALL_RESULT)
            ret = ret.ljust(32 * (chunk + 1), b"\x00")
            word = value.to_bytes(32, "big")
            ret = ret[: 32 * chunk] + word + ret[32 * (chunk + 1):]
            solved = (success, ret)
            inp.env.call_results[callee] = solved
            pools.insert("call_result", callee, solved)
            inp.pool_tags[f"callret_{callee:x}"] = ("call_result", callee, solved)
        elif kind == "retsize":
            inp.env.returndata_sizes[info.extra] = min(value, MAX_SOLVED_RETURN_SIZE)
        elif kind == "extcode":
            target = info.extra
            size = min(value, MAX_SOLVED_EXTCODE_SIZE)
            inp.env.extcode_sizes[target] = size
            pools.insert("extcode_size", target, size)
            inp.pool_tags[f"extcodesize_{target:x}"] = ("extcode_size", target, size)

    def _apply_argument(self, inp: Input, word_index: int, value: int) -> None:
        if inp.fn is None:
            # raw calldata: patch the word in place, growing as needed
            end = 4 + 32 * (word_index + 1)
            data = bytearray(inp.raw_calldata.ljust(end, b"\x00"))
            data[end - 32: end] = value.to_bytes(32, "big")
            inp.raw_calldata = bytes(data)
            return
        # map the head word back to an argument; only single-word static
        # arguments can take a solved value directly
        offset = 0
        for position, abi_type in enumerate(inp.fn.inputs):
            if offset == word_index:
                if abi_type.is_dynamic() or abi_type.head_words() != 1:
                    return
                coerced = _coerce_word(abi_type, value)
                inp.args[position] = coerced
                key = (inp.fn.selector, position)
                self.engine.pools.insert("argument", key, coerced)
                inp.pool_tags[f"arg_{position}"] = ("argument", key, coerced)
                return
            offset += abi_type.head_words()

    # ------------------------------------------------------------------
    # reporting

    def report(self, elapsed: float) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": self.config.jsonable(),
            "seed": self.config.seed,
            "contract": f"{self.address:#042x}",
            "elapsed_seconds": round(elapsed, 3),
            "generations": self.generations,
            "executions": self.executions,
            "coverage": {
                "instructions_visited": len(self.coverage.executed),
                "instructions_total": self.coverage.instructions_total,
                "percent": round(self.coverage.percent(), 2),
                "branches": self.coverage.branches_observed(),
            },
            "series": self.series,
            "findings": [finding.jsonable() for finding in self.findings],
            "solver": dict(self.bridge.stats),
            "crossovers": list(self.engine.crossover_log),
        }


def _coerce_word(abi_type, value: int):
    """Squeeze a 256-bit model word into an ABI value of the given type."""
    if abi_type.kind == "uint":
        return value & ((1 << abi_type.bits) - 1)
    if abi_type.kind == "int":
        masked = value & ((1 << abi_type.bits) - 1)
        if masked >= 1 << (abi_type.bits - 1):
            masked -= 1 << abi_type.bits
        return masked
    if abi_type.kind == "address":
        return value & ADDRESS_MASK
    if abi_type.kind == "bool":
        return int(value != 0)
    if abi_type.kind == "fbytes":
        # fixed bytes sit left-aligned in their calldata word
        return (value >> (8 * (32 - abi_type.bits))).to_bytes(abi_type.bits, "big")
    raise ValueError(f"not a word type: {abi_type.kind}")  # pragma: no cover


def run_campaign(
    abi: ContractAbi,
    runtime_code: bytes,
    creation_code: bytes | None = None,
    constructor_args: bytes = b"",
    config: CampaignConfig | None = None,
    pre_storage: dict[int, int] | None = None,
    contract_balance: int = 0,
) -> dict:
    campaign = Campaign(
        abi,
        runtime_code,
        creation_code=creation_code,
        constructor_args=constructor_args,
        config=config,
        pre_storage=pre_storage,
        contract_balance=contract_balance,
    )
    return campaign.run()


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
