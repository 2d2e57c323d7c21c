import json

import pytest

from evmfuzz.abi import AbiType, parse_abi
from evmfuzz.asm import assemble, creation_wrapper
from evmfuzz.campaign import (
    Campaign,
    CampaignConfig,
    _coerce_word,
    run_campaign,
    write_report,
)
from evmfuzz.ga import Individual, Input
from evmfuzz.keccak import keccak256


def selector(signature: str) -> bytes:
    return keccak256(signature.encode())[:4]


# ---------------------------------------------------------------------------
# fixtures


SET_SEL = selector("set(uint256)")

# store arg0 at slot 0, but only behind an 8-byte magic constant the GA
# cannot stumble into — flipping the guard needs the solver
MAGIC_GUARD = assemble(
    f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    PUSH4 0x{SET_SEL.hex()}
    EQ
    PUSH @body
    JUMPI
    STOP
body:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    PUSH8 0xdeadbeef12345678
    EQ
    PUSH @win
    JUMPI
    PUSH1 0x00
    PUSH1 0x00
    REVERT
win:
    JUMPDEST
    PUSH1 0x04
    CALLDATALOAD
    PUSH1 0x00
    SSTORE
    STOP
"""
)

MAGIC_ABI = parse_abi(
    '[{"type": "function", "name": "set",'
    ' "inputs": [{"type": "uint256"}], "stateMutability": "nonpayable"}]'
)


WRITE_SEL = selector("mark()")
GATE_SEL = selector("gated()")

# mark() writes slot 1; gated() branches on slot 1 — the deep body is only
# reachable by an individual that calls mark() first, i.e. by crossover
RAW_PAIR = assemble(
    f"""
    PUSH1 0x00
    CALLDATALOAD
    PUSH1 0xe0
    SHR
    DUP1
    PUSH4 0x{WRITE_SEL.hex()}
    EQ
    PUSH @mark
    JUMPI
    PUSH4 0x{GATE_SEL.hex()}
    EQ
    PUSH @gated
    JUMPI
    STOP
mark:
    JUMPDEST
    PUSH1 0x01
    PUSH1 0x01
    SSTORE
    STOP
gated:
    JUMPDEST
    PUSH1 0x01
    SLOAD
    PUSH @deep
    JUMPI
    STOP
deep:
    JUMPDEST
    PUSH1 0x02
    PUSH1 0x02
    SSTORE
    STOP
"""
)

RAW_PAIR_ABI = parse_abi(
    '[{"type": "function", "name": "mark", "inputs": []},'
    ' {"type": "function", "name": "gated", "inputs": []}]'
)


# any caller can blow the contract away; flagged when an attacker does
SUICIDAL = assemble(
    """
    CALLER
    SELFDESTRUCT
    """
)

EMPTY_ABI = parse_abi("[]")


# branches on preset storage slot 7; storage is not fuzzable, so the deep
# body is reachable only when the campaign starts with the slot set
STORAGE_GATE = assemble(
    """
    PUSH1 0x07
    SLOAD
    PUSH @open
    JUMPI
    STOP
open:
    JUMPDEST
    PUSH1 0x01
    PUSH1 0x00
    SSTORE
    STOP
"""
)


def quick_config(**overrides) -> CampaignConfig:
    base = dict(seed=3, timeout=20.0, generations=25)
    base.update(overrides)
    return CampaignConfig(**base)


# ---------------------------------------------------------------------------
# coverage and the solver loop


def test_solver_flips_magic_guard():
    report = run_campaign(MAGIC_ABI, MAGIC_GUARD, config=quick_config(generations=40))
    assert report["coverage"]["percent"] == 100.0
    assert report["solver"]["sat"] >= 1
    assert report["solver"]["internal"] >= 1


def test_without_solver_magic_guard_stays_closed():
    report = run_campaign(
        MAGIC_ABI, MAGIC_GUARD, config=quick_config(generations=40, solver_enabled=False)
    )
    assert report["coverage"]["percent"] < 100.0
    assert report["solver"]["attempts"] == 0


def test_raw_crossover_reaches_write_dependent_branch():
    report = run_campaign(RAW_PAIR_ABI, RAW_PAIR, config=quick_config(generations=40))
    assert report["coverage"]["percent"] == 100.0


def test_crossover_log_records_parent_and_child_names():
    report = run_campaign(RAW_PAIR_ABI, RAW_PAIR, config=quick_config())
    assert report["crossovers"]
    for entry in report["crossovers"]:
        assert set(entry) == {"first", "second", "child"}
        combined = entry["first"] + entry["second"]
        reversed_ = entry["second"] + entry["first"]
        assert entry["child"] in (combined, reversed_)


def test_storage_gate_needs_preset_state():
    closed = run_campaign(EMPTY_ABI, STORAGE_GATE, config=quick_config())
    opened = run_campaign(
        EMPTY_ABI, STORAGE_GATE, config=quick_config(), pre_storage={7: 1}
    )
    # the branch direction flips with the preset, and storage itself is not
    # fuzzable, so each run only ever sees its own side
    assert closed["coverage"]["percent"] < 100.0
    assert opened["coverage"]["percent"] < 100.0
    assert (
        opened["coverage"]["instructions_visited"]
        > closed["coverage"]["instructions_visited"]
    )


def test_series_is_monotonic():
    report = run_campaign(MAGIC_ABI, MAGIC_GUARD, config=quick_config())
    elapsed = [point[0] for point in report["series"]]
    percents = [point[1] for point in report["series"]]
    assert elapsed == sorted(elapsed)
    assert percents == sorted(percents)
    assert len(report["series"]) == report["generations"] + 1


def test_same_seed_reproduces_the_run():
    config = dict(seed=11, timeout=30.0, generations=10)
    first = run_campaign(RAW_PAIR_ABI, RAW_PAIR, config=CampaignConfig(**config))
    second = run_campaign(RAW_PAIR_ABI, RAW_PAIR, config=CampaignConfig(**config))
    assert first["coverage"] == second["coverage"]
    assert first["executions"] == second["executions"]
    assert first["crossovers"] == second["crossovers"]
    assert [f["kind"] for f in first["findings"]] == [
        f["kind"] for f in second["findings"]
    ]
    assert [p for _, p in first["series"]] == [p for _, p in second["series"]]


# ---------------------------------------------------------------------------
# findings


def test_attacker_selfdestruct_is_found():
    report = run_campaign(EMPTY_ABI, SUICIDAL, config=quick_config(seed=1))
    kinds = {f["kind"] for f in report["findings"]}
    assert "US" in kinds


# ---------------------------------------------------------------------------
# construction paths


def test_deploy_from_creation_code():
    campaign = Campaign(
        MAGIC_ABI, b"", creation_code=creation_wrapper(MAGIC_GUARD)
    )
    assert campaign.state.code[campaign.address] == MAGIC_GUARD
    assert campaign.runtime == MAGIC_GUARD
    assert campaign.coverage.instructions_total > 0


def test_runtime_only_install():
    campaign = Campaign(MAGIC_ABI, MAGIC_GUARD)
    assert campaign.state.code[campaign.address] == MAGIC_GUARD


def test_preseeded_storage_and_balance():
    campaign = Campaign(
        EMPTY_ABI, STORAGE_GATE, pre_storage={7: 5}, contract_balance=123
    )
    assert campaign.state.sload(campaign.address, 7) == 5
    assert campaign.state.balance_of(campaign.address) == 123


def test_ablation_flags_reach_the_engine():
    campaign = Campaign(
        MAGIC_ABI,
        MAGIC_GUARD,
        config=CampaignConfig(raw_aware=False, env_fuzzing=False, solver_enabled=False),
    )
    assert campaign.engine.config.raw_aware is False
    assert campaign.engine.config.env_fuzzing is False
    assert campaign.bridge.enabled is False


# ---------------------------------------------------------------------------
# report shape


def test_report_keys_are_pinned():
    report = run_campaign(MAGIC_ABI, MAGIC_GUARD, config=quick_config(generations=3))
    assert set(report) == {
        "version",
        "config",
        "seed",
        "contract",
        "elapsed_seconds",
        "generations",
        "executions",
        "coverage",
        "series",
        "findings",
        "solver",
        "crossovers",
    }
    assert report["seed"] == report["config"]["seed"]
    assert set(report["coverage"]) == {
        "instructions_visited",
        "instructions_total",
        "percent",
        "branches",
    }


def test_report_round_trips_through_json(tmp_path):
    report = run_campaign(MAGIC_ABI, MAGIC_GUARD, config=quick_config(generations=3))
    out = tmp_path / "report.json"
    write_report(report, out)
    assert json.loads(out.read_text()) == report


def test_trace_dump_writes_parseable_lines(tmp_path):
    config = quick_config(generations=2, trace_dir=str(tmp_path / "traces"))
    run_campaign(MAGIC_ABI, MAGIC_GUARD, config=config)
    files = list((tmp_path / "traces").glob("*.jsonl"))
    assert files
    for path in files:
        for line in path.read_text().splitlines():
            record = json.loads(line)
            assert {"op", "pc", "stack", "depth", "error", "input"} <= set(record)


# ---------------------------------------------------------------------------
# model application


def make_campaign() -> Campaign:
    return Campaign(MAGIC_ABI, MAGIC_GUARD, config=CampaignConfig(seed=9))


def test_apply_model_patches_static_argument():
    campaign = make_campaign()
    fn = MAGIC_ABI.functions[0]
    individual = Individual([Input(fn=fn, sender=1, args=[0])])
    patched = campaign._apply_model(individual, {"arg_0_0": 0xDEADBEEF12345678})
    assert patched.inputs[0].args[0] == 0xDEADBEEF12345678
    assert individual.inputs[0].args[0] == 0  # original untouched
    assert campaign.engine.pools.pick("argument", (fn.selector, 0)) == 0xDEADBEEF12345678


def test_apply_model_patches_raw_calldata_word():
    campaign = make_campaign()
    individual = Individual([Input(fn=None, sender=1, raw_calldata=b"\xaa\xbb\xcc\xdd")])
    patched = campaign._apply_model(individual, {"arg_0_0": 5})
    data = patched.inputs[0].raw_calldata
    assert len(data) == 36
    assert data[:4] == b"\xaa\xbb\xcc\xdd"
    assert int.from_bytes(data[4:36], "big") == 5


def test_apply_model_sets_environment_fields():
    campaign = make_campaign()
    fn = MAGIC_ABI.functions[0]
    individual = Individual([Input(fn=fn, sender=1, args=[0])])
    model = {
        "caller_0": (1 << 200) | 0xABCD,  # masked to 160 bits
        "timestamp_0": 1_700_000_000,
        "callres_0_99": 0,
        "callret_0_99_w1": 7,
        "extcode_0_1234": 10,
        "gas_0": 5,  # clamped up to the floor
    }
    patched = campaign._apply_model(individual, model)
    inp = patched.inputs[0]
    assert inp.sender == 0xABCD
    assert inp.env.timestamp == 1_700_000_000
    success, ret = inp.env.call_results[0x99]  # addresses ride in hex
    assert success == 0
    assert int.from_bytes(ret[32:64], "big") == 7
    assert inp.env.extcode_sizes[0x1234] == 10
    assert inp.gas_limit == 21_000


def test_apply_model_skips_out_of_range_inputs():
    campaign = make_campaign()
    fn = MAGIC_ABI.functions[0]
    individual = Individual([Input(fn=fn, sender=1, args=[0])])
    patched = campaign._apply_model(
        individual, {"arg_0_5": 1, "storage_7": 2, "balance_0": 3}
    )
    assert patched.inputs[0].args[0] == 0


@pytest.mark.parametrize(
    ("type_text", "word", "expected"),
    [
        ("uint8", 0x1FF, 0xFF),
        ("uint256", 2**256 - 1, 2**256 - 1),
        ("int8", 0xFF, -1),
        ("int256", 2**255, -(2**255)),
        ("address", (1 << 200) | 5, 5),
        ("bool", 2, 1),
        ("bool", 0, 0),
        (
            "bytes4",
            int.from_bytes(b"\xde\xad\xbe\xef" + b"\x00" * 28, "big"),
            b"\xde\xad\xbe\xef",
        ),
    ],
)
def test_coerce_word(type_text, word, expected):
    assert _coerce_word(AbiType.parse(type_text), word) == expected


# ---------------------------------------------------------------------------
# generation accounting and initial state


def test_generation_cap_zero_runs_initial_population_only():
    report = run_campaign(MAGIC_ABI, MAGIC_GUARD, config=quick_config(generations=0))
    assert report["generations"] == 0
    assert len(report["series"]) == 1
    assert report["executions"] > 0


# writes slot 7 only for one specific caller, an address outside the fuzzed
# account set — only a replayed setup transaction can reach the store
PRIVILEGED = 0x00000000000000000000000000000000000D00D5

PRIVILEGED_SETTER = assemble(
    f"""
    CALLER
    PUSH20 0x{PRIVILEGED:040x}
    EQ
    PUSH @write
    JUMPI
    STOP
write:
    JUMPDEST
    PUSH1 0x01
    PUSH1 0x07
    SSTORE
    STOP
"""
)


def test_initial_state_transactions_apply_before_the_snapshot():
    config = CampaignConfig(
        initial_state=({"from": f"{PRIVILEGED:#x}", "data": "0x"},)
    )
    campaign = Campaign(EMPTY_ABI, PRIVILEGED_SETTER, config=config)
    assert campaign.state.sload(campaign.address, 7) == 1
    # the write must survive the per-individual restore
    campaign.state.restore(campaign._base)
    assert campaign.state.sload(campaign.address, 7) == 1


def test_initial_state_value_defaults_to_the_contract():
    from evmfuzz.evm.state import ATTACKER_1

    config = CampaignConfig(initial_state=({"from": ATTACKER_1, "value": 5},))
    campaign = Campaign(EMPTY_ABI, PRIVILEGED_SETTER, config=config)
    assert campaign.state.balance_of(campaign.address) == 5


def test_initial_state_is_echoed_in_the_report_config():
    txs = ({"from": f"{PRIVILEGED:#x}", "value": 0, "data": "0x"},)
    report = run_campaign(
        EMPTY_ABI,
        PRIVILEGED_SETTER,
        config=quick_config(generations=0, initial_state=txs),
    )
    assert report["config"]["initial_state"] == [dict(txs[0])]


# ---------------------------------------------------------------------------
# process accounting: toggles must actually disable the subsystem


def test_disabled_solver_never_probes_or_spawns(monkeypatch):
    import evmfuzz.analysis.solver as solver_mod

    calls = []
    monkeypatch.setattr(
        solver_mod.shutil, "which", lambda *a, **k: calls.append(("which", a)) or None
    )
    monkeypatch.setattr(
        solver_mod.subprocess,
        "run",
        lambda *a, **k: calls.append(("run", a)) or None,
    )
    report = run_campaign(
        MAGIC_ABI, MAGIC_GUARD, config=quick_config(solver_enabled=False)
    )
    assert calls == []
    assert report["solver"]["attempts"] == 0


def test_explicit_solver_argv_reaches_the_subprocess(monkeypatch, tmp_path):
    import evmfuzz.analysis.solver as solver_mod

    spawned = []

    def fake_run(argv, **kwargs):
        spawned.append(list(argv))
        raise FileNotFoundError(argv[0])

    monkeypatch.setattr(solver_mod.subprocess, "run", fake_run)
    report = run_campaign(
        MAGIC_ABI,
        MAGIC_GUARD,
        config=quick_config(solver_argv=("/opt/fake-smt", "-in")),
    )
    assert spawned and spawned[0][0] == "/opt/fake-smt"
    # the external route failing must not kill the run; the fallback still
    # gets to answer
    assert report["solver"]["attempts"] > 0
