"""Pool hygiene for inputs that die on a guard.

When a transaction ends in REVERT or INVALID without touching state, the
last tainted branch it evaluated is the guard that killed it.  If that
condition pins the blame on exactly one fuzzable quantity, the pool value
that fed it gets evicted, so the mutation stage stops resampling a value
already known to bounce off the same check.  A guard over several free
quantities purges nothing: any one of them could be the wrong one, and
evicting a value that only failed because of its neighbour throws away
solver work (the exact payment for one schedule is still exact after a
mutation bends the clock).  Values that came from fresh randomness (no
pool tag on the input) are left alone — there is nothing to evict.
"""

from __future__ import annotations

from ..evm.interpreter import ExecutionTrace
from ..ga.individual import Input
from ..ga.pools import MutationPools
from .expr import variables
from .taint import FUZZABLE_KINDS, TaintReport, parse_var, pool_tag_key

GUARD_TERMINALS = ("REVERT", "INVALID")


def purge_reverting_values(
    inputs: list[Input],
    traces: list[ExecutionTrace],
    reports: list[TaintReport],
    pools: MutationPools,
) -> int:
    """Evict pool values implicated in guard-terminated inputs.

    Returns the number of evictions performed.
    """
    purged = 0
    for inp, trace, report in zip(inputs, traces, reports):
        if trace.state_delta_applied or trace.terminal not in GUARD_TERMINALS:
            continue
        constraint = report.final_constraint()
        if constraint is None:
            continue
        culprits = [
            name
            for name in sorted(variables(constraint.cond))
            if parse_var(name).kind in FUZZABLE_KINDS
        ]
        if len(culprits) != 1:
            continue  # shared blame; see the module docstring
        info = parse_var(culprits[0])
        tag = pool_tag_key(info)
        if tag is None:
            continue
        entry = inp.pool_tags.get(tag)
        if entry is None:
            continue
        pool_kind, pool_key, value = entry
        pools.purge(pool_kind, pool_key, value)
        purged += 1
    return purged
