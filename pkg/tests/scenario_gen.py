"""Random ledger workloads for property tests.

Each run drives a fresh ledger through mints, transfers and tumbler activity,
checking the ledger invariants after every step, and keeps the ground truth
(which output each spend really consumed) that the ledger itself never sees.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ringledger.group import Profile
from ringledger.ledger import build
from ringledger.ledger import errors as E
from ringledger.ledger.model import Policy, PolicyHint, TxKind
from ringledger.ledger.state import LedgerState
from ringledger.wallet import Identity


@dataclass
class Run:
    state: LedgerState
    identities: list[Identity]
    true_spend: dict[str, str] = field(default_factory=dict)  # tx id -> utxo id
    rejections: int = 0
    checks: int = 0


def check_invariants(state: LedgerState, prev: tuple[int, int] | None) -> tuple[int, int]:
    assert state.conserved(), (state.minted, state.circulating(), state.custodial())
    for c in state.contracts.values():
        assert c.withdrawn <= len(c.deposits)
        assert c.withdrawn == len(c.used_images)
    sizes = state.registry_sizes()
    if prev is not None:
        assert sizes[0] >= prev[0] and sizes[1] >= prev[1]
    return sizes


def random_run(seed: int, steps: int = 30, profile: Profile = Profile.TOY_LARGE) -> Run:
    rng = random.Random(seed)
    state = LedgerState(profile)
    g = state.group
    people = [Identity.generate(f"p{i}", g, rng) for i in range(4)]
    run = Run(state, people)
    denoms = [10, 20]
    counters: dict[tuple[str, str], int] = {}
    sizes = check_invariants(state, None)

    def attempt(fn):
        nonlocal sizes
        try:
            result = fn()
        except E.LedgerError:
            run.rejections += 1
            result = None
        sizes = check_invariants(state, sizes)
        run.checks += 1
        return result

    attempt(lambda: state.apply(build.build_mint(
        [build.stealth_output(rng.choice(people).address, rng.choice(denoms), rng) for _ in range(8)]
    )))
    for _ in range(steps):
        op = rng.random()
        who = rng.choice(people)
        if op < 0.15:
            attempt(lambda: state.apply(build.build_mint(
                [build.stealth_output(who.address, rng.choice(denoms), rng) for _ in range(rng.randint(1, 3))]
            )))
        elif op < 0.55:
            mine = who.unspent_outputs(state)
            if not mine:
                continue
            real = rng.choice(mine)
            pool = len(state.outputs_of_denomination(real.denomination)) - 1
            decoys = rng.randint(0, min(3, pool))
            to = rng.choice(people)
            tx = build.cn_build_transfer(who, to.address, real.id, decoys, state, rng)
            if attempt(lambda: state.apply(tx)) is not None:
                run.true_spend[tx.tx_id()] = real.id
        elif op < 0.65:
            cid = f"c{len(state.contracts)}"
            policy = rng.choice(list(Policy))
            attempt(lambda: state.apply(build.build_tumbler_new(cid, rng.choice(denoms), rng.randint(1, 3), policy,
                                                                noncanonical=rng.random() < 0.2)))
        elif op < 0.85 and state.contracts:
            c = state.contracts[rng.choice(sorted(state.contracts))]
            mine = [u for u in who.unspent_outputs(state) if u.denomination == c.denomination]
            if not mine:
                continue
            to = rng.choice(people)
            n = counters.get((who.name, to.name), 0)
            counters[(who.name, to.name)] = n + 1
            key = build.mobius_deposit_key(who, to.address, n)
            real = mine[0]
            tx = build.build_deposit(state, c.contract_id, key, who, real.id, rng)
            if attempt(lambda: state.apply(tx)) is not None:
                run.true_spend[tx.tx_id()] = real.id
        elif state.contracts:
            c = state.contracts[rng.choice(sorted(state.contracts))]
            if rng.random() < 0.2:
                attempt(lambda: state.apply(build.build_refund(c.contract_id)))
                continue
            senders = [p.spend.public for p in people]
            found = who.find_deposits(c, senders, limit=8)
            if not found:
                continue
            _, secret = rng.choice(found)
            hint = rng.choice(list(PolicyHint)) if c.policy is Policy.PER_TX else None
            order = None
            if c.noncanonical and rng.random() < 0.5:
                order = list(range(len(c.deposits)))
                rng.shuffle(order)
            attempt(lambda: build.mobius_withdraw(state, c.contract_id, secret, rng, policy_hint=hint, ring_order=order))
    return run


def spends_in(state: LedgerState) -> list[str]:
    return [b.tx.tx_id() for b in state.blocks if b.tx.kind in (TxKind.CN_TRANSFER, TxKind.TUMBLER_DEPOSIT)]
