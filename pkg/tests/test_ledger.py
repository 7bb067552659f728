import random
from collections import Counter

import pytest

from scenario_gen import random_run
from ringledger.group import Profile
from ringledger.ledger import build, store
from ringledger.ledger import errors as E
from ringledger.ledger.model import OutputSpec, Policy, Transaction, TxKind
from ringledger.ledger.state import LedgerState, Status, replay
from ringledger.ring import RingSignature
from ringledger.stealth import AttackOutcome
from ringledger.wallet import Identity


def tamper(tx: Transaction, q: int) -> Transaction:
    sig = tx.signature
    responses = list(sig.responses)
    responses[-1] = (responses[-1] + 1) % q
    return tx.with_signature(RingSignature(sig.key_image, sig.seed_challenge, tuple(responses)))


@pytest.fixture
def world():
    rng = random.Random(42)
    state = LedgerState(Profile.TOY_LARGE)
    g = state.group
    people = {n: Identity.generate(n, g, rng) for n in ("alice", "bob", "carol", "dave", "erin")}
    outs = [build.stealth_output(people["alice"].address, 10, rng) for _ in range(6)]
    outs += [build.stealth_output(people["bob"].address, 10, rng) for _ in range(6)]
    outs += [build.stealth_output(people["carol"].address, 20, rng) for _ in range(2)]
    state.apply(build.build_mint(outs))
    return state, people, rng


def unspent(state, ident, denomination=10):
    return [u for u in ident.unspent_outputs(state) if u.denomination == denomination]


class TestTransfers:
    def test_ring_of_one(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 0, state, rng)
        assert len(tx.ring_utxo_ids) == 1
        state.apply(tx)

    def test_ring_of_eleven(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 10, state, rng)
        assert len(tx.ring_utxo_ids) == 11
        receipt = state.apply(tx)
        assert receipt.key_image and state.conserved()

    def test_ring_is_sorted_by_output_key(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 5, state, rng)
        keys = [state.utxos[i].output_public.encode() for i in tx.ring_utxo_ids]
        assert keys == sorted(keys)

    def test_double_spend_same_tx(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 3, state, rng)
        state.apply(tx)
        with pytest.raises(E.DoubleSpend):
            state.apply(tx)

    def test_double_spend_different_rings(self, world):
        state, p, rng = world
        real = unspent(state, p["alice"])[0].id
        first = build.cn_build_transfer(p["alice"], p["bob"].address, real, 2, state, rng)
        second = build.cn_build_transfer(p["alice"], p["carol"].address, real, 4, state, rng)
        assert set(first.ring_utxo_ids) != set(second.ring_utxo_ids)
        state.apply(first)
        with pytest.raises(E.DoubleSpend):
            state.apply(second)

    def test_invalid_signature_leaves_registry(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 3, state, rng)
        before = (state.registry_sizes(), state.link_calls, state.state_hash())
        with pytest.raises(E.InvalidSignature):
            state.apply(tamper(tx, state.group.q))
        assert (state.registry_sizes(), state.link_calls, state.state_hash()) == before
        state.apply(tx)  # the image was never registered

    def test_missing_signature(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 1, state, rng)
        with pytest.raises(E.InvalidSignature):
            state.apply(Transaction(TxKind.CN_TRANSFER, tx.ring_utxo_ids, None, tx.outputs))

    def test_settled_output_spendable_immediately(self, world):
        state, p, rng = world
        state.apply(build.cn_build_transfer(p["alice"], p["dave"].address, unspent(state, p["alice"])[0].id, 2, state, rng))
        [received] = p["dave"].unspent_outputs(state)
        state.apply(build.cn_build_transfer(p["dave"], p["erin"].address, received.id, 2, state, rng))
        assert len(p["erin"].unspent_outputs(state)) == 1 and not p["dave"].unspent_outputs(state)

    def test_insufficient_decoys(self, world):
        state, p, rng = world
        with pytest.raises(E.InsufficientDecoys):
            build.cn_build_transfer(p["carol"], p["bob"].address, unspent(state, p["carol"], 20)[0].id, 2, state, rng)

    def test_unknown_ring_member(self, world):
        state, p, rng = world
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 1, state, rng)
        bogus = Transaction(TxKind.CN_TRANSFER, tx.ring_utxo_ids + ("00" * 32,), tx.signature, tx.outputs)
        with pytest.raises(E.UnknownRingMember):
            state.apply(bogus)

    def test_mixed_denominations(self, world):
        state, p, rng = world
        ids = (unspent(state, p["alice"])[0].id, unspent(state, p["carol"], 20)[0].id)
        tx = Transaction(TxKind.CN_TRANSFER, ids, None, (build.stealth_output(p["bob"].address, 10, rng),))
        with pytest.raises(E.DenominationMismatch):
            state.apply(tx)

    def test_outputs_must_sum(self, world):
        state, p, rng = world
        real = unspent(state, p["alice"])[0]
        tx = build.cn_build_transfer(p["alice"], p["bob"].address, real.id, 1, state, rng)
        bad = Transaction(TxKind.CN_TRANSFER, tx.ring_utxo_ids, tx.signature,
                          (OutputSpec(tx.outputs[0].output_public, tx.outputs[0].nonce_public, 11),))
        with pytest.raises(E.InvalidTransaction):
            state.apply(bad)

    def test_stealth_addresses_never_on_ledger(self, world, tmp_path):
        state, p, rng = world
        state.apply(build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 3, state, rng))
        path = tmp_path / "ledger.jsonl"
        store.dump(path, state)
        text = path.read_text()
        for ident in p.values():
            assert ident.scan.public.hex() not in text
            assert ident.spend.public.hex() not in text


class TestDecoySelection:
    def test_zero(self, world):
        state, _, rng = world
        assert build.decoy_select(state, 10, 0, rng) == []

    def test_whole_pool(self, world):
        state, _, rng = world
        pool = state.outputs_of_denomination(10)
        exclude = pool[0].id
        chosen = build.decoy_select(state, 10, len(pool) - 1, rng, exclude=[exclude])
        assert {u.id for u in chosen} == {u.id for u in pool[1:]}

    def test_uniform_chi_square(self, world):
        state, _, _ = world
        rng = random.Random(123)
        pool = state.outputs_of_denomination(10)
        exclude = pool[0].id
        counts = Counter()
        draws = 10_000
        for _ in range(draws):
            counts.update(u.id for u in build.decoy_select(state, 10, 3, rng, exclude=[exclude]))
        assert exclude not in counts
        expected = draws * 3 / (len(pool) - 1)
        chi2 = sum((counts[u.id] - expected) ** 2 / expected for u in pool[1:])
        # df = 10, critical value at p = 0.001 is 29.59
        assert chi2 < 29.59

    def test_negative(self, world):
        state, _, rng = world
        with pytest.raises(ValueError):
            build.decoy_select(state, 10, -1, rng)


def fill_contract(state, sender, recipients, rng, contract_id="T", ring_size=None, policy=Policy.PROCESS_ANYWAY,
                  noncanonical=False, new=True):
    if new:
        state.apply(build.build_tumbler_new(contract_id, 10, ring_size or len(recipients), policy, noncanonical))
    secrets = []
    counters = Counter()
    for r in recipients:
        key = build.mobius_deposit_key(sender, r.address, counters[r.name])
        counters[r.name] += 1
        build.mobius_deposit(state, contract_id, key, sender, unspent(state, sender)[0].id, rng)
        secrets.append(dict(r.find_deposits(state.contract(contract_id), [sender.spend.public]))[
            state.contract(contract_id).deposits.index(key)
        ])
    return secrets


class TestTumbler:
    def test_four_deposits_four_withdrawals(self, world):
        state, p, rng = world
        rec = [p["bob"], p["carol"], p["dave"], p["erin"]]
        secrets = fill_contract(state, p["alice"], rec, rng)
        for s in secrets:
            assert build.mobius_withdraw(state, "T", s, rng).status is Status.APPLIED
        for s in secrets:
            with pytest.raises(E.DoubleWithdraw):
                build.mobius_withdraw(state, "T", s, rng)
        c = state.contract("T")
        assert c.withdrawn == 4 == len(c.deposits) and c.custody == 0 and state.conserved()

    def test_first_deposit(self, world):
        state, p, rng = world
        fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3)
        assert len(state.contract("T").deposits) == 1

    def test_duplicate_deposit_key(self, world):
        state, p, rng = world
        fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3)
        key = state.contract("T").deposits[0]
        with pytest.raises(E.DuplicateDepositKey):
            build.mobius_deposit(state, "T", key, p["alice"], unspent(state, p["alice"])[0].id, rng)

    def test_unknown_contract(self, world):
        state, p, rng = world
        with pytest.raises(E.UnknownContract):
            build.mobius_deposit(state, "nope", state.group.g, p["alice"], unspent(state, p["alice"])[0].id, rng)

    def test_deposit_denomination_enforced(self, world):
        state, p, rng = world
        state.apply(build.build_tumbler_new("T", 10, 2, "refuse"))
        with pytest.raises(E.DenominationMismatch):
            build.mobius_deposit(state, "T", state.group.g, p["carol"], unspent(state, p["carol"], 20)[0].id, rng)

    def test_not_a_depositor(self, world):
        state, p, rng = world
        fill_contract(state, p["alice"], [p["bob"]], rng)
        with pytest.raises(E.NotADepositor):
            build.mobius_withdraw(state, "T", 12345, rng)

    def test_refuse_when_depleted(self, world):
        state, p, rng = world
        [s] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3, policy=Policy.REFUSE)
        with pytest.raises(E.DepletedRefused) as exc:
            build.mobius_withdraw(state, "T", s, rng)
        assert "refund available" in str(exc.value)
        before = state.circulating()
        receipt = state.apply(build.build_refund("T"))
        assert len(receipt.created) == 1 and state.circulating() == before + 10
        assert p["alice"].owns(state.utxos[receipt.created[0]])
        with pytest.raises(E.ContractClosed):
            build.mobius_withdraw(state, "T", s, rng)

    def test_process_anyway_with_small_ring(self, world):
        state, p, rng = world
        [s] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3, policy=Policy.PROCESS_ANYWAY)
        receipt = build.mobius_withdraw(state, "T", s, rng)
        assert receipt.status is Status.APPLIED
        # one executed withdrawal seals the deposit list
        with pytest.raises(E.ContractSealed):
            fill_contract(state, p["alice"], [p["carol"]], rng, new=False)
        with pytest.raises(E.InvalidTransaction):
            state.apply(build.build_refund("T"))

    def test_delay_then_release(self, world):
        state, p, rng = world
        [s_bob] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=2, policy=Policy.DELAY)
        dest = build.stealth_output(p["bob"].address, 10, rng)
        queued = build.mobius_withdraw(state, "T", s_bob, rng, destination=dest)
        assert queued.status is Status.QUEUED and queued.ticket == 0 and not queued.created
        with pytest.raises(E.DoubleWithdraw):
            build.mobius_withdraw(state, "T", s_bob, rng, destination=dest)
        [s_carol] = fill_contract(state, p["alice"], [p["carol"]], rng, new=False)
        released = build.mobius_withdraw(state, "T", s_bob, rng, destination=dest, ticket=0)
        assert released.status is Status.APPLIED and released.ticket == 0
        assert p["bob"].owns(state.utxos[released.created[0]])
        with pytest.raises(E.DoubleWithdraw):
            build.mobius_withdraw(state, "T", s_bob, rng)
        build.mobius_withdraw(state, "T", s_carol, rng)
        assert state.contract("T").withdrawn == 2 and state.conserved()

    def test_ticket_destination_must_match(self, world):
        state, p, rng = world
        [s_bob] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=2, policy=Policy.DELAY)
        build.mobius_withdraw(state, "T", s_bob, rng)
        fill_contract(state, p["alice"], [p["carol"]], rng, new=False)
        with pytest.raises(E.InvalidTransaction):
            build.mobius_withdraw(state, "T", s_bob, rng, ticket=0)

    @pytest.mark.parametrize("hint,outcome", [("process", "applied"), ("fail", "refused"), ("delay", "queued")])
    def test_per_tx_hint(self, world, hint, outcome):
        state, p, rng = world
        [s] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3, policy=Policy.PER_TX)
        if outcome == "refused":
            with pytest.raises(E.DepletedRefused):
                build.mobius_withdraw(state, "T", s, rng, policy_hint=hint)
        else:
            assert build.mobius_withdraw(state, "T", s, rng, policy_hint=hint).status.value == outcome

    def test_per_tx_requires_hint(self, world):
        state, p, rng = world
        [s] = fill_contract(state, p["alice"], [p["bob"]], rng, ring_size=3, policy=Policy.PER_TX)
        with pytest.raises(E.InvalidTransaction):
            build.mobius_withdraw(state, "T", s, rng)

    def test_same_key_two_contracts(self, world):
        state, p, rng = world
        s1 = fill_contract(state, p["alice"], [p["bob"], p["carol"]], rng, contract_id="A")
        s2 = fill_contract(state, p["bob"], [p["carol"], p["dave"]], rng, contract_id="B")
        # carol deposits the same key into both contracts by reusing it
        key = state.contract("A").deposits[1]
        state.apply(build.build_tumbler_new("C", 10, 2, Policy.PROCESS_ANYWAY))
        build.mobius_deposit(state, "C", key, p["alice"], unspent(state, p["alice"])[0].id, rng)
        build.mobius_deposit(state, "C", build.mobius_deposit_key(p["alice"], p["erin"].address, 0), p["alice"],
                             unspent(state, p["alice"])[0].id, rng)
        r1 = build.mobius_withdraw(state, "A", s1[1], rng)
        r2 = build.mobius_withdraw(state, "C", s1[1], rng)
        assert r1.key_image != r2.key_image
        assert r1.status is r2.status is Status.APPLIED
        assert s2  # the second contract is untouched

    def test_invalid_withdraw_signature_leaves_registry(self, world):
        state, p, rng = world
        secrets = fill_contract(state, p["alice"], [p["bob"], p["carol"]], rng)
        dest = build.stealth_output(p["bob"].address, 10, rng)
        tx = build.build_withdraw(state, "T", secrets[0], dest, rng)
        before = (state.registry_sizes(), state.link_calls)
        with pytest.raises(E.InvalidSignature):
            state.apply(tamper(tx, state.group.q))
        assert (state.registry_sizes(), state.link_calls) == before

    def test_ring_order_must_be_permutation(self, world):
        state, p, rng = world
        secrets = fill_contract(state, p["alice"], [p["bob"], p["carol"]], rng, noncanonical=True)
        with pytest.raises(E.InvalidTransaction):
            build.mobius_withdraw(state, "T", secrets[0], rng, ring_order=[0, 0])


class TestPermutedRing:
    def test_noncanonical_attack_succeeds(self, world):
        state, p, rng = world
        secrets = fill_contract(state, p["alice"], [p["bob"], p["carol"], p["dave"]], rng, noncanonical=True)
        outcome, transcript = build.attack_demo_permuted_ring(state, "T", secrets[0], rng)
        assert outcome is AttackOutcome.SUCCEEDED
        assert sum("ACCEPTED" in line for line in transcript) == 2
        assert state.conserved()

    def test_canonical_attack_blocked(self, world):
        state, p, rng = world
        secrets = fill_contract(state, p["alice"], [p["bob"], p["carol"], p["dave"]], rng)
        outcome, transcript = build.attack_demo_permuted_ring(state, "T", secrets[0], rng)
        assert outcome is AttackOutcome.BLOCKED
        assert "E_DOUBLE_WITHDRAW" in transcript[1]

    def test_single_deposit_cannot_be_permuted(self, world):
        state, p, rng = world
        secrets = fill_contract(state, p["alice"], [p["bob"]], rng, noncanonical=True)
        outcome, _ = build.attack_demo_permuted_ring(state, "T", secrets[0], rng)
        assert outcome is AttackOutcome.BLOCKED


class TestReplay:
    def test_empty_log_is_genesis(self):
        state = replay([], Profile.TOY_LARGE)
        assert state.height == 0 and state.state_hash() == LedgerState(Profile.TOY_LARGE).state_hash()

    def test_truncated_log_is_prefix(self):
        run = random_run(7)
        state = run.state
        k = state.height // 2
        prefix = replay(state.blocks[:k], state.profile)
        assert prefix.height == k and prefix.head_hash == state.blocks[k - 1].hash

    @pytest.mark.parametrize("seed", range(100))
    def test_random_scenario_replays(self, seed):
        run = random_run(seed)
        assert replay(run.state.blocks, run.state.profile).state_hash() == run.state.state_hash()

    def test_store_round_trip(self, tmp_path):
        run = random_run(3)
        path = tmp_path / "l.jsonl"
        store.dump(path, run.state)
        loaded = store.load(path)
        assert loaded.state_hash() == run.state.state_hash()
        store.dump(tmp_path / "again.jsonl", loaded)
        assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()

    def test_profile_mismatch(self, tmp_path):
        path = tmp_path / "l.jsonl"
        store.create(path, Profile.TOY_LARGE)
        with pytest.raises(E.ProfileMismatch):
            store.load(path, Profile.FULL)

    def test_tampered_block_detected(self, tmp_path):
        run = random_run(4)
        path = tmp_path / "l.jsonl"
        store.dump(path, run.state)
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace('"height":1', '"height":7')
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(E.CorruptLog):
            store.load(path)

    def test_snapshot_is_independent(self, world):
        state, p, rng = world
        snap = state.snapshot()
        state.apply(build.cn_build_transfer(p["alice"], p["bob"].address, unspent(state, p["alice"])[0].id, 1, state, rng))
        assert snap.height == state.height - 1

    def test_full_profile_flow(self):
        rng = random.Random(8)
        state = LedgerState(Profile.FULL)
        a, b, c = (Identity.generate(n, state.group, rng) for n in "abc")
        state.apply(build.build_mint([build.stealth_output(a.address, 10, rng) for _ in range(4)]))
        state.apply(build.cn_build_transfer(a, b.address, unspent(state, a)[0].id, 2, state, rng))
        secrets = fill_contract(state, a, [b, c], rng)
        for s in secrets:
            build.mobius_withdraw(state, "T", s, rng)
        assert state.conserved()
        assert replay(state.blocks, Profile.FULL).state_hash() == state.state_hash()
