"""Transaction builders: the wallet-side half of each protocol flow.

Builders read the ledger, pick decoys, derive keys and sign. They never
mutate state; the ``mobius_*`` helpers build and then apply in one call.
"""

from __future__ import annotations

import random
from collections.abc import Sequence
from typing import TYPE_CHECKING

from ..group import GroupElement, KeyPair
from ..ring import TagMode, ring_sign
from ..stealth import AttackOutcome, DualKeyStealthAddress, dualkey_onetime, mobius_ckd_next
from . import errors as E
from .model import OutputSpec, Policy, PolicyHint, Transaction, TxKind, Utxo
from .state import LedgerState, Receipt

if TYPE_CHECKING:
    from ..wallet import Identity


def decoy_select(
    state: LedgerState,
    denomination: int,
    n: int,
    rng: random.Random,
    exclude: Sequence[str] = (),
) -> list[Utxo]:
    """``n`` distinct outputs of ``denomination``, uniform without replacement."""
    if n < 0:
        raise ValueError("decoy count must be non-negative")
    excluded = set(exclude)
    pool = [u for u in state.outputs_of_denomination(denomination) if u.id not in excluded]
    if len(pool) < n:
        raise E.InsufficientDecoys(f"wanted {n} decoys of denomination {denomination}, pool has {len(pool)}")
    return rng.sample(pool, n)


def stealth_output(
    addr: DualKeyStealthAddress,
    denomination: int,
    rng: random.Random,
    sender_key: KeyPair | None = None,
) -> OutputSpec:
    out, _ = dualkey_onetime(addr, rng, sender_key=sender_key)
    return OutputSpec(out.output_public, out.nonce_public, denomination)


def _signed_spend(
    state: LedgerState,
    unsigned: Transaction,
    real: Utxo,
    secret: int,
    rng: random.Random,
) -> Transaction:
    ring, _ = state.ring_for(unsigned.ring_utxo_ids)
    index = list(unsigned.ring_utxo_ids).index(real.id)
    sig = ring_sign(unsigned.digest(), ring, index, secret, TagMode.PER_KEY, rng)
    return unsigned.with_signature(sig)


def _input_ring(
    state: LedgerState, real: Utxo, decoy_count: int, rng: random.Random
) -> tuple[str, ...]:
    decoys = decoy_select(state, real.denomination, decoy_count, rng, exclude=[real.id])
    members = [real, *decoys]
    # canonical order: the position of the real input carries no information
    members.sort(key=lambda u: u.output_public.encode())
    return tuple(u.id for u in members)


def cn_build_transfer(
    sender: Identity,
    recipient: DualKeyStealthAddress,
    spend_utxo: str,
    decoy_count: int,
    state: LedgerState,
    rng: random.Random,
    sender_key: KeyPair | None = None,
) -> Transaction:
    """Sender-hiding transfer of one whole output to a dual-key address.

    ``sender_key`` publishes a permanent sender key as ``R`` instead of a
    fresh nonce.
    """
    real = state.utxos.get(spend_utxo)
    if real is None:
        raise E.UnknownRingMember(spend_utxo)
    secret = sender.secret_for(real)
    ring_ids = _input_ring(state, real, decoy_count, rng)
    out = stealth_output(recipient, real.denomination, rng, sender_key)
    unsigned = Transaction(TxKind.CN_TRANSFER, ring_utxo_ids=ring_ids, outputs=(out,))
    return _signed_spend(state, unsigned, real, secret, rng)


def build_mint(outputs: Sequence[OutputSpec]) -> Transaction:
    return Transaction(TxKind.MINT, outputs=tuple(outputs))


def build_tumbler_new(
    contract_id: str, denomination: int, ring_size: int, policy: Policy | str, noncanonical: bool = False
) -> Transaction:
    return Transaction(
        TxKind.TUMBLER_NEW,
        contract_id=contract_id,
        denomination=denomination,
        ring_size=ring_size,
        policy=Policy(policy),
        noncanonical=noncanonical,
    )


def build_deposit(
    state: LedgerState,
    contract_id: str,
    derived_public: GroupElement,
    sender: Identity,
    spend_utxo: str,
    rng: random.Random,
    decoy_count: int = 0,
) -> Transaction:
    """Move one output into tumbler custody under the key ``derived_public``.

    The refund destination is a fresh stealth output back to the sender.
    """
    contract = state.contract(contract_id)
    real = state.utxos.get(spend_utxo)
    if real is None:
        raise E.UnknownRingMember(spend_utxo)
    secret = sender.secret_for(real)
    ring_ids = _input_ring(state, real, decoy_count, rng)
    refund = stealth_output(sender.address, contract.denomination, rng)
    unsigned = Transaction(
        TxKind.TUMBLER_DEPOSIT,
        contract_id=contract_id,
        ring_utxo_ids=ring_ids,
        deposit_public=derived_public,
        outputs=(refund,),
    )
    return _signed_spend(state, unsigned, real, secret, rng)


def mobius_deposit_key(sender: Identity, recipient: DualKeyStealthAddress, counter: int) -> GroupElement:
    shared = sender.mobius_shared(recipient.spend_public)
    return mobius_ckd_next(recipient.spend_public, shared, counter)


def mobius_deposit(
    state: LedgerState,
    contract_id: str,
    derived_public: GroupElement,
    sender: Identity,
    spend_utxo: str,
    rng: random.Random,
    decoy_count: int = 0,
) -> Receipt:
    tx = build_deposit(state, contract_id, derived_public, sender, spend_utxo, rng, decoy_count)
    return state.apply(tx)


def build_withdraw(
    state: LedgerState,
    contract_id: str,
    recipient_secret: int,
    destination: OutputSpec,
    rng: random.Random,
    policy_hint: PolicyHint | str | None = None,
    ring_order: Sequence[int] | None = None,
    ticket: int | None = None,
) -> Transaction:
    """Sign a withdrawal over the contract's full deposit list (per-ring image)."""
    contract = state.contract(contract_id)
    public = state.group.base_mul(recipient_secret)
    if public not in contract.deposits:
        raise E.NotADepositor(f"key is not among the deposits of {contract_id}")
    unsigned = Transaction(
        TxKind.TUMBLER_WITHDRAW,
        contract_id=contract_id,
        outputs=(destination,),
        policy_hint=PolicyHint(policy_hint) if policy_hint is not None else None,
        ring_order=tuple(ring_order) if ring_order is not None else None,
        ticket=ticket,
    )
    ring = contract.withdrawal_ring(unsigned.ring_order)
    index = ring.members.index(public)
    sig = ring_sign(unsigned.digest(), ring, index, recipient_secret, TagMode.PER_RING, rng)
    return unsigned.with_signature(sig)


def mobius_withdraw(
    state: LedgerState,
    contract_id: str,
    recipient_secret: int,
    rng: random.Random,
    destination: OutputSpec | None = None,
    policy_hint: PolicyHint | str | None = None,
    ring_order: Sequence[int] | None = None,
    ticket: int | None = None,
) -> Receipt:
    """Withdraw from a tumbler; raises the contract's rejection, if any.

    Without an explicit ``destination`` the payout goes to a fresh random key
    (fine for simulations that do not spend the result).
    """
    contract = state.contract(contract_id)
    if destination is None:
        destination = OutputSpec(
            state.group.keygen(rng).public, state.group.keygen(rng).public, contract.denomination
        )
    tx = build_withdraw(state, contract_id, recipient_secret, destination, rng, policy_hint, ring_order, ticket)
    return state.apply(tx)


def build_refund(contract_id: str) -> Transaction:
    return Transaction(TxKind.TUMBLER_REFUND, contract_id=contract_id)


def attack_demo_permuted_ring(
    state: LedgerState,
    contract_id: str,
    recipient_secret: int,
    rng: random.Random,
    policy_hint: PolicyHint | str | None = None,
) -> tuple[AttackOutcome, list[str]]:
    """Withdraw twice with the same key, listing the deposits in two orders.

    On a contract that hashes the ring in listed order the two key images
    differ and both withdrawals pass. On a canonical contract the second is
    rejected as a double withdrawal. Returns the outcome and a transcript.
    """
    contract = state.contract(contract_id)
    n = len(contract.deposits)
    orders = [list(range(n)), list(reversed(range(n)))]
    transcript = []
    accepted = 0
    for attempt, order in enumerate(orders, start=1):
        try:
            receipt = mobius_withdraw(
                state, contract_id, recipient_secret, rng, policy_hint=policy_hint, ring_order=order
            )
        except E.DoubleWithdraw as exc:
            transcript.append(f"withdrawal {attempt} order={order}: REJECTED {exc.code} ({exc.message})")
            continue
        accepted += 1
        transcript.append(
            f"withdrawal {attempt} order={order}: ACCEPTED key_image={receipt.key_image}"
        )
    outcome = AttackOutcome.SUCCEEDED if accepted == 2 else AttackOutcome.BLOCKED
    transcript.append(outcome.value)
    return outcome, transcript
