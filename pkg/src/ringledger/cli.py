"""``ringledger`` command-line front end.

Exit codes: 0 success, 1 domain rejection, 2 usage error. Rejections print
``<CODE> <message>`` on stderr, e.g. ``E_DOUBLE_WITHDRAW double withdraw: ...``.

With ``--seed`` every random draw comes from a generator seeded by the seed,
the command words and the current ledger height, so a seeded command run
against the same ledger always produces the same bytes.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import io
import json
import random
import sys
import tempfile
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from . import analysis
from .group import Group, Profile, get_group
from .keyderive import DerivedZeroError, MasterKeyPair, Method, derive_chain, derive_public_chain
from .ledger import build, store
from .ledger import errors as E
from .ledger.model import OutputSpec, Policy, PolicyHint
from .ledger.state import LedgerState, Status
from .ring import Ring, RingError, TagMode, key_image
from .stealth import (
    AddressFileError,
    AttackOutcome,
    DualKeyStealthAddress,
    SenderView,
    basic_output,
    demo_sender_spend,
    dualkey_onetime,
    dualkey_scan,
    format_address_file,
    improved_onetime,
    parse_address_file,
    sign_address,
)
from .wallet import BANNER, Identity, Wallet

GLOBAL_FLAGS = ("--profile", "--seed", "--ledger", "--wallet")
# flags whose values never feed the seed: where files go must not change keys
UNSEEDED_FLAGS = GLOBAL_FLAGS + ("--out",)
DEFAULT_DENOMINATION = 10


class CliError(Exception):
    """Bad invocation: unknown name, missing file, conflicting flags."""

    code = "E_USAGE"


def short(hex_id: str) -> str:
    return hex_id[:16]


# -- context -----------------------------------------------------------------


class Context:
    def __init__(
        self,
        args: argparse.Namespace,
        argv: Sequence[str],
        rng: random.Random | None = None,
        out: Callable[[str], None] = print,
    ) -> None:
        self.args = args
        self.argv = list(argv)
        self.json = getattr(args, "json", False)
        self.ledger_path = Path(getattr(args, "ledger", None) or "ledger.jsonl")
        self.wallet_path = Path(getattr(args, "wallet", None) or "wallet.txt")
        self._out = out
        self._rng = rng
        self._state: LedgerState | None = None
        self._wallet: Wallet | None = None
        self._start_height = 0
        self.wallet_dirty = False

    # profile: explicit flag, else the ledger's, else the wallet's
    @property
    def profile(self) -> Profile:
        flag = getattr(self.args, "profile", None)
        found = None
        if self.ledger_path.exists():
            found = store.read_profile(self.ledger_path)
        elif self.wallet_path.exists():
            found = Wallet.load(self.wallet_path).profile
        if flag is not None:
            if found is not None and Profile(flag) is not found:
                raise E.ProfileMismatch(f"existing files use {found.value}, --profile says {flag}")
            return Profile(flag)
        return found or Profile.TOY_LARGE

    @property
    def group(self) -> Group:
        return get_group(self.profile)

    @property
    def standalone_profile(self) -> Profile:
        """Profile for commands that never touch the ledger or wallet files."""
        return Profile(getattr(self.args, "profile", None) or Profile.TOY_LARGE)

    @property
    def state(self) -> LedgerState:
        if self._state is None:
            if self.ledger_path.exists():
                self._state = store.load(self.ledger_path, self.profile)
            else:
                self._state = LedgerState(self.profile)
            self._start_height = self._state.height
        return self._state

    @property
    def wallet(self) -> Wallet:
        if self._wallet is None:
            if not self.wallet_path.exists():
                raise CliError(f"no wallet at {self.wallet_path}; run keygen first")
            self._wallet = Wallet.load(self.wallet_path)
            if self._wallet.profile is not self.profile:
                raise E.ProfileMismatch(
                    f"wallet is {self._wallet.profile.value}, ledger is {self.profile.value}"
                )
        return self._wallet

    def wallet_or_new(self) -> Wallet:
        if self._wallet is None and not self.wallet_path.exists():
            self._wallet = Wallet(self.profile)
        return self.wallet

    @property
    def rng(self) -> random.Random:
        if self._rng is None:
            seed = getattr(self.args, "seed", None)
            if seed is None:
                self._rng = random.SystemRandom()
            else:
                words = " ".join(command_words(self.argv))
                material = f"{seed}|{words}|{self.ledger_height()}".encode()
                self._rng = random.Random(int.from_bytes(hashlib.sha256(material).digest(), "big"))
        return self._rng

    def ledger_height(self) -> int:
        if self._state is not None:
            return self._state.height
        if not self.ledger_path.exists():
            return 0
        with open(self.ledger_path) as fh:
            return max(0, sum(1 for line in fh if line.strip()) - 1)

    def identity(self, name: str) -> Identity:
        try:
            return self.wallet.identity(name)
        except KeyError as exc:
            raise CliError(exc.args[0]) from None

    def address(self, name: str) -> DualKeyStealthAddress:
        try:
            return self.wallet.address_of(name)
        except KeyError as exc:
            raise CliError(exc.args[0]) from None

    def emit(self, text: str, data: dict[str, Any] | None = None) -> None:
        if self.json:
            if data is not None:
                self._out(json.dumps(data, sort_keys=True))
        else:
            self._out(text)

    def commit(self) -> None:
        if self._state is not None and self._state.height > self._start_height:
            if not self.ledger_path.exists():
                store.create(self.ledger_path, self._state.profile)
            store.append(self.ledger_path, self._state, self._start_height)
            self._start_height = self._state.height
        if self._wallet is not None and self.wallet_dirty:
            self._wallet.save(self.wallet_path)
            self.wallet_dirty = False


def command_words(argv: Sequence[str]) -> list[str]:
    """``argv`` without the global flags, which must not affect seeding."""
    words = []
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--json":
            continue
        if tok in UNSEEDED_FLAGS:
            skip = True
            continue
        if tok.split("=", 1)[0] in UNSEEDED_FLAGS:
            continue
        words.append(tok)
    return words


# -- key files ---------------------------------------------------------------


def read_key_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#") and "=" in line:
            k, _, v = line.partition("=")
            fields[k.strip()] = v.strip()
    return fields


def write_new_file(path: str, text: str) -> None:
    p = Path(path)
    if p.exists():
        raise CliError(f"{path} exists; refusing to overwrite")
    p.write_text(text)


# -- commands ----------------------------------------------------------------


def cmd_keygen(ctx: Context) -> None:
    a = ctx.args
    to_wallet = a.wallet_explicit or not a.out
    profile = ctx.profile if to_wallet else ctx.standalone_profile
    g = get_group(profile)
    ident = Identity.generate(a.name, g, ctx.rng)
    lines = {
        "profile": profile.value,
        "scan_secret": g.encode_scalar(ident.scan.secret).hex(),
        "spend_secret": g.encode_scalar(ident.spend.secret).hex(),
        "scan_public": ident.scan.public.hex(),
        "spend_public": ident.spend.public.hex(),
    }
    if to_wallet:
        wallet = ctx.wallet_or_new()
        if a.name in wallet.identities:
            raise CliError(f"identity {a.name!r} already exists in the wallet")
        wallet.identities[a.name] = ident
        ctx.wallet_dirty = True
    if a.out:
        write_new_file(a.out, BANNER + "".join(f"{k}={v}\n" for k, v in lines.items()))
    ctx.emit(
        f"{a.name}: scan_public={lines['scan_public']} spend_public={lines['spend_public']}",
        {"name": a.name, "scan_public": lines["scan_public"], "spend_public": lines["spend_public"]},
    )


def _parse_path(text: str) -> list[bytes]:
    try:
        path = [bytes.fromhex(p) for p in text.split(",")]
    except ValueError:
        raise CliError(f"derivation path must be comma-separated hex: {text!r}") from None
    if not path or any(not p for p in path):
        raise CliError("derivation path entries must be non-empty")
    return path


def cmd_derive(ctx: Context) -> None:
    a = ctx.args
    fields = read_key_file(a.master)
    profile = Profile(fields.get("profile") or ctx.standalone_profile)
    if getattr(a, "profile", None) is not None and Profile(a.profile) is not profile:
        raise E.ProfileMismatch(f"key file is {profile.value}, --profile says {a.profile}")
    g = get_group(profile)
    path = _parse_path(a.path)
    secret_hex = None if a.public_only else fields.get("secret", fields.get("spend_secret"))
    public_hex = fields.get("public", fields.get("spend_public"))
    if secret_hex is None and public_hex is None:
        raise CliError(f"{a.master} holds no key")
    data: dict[str, Any] = {"method": a.method, "path": a.path}
    if secret_hex is not None:
        master = MasterKeyPair.from_secret(g, g.decode_scalar(bytes.fromhex(secret_hex)))
        if public_hex is not None and g.decode_hex(public_hex) != master.master_public:
            raise CliError("key file public key does not match its secret")
        child = derive_chain(master, path, a.method)
        public = derive_public_chain(master.master_public, path, a.method)
        if public != child.public:
            raise AssertionError("public and private derivations disagree")
        data["secret"] = g.encode_scalar(child.secret).hex()
    else:
        public = derive_public_chain(g.decode_hex(public_hex), path, a.method)
    data["public"] = public.hex()
    ctx.emit("\n".join(f"{k}={data[k]}" for k in ("secret", "public") if k in data), data)


def cmd_stealth_export(ctx: Context) -> None:
    ident = ctx.identity(ctx.args.name)
    text = format_address_file(ident.address, sign_address(ident.address, ident.spend.secret, ctx.rng))
    if ctx.args.out:
        write_new_file(ctx.args.out, text)
    ctx.emit(text.rstrip("\n"), {"name": ident.name, "file": ctx.args.out, "address": text})


def cmd_stealth_import(ctx: Context) -> None:
    try:
        text = Path(ctx.args.file).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {ctx.args.file}: {exc.strerror}") from None
    addr = parse_address_file(ctx.group, text)
    wallet = ctx.wallet_or_new()
    wallet.contacts[ctx.args.as_name] = addr
    ctx.wallet_dirty = True
    ctx.emit(
        f"imported {ctx.args.as_name}: signature ok",
        {"name": ctx.args.as_name, "scan_public": addr.scan_public.hex(), "spend_public": addr.spend_public.hex()},
    )


def cmd_stealth_send(ctx: Context) -> None:
    a = ctx.args
    sender = ctx.identity(a.sender)
    addr = ctx.address(a.to)
    if a.scheme == "basic":
        out = basic_output(sender.spend, addr.spend_public)
    elif a.scheme == "improved":
        out, _ = improved_onetime(addr.spend_public, ctx.rng)
    else:
        key = sender.spend if a.sender_key == "permanent" else None
        out, _ = dualkey_onetime(addr, ctx.rng, sender_key=key)
    data = {"scheme": out.scheme.value, "output_public": out.output_public.hex(), "nonce_public": out.nonce_public.hex()}
    ctx.emit(f"scheme={data['scheme']} P={data['output_public']} R={data['nonce_public']}", data)


def cmd_stealth_scan(ctx: Context) -> None:
    ident = ctx.identity(ctx.args.name)
    state = ctx.state
    utxos = sorted(state.utxos.values(), key=lambda u: (u.height, u.id))
    by_key = {(u.output_public, u.nonce_public): u for u in utxos}
    # the scan predicate sees only (v, B) and the ledger
    matches = dualkey_scan(ident.scan.secret, ident.spend.public, list(by_key))
    rows = []
    for pair in matches:
        u = by_key[pair]
        status = "unknown"
        if not ctx.args.auditor:
            status = "spent" if ident.spend_image(u) in state.spent_images else "unspent"
        rows.append({"utxo": u.id, "denomination": u.denomination, "height": u.height, "status": status})
    text = [f"{ident.name}: {len(rows)} output(s) found" + (" (auditor view)" if ctx.args.auditor else "")]
    text += [f"  {short(r['utxo'])} denom={r['denomination']} height={r['height']} {r['status']}" for r in rows]
    ctx.emit("\n".join(text), {"name": ident.name, "outputs": rows})


def cmd_mint(ctx: Context) -> None:
    a = ctx.args
    addr = ctx.address(a.to)
    outs = [build.stealth_output(addr, a.denomination, ctx.rng) for _ in range(a.count)]
    receipt = ctx.state.apply(build.build_mint(outs))
    ctx.emit(
        f"height {receipt.height}: minted {a.count} x {a.denomination} to {a.to}",
        {"height": receipt.height, "tx": receipt.tx_id, "created": list(receipt.created)},
    )


def _pick_owned(ctx: Context, ident: Identity, utxo: str | None, denomination: int | None) -> str:
    if utxo is not None:
        matches = [u for u in ctx.state.utxos if u.startswith(utxo)]
        if len(matches) != 1:
            raise CliError(f"utxo prefix {utxo!r} matches {len(matches)} outputs")
        return matches[0]
    for u in ident.unspent_outputs(ctx.state):
        if denomination is None or u.denomination == denomination:
            return u.id
    raise CliError(f"{ident.name} has no unspent output" + (f" of denomination {denomination}" if denomination else ""))


def cmd_cn_transfer(ctx: Context) -> None:
    a = ctx.args
    sender = ctx.identity(a.sender)
    addr = ctx.address(a.to)
    spend = _pick_owned(ctx, sender, a.utxo, a.denomination)
    key = sender.spend if a.sender_key == "permanent" else None
    tx = build.cn_build_transfer(sender, addr, spend, a.decoys, ctx.state, ctx.rng, sender_key=key)
    receipt = ctx.state.apply(tx)
    ctx.emit(
        f"height {receipt.height}: cn-transfer {a.sender} -> {a.to} ring={len(tx.ring_utxo_ids)} "
        f"key_image={receipt.key_image}",
        {
            "height": receipt.height,
            "tx": receipt.tx_id,
            "ring": list(tx.ring_utxo_ids),
            "ring_size": len(tx.ring_utxo_ids),
            "nonce_public": tx.outputs[0].nonce_public.hex(),
            "key_image": receipt.key_image,
            "created": list(receipt.created),
        },
    )


def cmd_tumbler_new(ctx: Context) -> None:
    a = ctx.args
    tx = build.build_tumbler_new(a.id, a.denomination, a.ring_size, a.policy, noncanonical=a.noncanonical)
    receipt = ctx.state.apply(tx)
    enc = "noncanonical" if a.noncanonical else "canonical"
    ctx.emit(
        f"height {receipt.height}: tumbler {a.id} denomination={a.denomination} ring_size={a.ring_size} "
        f"policy={a.policy} encoding={enc}",
        {"height": receipt.height, "tx": receipt.tx_id, "contract": a.id},
    )


def cmd_tumbler_deposit(ctx: Context) -> None:
    a = ctx.args
    sender = ctx.identity(a.sender)
    addr = ctx.address(a.to)
    contract = ctx.state.contract(a.id)
    spend = _pick_owned(ctx, sender, a.utxo, contract.denomination)
    wallet = ctx.wallet
    counter = wallet.counters.get(f"{a.sender}->{a.to}", 0)
    derived = build.mobius_deposit_key(sender, addr, counter)
    receipt = build.mobius_deposit(ctx.state, a.id, derived, sender, spend, ctx.rng, a.decoys)
    wallet.next_counter(a.sender, a.to)
    ctx.wallet_dirty = True
    ctx.emit(
        f"height {receipt.height}: deposit {a.sender} -> {a.id} for {a.to} "
        f"({len(contract.deposits)}/{contract.ring_size_n}) key={derived.hex()}",
        {"height": receipt.height, "tx": receipt.tx_id, "deposit_public": derived.hex(), "counter": counter},
    )
    if receipt.released:
        ctx.emit(f"{a.id} reached {contract.ring_size_n} deposits; queued withdrawals can be released")
    if contract.full:
        _release_claims(ctx, a.id)


def _deposit_choice(ctx: Context, ident: Identity, contract_id: str, index: int | None, order) -> tuple[int, int]:
    contract = ctx.state.contract(contract_id)
    found = ident.find_deposits(contract, ctx.wallet.known_spend_keys())
    if not found:
        raise E.NotADepositor(f"{ident.name} owns no deposit in {contract_id}")
    if index is not None:
        for i, sk in found:
            if i == index:
                return i, sk
        raise E.NotADepositor(f"deposit {index} of {contract_id} does not belong to {ident.name}")
    claimed = {c["deposit"] for c in ctx.wallet.claims if c["contract"] == contract_id}
    ring = contract.withdrawal_ring(order)
    for i, sk in found:
        image = key_image(sk, contract.deposits[i], ring, TagMode.PER_RING)
        if i not in claimed and image not in contract.used_images and image not in contract.queued_images:
            return i, sk
    # nothing fresh left: resubmit the first and let the contract reject it
    return found[0]


def _parse_order(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise CliError(f"--order must be comma-separated integers: {text!r}") from None


def cmd_tumbler_withdraw(ctx: Context) -> None:
    a = ctx.args
    ident = ctx.identity(a.as_name)
    contract = ctx.state.contract(a.id)
    order = _parse_order(a.order)
    index, secret = _deposit_choice(ctx, ident, a.id, a.deposit, order)
    dest = build.stealth_output(ident.address, contract.denomination, ctx.rng)
    receipt = build.mobius_withdraw(
        ctx.state, a.id, secret, ctx.rng, destination=dest, policy_hint=a.hint, ring_order=order
    )
    ring_size = len(contract.deposits)
    if receipt.status is Status.QUEUED:
        ctx.wallet.claims.append(
            {"contract": a.id, "ticket": receipt.ticket, "identity": ident.name, "deposit": index, "destination": dest.to_json()}
        )
        ctx.wallet_dirty = True
        ctx.emit(
            f"height {receipt.height}: withdrawal from {a.id} QUEUED ticket={receipt.ticket} "
            f"({ring_size}/{contract.ring_size_n} deposits)",
            {"height": receipt.height, "tx": receipt.tx_id, "status": "queued", "ticket": receipt.ticket},
        )
        return
    ctx.emit(
        f"height {receipt.height}: withdrawal from {a.id} by {ident.name} ring={ring_size} "
        f"key_image={receipt.key_image}",
        {"height": receipt.height, "tx": receipt.tx_id, "status": "applied", "ring_size": ring_size,
         "key_image": receipt.key_image, "created": list(receipt.created)},
    )


def _release_claims(ctx: Context, contract_id: str) -> int:
    wallet = ctx.wallet
    contract = ctx.state.contract(contract_id)
    released = 0
    for claim in [c for c in wallet.claims if c["contract"] == contract_id]:
        ident = ctx.identity(claim["identity"])
        found = dict(ident.find_deposits(contract, wallet.known_spend_keys()))
        dest = OutputSpec.from_json(ctx.group, claim["destination"])
        receipt = build.mobius_withdraw(
            ctx.state, contract_id, found[claim["deposit"]], ctx.rng, destination=dest, ticket=claim["ticket"]
        )
        wallet.claims.remove(claim)
        ctx.wallet_dirty = True
        released += 1
        ctx.emit(
            f"height {receipt.height}: RELEASED ticket {claim['ticket']} from {contract_id} to {ident.name} "
            f"ring={len(contract.deposits)} key_image={receipt.key_image}",
            {"height": receipt.height, "tx": receipt.tx_id, "status": "released", "ticket": claim["ticket"]},
        )
    return released


def cmd_tumbler_release(ctx: Context) -> None:
    contract = ctx.state.contract(ctx.args.id)
    if contract.depleted and not contract.sealed:
        raise E.DepletedRefused(
            f"{contract.contract_id} holds {len(contract.deposits)} of {contract.ring_size_n} deposits"
        )
    if not _release_claims(ctx, ctx.args.id):
        ctx.emit(f"no queued withdrawals for {ctx.args.id} in this wallet", {"released": 0})


def cmd_tumbler_refund(ctx: Context) -> None:
    receipt = ctx.state.apply(build.build_refund(ctx.args.id))
    ctx.emit(
        f"height {receipt.height}: refunded {len(receipt.created)} deposit(s) from {ctx.args.id}; contract closed",
        {"height": receipt.height, "tx": receipt.tx_id, "created": list(receipt.created)},
    )
    if ctx.wallet_path.exists():
        # refunded contracts release nothing; drop their queued claims
        stale = [c for c in ctx.wallet.claims if c["contract"] == ctx.args.id]
        for claim in stale:
            ctx.wallet.claims.remove(claim)
        ctx.wallet_dirty = bool(stale)


def cmd_analyze(ctx: Context) -> None:
    knowledge = []
    if ctx.args.knowledge:
        try:
            doc = json.loads(Path(ctx.args.knowledge).read_text())
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read knowledge file: {exc}") from None
        knowledge = [analysis.Knowledge.from_json(d) for d in doc]
    view = analysis.ObserverView.from_ledger(ctx.state, knowledge)
    report = analysis.chain_reaction_deanon(view)
    ctx._out(json.dumps(report.to_json(), indent=None if ctx.json else 2, sort_keys=True))


def cmd_metrics(ctx: Context) -> None:
    m = analysis.storage_metrics(ctx.state)
    if ctx.json:
        ctx.emit("", m.to_json())
        return
    lines = [f"{short(t)} ring={n} signature_bytes={b}" for t, n, b in m.per_tx_bytes]
    if m.fitted is not None:
        lines.append(f"fit: bytes = {m.fitted.intercept} + {m.fitted.slope}*N residual={m.fitted.residual}")
    lines += [f"tumbler {c}: {b} withdrawal signature bytes" for c, b in sorted(m.tumbler_total_bytes.items())]
    ctx.emit("\n".join(lines) or "no signatures on the ledger")


# -- demos -------------------------------------------------------------------


def sender_spend_demo(group: Group, rng: random.Random) -> list[tuple[str, AttackOutcome]]:
    sender = group.keygen(rng)
    recipient = Identity.generate("recipient", group, rng)
    results = []
    out = basic_output(sender, recipient.spend.public)
    view = SenderView(sender.secret, recipient.spend.public)
    results.append(("basic", out, view))
    out, r = improved_onetime(recipient.spend.public, rng)
    results.append(("improved", out, SenderView(r, recipient.spend.public)))
    out, r = dualkey_onetime(recipient.address, rng)
    results.append(("dualkey", out, SenderView(r, recipient.spend.public, recipient.scan.public)))
    return [
        (name, AttackOutcome.SUCCEEDED if demo_sender_spend(o, v, rng) else AttackOutcome.BLOCKED)
        for name, o, v in results
    ]


def cmd_demo_sender_spend(ctx: Context) -> None:
    results = sender_spend_demo(get_group(ctx.standalone_profile), ctx.rng)
    ctx.emit(
        "\n".join(f"{name}: {outcome.value}" for name, outcome in results),
        {name: outcome.value for name, outcome in results},
    )


def permuted_ring_demo(profile: Profile, rng: random.Random, noncanonical: bool, deposits: int = 3) -> tuple[AttackOutcome, list[str], LedgerState]:
    state = LedgerState(profile)
    g = state.group
    alice = Identity.generate("alice", g, rng)
    recipients = [Identity.generate(f"r{i}", g, rng) for i in range(deposits)]
    state.apply(build.build_mint([build.stealth_output(alice.address, 10, rng) for _ in range(deposits)]))
    state.apply(build.build_tumbler_new("T", 10, deposits, Policy.PROCESS_ANYWAY, noncanonical=noncanonical))
    for r in recipients:
        key = build.mobius_deposit_key(alice, r.address, 0)
        build.mobius_deposit(state, "T", key, alice, alice.unspent_outputs(state)[0].id, rng)
    attacker = recipients[0]
    [(_, secret)] = attacker.find_deposits(state.contract("T"), [alice.spend.public])
    outcome, lines = build.attack_demo_permuted_ring(state, "T", secret, rng)
    enc = "noncanonical" if noncanonical else "canonical"
    head = [f"ring encoding: {enc}; {deposits} deposits; one key withdraws twice"]
    return outcome, head + lines, state


def cmd_demo_permuted_ring(ctx: Context) -> None:
    modes = {"noncanonical": [True], "canonical": [False], "both": [True, False]}[ctx.args.encoding]
    data = {}
    text = []
    for nc in modes:
        outcome, lines, state = permuted_ring_demo(ctx.standalone_profile, ctx.rng, nc)
        text += lines + [f"conservation: {state.conserved()}"]
        data["noncanonical" if nc else "canonical"] = {"outcome": outcome.value, "transcript": lines}
    ctx.emit("\n".join(text), data)


def ordering_demo(profile: Profile, rng: random.Random, count: int = 100) -> dict[str, Any]:
    """Submit ``count`` transactions with broken signatures and fresh images."""
    state = LedgerState(profile)
    g = state.group
    alice = Identity.generate("alice", g, rng)
    bob = Identity.generate("bob", g, rng)
    state.apply(build.build_mint([build.stealth_output(alice.address, 10, rng) for _ in range(4)]))
    state.apply(build.build_tumbler_new("T", 10, 2, Policy.PROCESS_ANYWAY))
    for c in range(2):
        key = build.mobius_deposit_key(alice, bob.address, c)
        build.mobius_deposit(state, "T", key, alice, alice.unspent_outputs(state)[0].id, rng)
    found = bob.find_deposits(state.contract("T"), [alice.spend.public])
    before = (state.registry_sizes(), state.link_calls, state.height)
    rejected = 0
    for i in range(count):
        if i % 2 == 0:
            tx = build.cn_build_transfer(alice, bob.address, alice.unspent_outputs(state)[0].id, 1, state, rng)
        else:
            dest = build.stealth_output(bob.address, 10, rng)
            tx = build.build_withdraw(state, "T", found[0][1], dest, rng)
        sig = tx.signature
        # tamper with one response; the key image stays valid and unused
        responses = list(sig.responses)
        responses[0] = (responses[0] + 1) % g.q
        bad = tx.with_signature(type(sig)(sig.key_image, sig.seed_challenge, tuple(responses)))
        try:
            state.apply(bad)
        except E.InvalidSignature:
            rejected += 1
    after = (state.registry_sizes(), state.link_calls, state.height)
    return {
        "submitted": count,
        "rejected": rejected,
        "registries_before": list(before[0]),
        "registries_after": list(after[0]),
        "link_calls_before": before[1],
        "link_calls_after": after[1],
        "height_before": before[2],
        "height_after": after[2],
    }


def cmd_demo_ordering(ctx: Context) -> None:
    r = ordering_demo(ctx.standalone_profile, ctx.rng, ctx.args.count)
    ok = r["registries_before"] == r["registries_after"] and r["link_calls_before"] == r["link_calls_after"]
    text = (
        f"submitted {r['submitted']} transactions with invalid signatures; rejected {r['rejected']}\n"
        f"registry sizes (global, per-contract): {tuple(r['registries_before'])} -> {tuple(r['registries_after'])}\n"
        f"registry lookups: {r['link_calls_before']} -> {r['link_calls_after']}\n"
        + ("registries untouched" if ok else "REGISTRIES CHANGED")
    )
    ctx.emit(text, r | {"untouched": ok})


# -- scenario ----------------------------------------------------------------


def run_scenario(script: str, profile: Profile, seed: int) -> list[str]:
    """Run a script of CLI lines against a fresh ledger and wallet.

    One generator seeded once drives every line, so the transcript is a pure
    function of (script, profile, seed). ``{tmp}`` in a line names the
    scenario's scratch directory, for commands that read or write files.
    """
    import shlex

    transcript = [f"# scenario profile={profile.value} seed={seed}"]
    rng = random.Random(seed)
    with tempfile.TemporaryDirectory() as tmp:
        ledger = Path(tmp) / "ledger.jsonl"
        wallet = Path(tmp) / "wallet.txt"
        live: list[LedgerState] = []
        for raw in script.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            transcript.append(f"> {line}")
            words = [w.replace("{tmp}", tmp) for w in shlex.split(line)]
            argv = ["--profile", profile.value, "--ledger", str(ledger), "--wallet", str(wallet), *words]
            out: list[str] = []
            err = io.StringIO()
            with contextlib.redirect_stderr(err):
                code = run(argv, rng=rng, out=out.append, nested=True, on_state=live.append)
            for chunk in out:
                transcript.extend(chunk.splitlines())
            for msg in err.getvalue().splitlines():
                transcript.append(f"! {msg}")
            if code:
                transcript.append(f"[exit {code}]")
        # the last in-memory state is the one built by applying transactions live
        state = live[-1] if live else LedgerState(profile)
        live_hash = state.state_hash()
        transcript.append(f"# height={state.height}")
        transcript.append(
            f"# conservation minted={state.minted} circulating={state.circulating()} "
            f"custodial={state.custodial()} ok={state.conserved()}"
        )
        replayed = store.load(ledger, profile) if ledger.exists() else LedgerState(profile)
        transcript.append(f"# state_hash={live_hash} replay_match={replayed.state_hash() == live_hash}")
    return transcript


def cmd_scenario(ctx: Context) -> None:
    try:
        script = Path(ctx.args.script).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {ctx.args.script}: {exc.strerror}") from None
    seed = ctx.args.seed if getattr(ctx.args, "seed", None) is not None else 0
    profile = Profile(getattr(ctx.args, "profile", None) or Profile.TOY_LARGE)
    ctx._out("\n".join(run_scenario(script, profile, seed)))


# -- parser ------------------------------------------------------------------


def _globals_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--profile", choices=[x.value for x in Profile], default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--ledger", default=argparse.SUPPRESS, help="block log (default ledger.jsonl)")
    p.add_argument("--wallet", default=argparse.SUPPRESS, help="wallet file (default wallet.txt)")
    p.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="machine-readable output")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _globals_parent()
    parser = argparse.ArgumentParser(prog="ringledger", parents=[common], description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(container, name: str, func, help: str) -> argparse.ArgumentParser:
        p = container.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    p = add(sub, "keygen", cmd_keygen, "generate a dual-key identity")
    p.add_argument("--name", default="default")
    p.add_argument("--out", help="also write the keys to this file")

    p = add(sub, "derive", cmd_derive, "child-key derivation from a key file")
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--path", required=True, help="hex index per level, comma separated")
    p.add_argument("--master", required=True, help="key file with secret= / public= lines")
    p.add_argument("--public-only", action="store_true", help="derive from the public key alone")

    st = add(sub, "stealth", None, "stealth address exchange and scanning").add_subparsers(dest="sub", required=True)
    p = add(st, "export", cmd_stealth_export, "write a signed address file")
    p.add_argument("--name", default="default")
    p.add_argument("--out")
    p = add(st, "import", cmd_stealth_import, "verify and store an address file")
    p.add_argument("--file", required=True)
    p.add_argument("--as", dest="as_name", required=True)
    p = add(st, "send", cmd_stealth_send, "compute a one-time output (no ledger write)")
    p.add_argument("--from", dest="sender", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--scheme", choices=["basic", "improved", "dualkey"], default="dualkey")
    p.add_argument("--sender-key", choices=["nonce", "permanent"], default="nonce")
    p = add(st, "scan", cmd_stealth_scan, "find outputs paying an identity")
    p.add_argument("--name", default="default")
    p.add_argument("--auditor", action="store_true", help="use only the scan secret and spend public key")

    p = add(sub, "mint", cmd_mint, "create new outputs (simulation faucet)")
    p.add_argument("--to", required=True)
    p.add_argument("--denomination", type=int, default=DEFAULT_DENOMINATION)
    p.add_argument("--count", type=int, default=1)

    p = add(sub, "cn-transfer", cmd_cn_transfer, "sender-hiding transfer with decoys")
    p.add_argument("--from", dest="sender", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--decoys", type=int, default=0)
    p.add_argument("--utxo", help="output id (or unique prefix) to spend")
    p.add_argument("--denomination", type=int)
    p.add_argument("--sender-key", choices=["nonce", "permanent"], default="nonce")

    tu = add(sub, "tumbler", None, "tumbler contracts").add_subparsers(dest="sub", required=True)
    p = add(tu, "new", cmd_tumbler_new, "create a contract")
    p.add_argument("--id", required=True)
    p.add_argument("--denomination", type=int, default=DEFAULT_DENOMINATION)
    p.add_argument("--ring-size", type=int, required=True)
    p.add_argument("--policy", choices=[x.value for x in Policy], default=Policy.REFUSE.value)
    p.add_argument("--noncanonical", action="store_true", help="hash the ring in listed order (demonstrates a bug)")
    p = add(tu, "deposit", cmd_tumbler_deposit, "deposit for a recipient")
    p.add_argument("--id", required=True)
    p.add_argument("--from", dest="sender", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--decoys", type=int, default=0)
    p.add_argument("--utxo")
    p = add(tu, "withdraw", cmd_tumbler_withdraw, "withdraw one deposit")
    p.add_argument("--id", required=True)
    p.add_argument("--as", dest="as_name", required=True)
    p.add_argument("--hint", choices=[h.value for h in PolicyHint])
    p.add_argument("--order", help="list the deposits in this order, e.g. 2,0,1")
    p.add_argument("--deposit", type=int, help="deposit index to withdraw")
    p = add(tu, "release", cmd_tumbler_release, "submit queued withdrawals once the threshold is met")
    p.add_argument("--id", required=True)
    p = add(tu, "refund", cmd_tumbler_refund, "return deposits of a depleted contract")
    p.add_argument("--id", required=True)

    p = add(sub, "analyze", cmd_analyze, "chain-reaction inference over the ledger")
    p.add_argument("--knowledge", help="JSON list of {utxo, status, tx?}")
    add(sub, "metrics", cmd_metrics, "signature storage metrics")

    de = add(sub, "demo", None, "attack and pitfall demonstrations").add_subparsers(dest="sub", required=True)
    add(de, "sender-spend-attack", cmd_demo_sender_spend, "who can spend a stealth output")
    p = add(de, "permuted-ring", cmd_demo_permuted_ring, "double withdrawal via ring reordering")
    p.add_argument("--encoding", choices=["noncanonical", "canonical", "both"], default="both")
    p = add(de, "ordering", cmd_demo_ordering, "invalid signatures never touch the registries")
    p.add_argument("--count", type=int, default=100)

    p = add(sub, "scenario", cmd_scenario, "run a script of commands and print a transcript")
    p.add_argument("script")
    return parser


def run(
    argv: Sequence[str] | None = None,
    rng: random.Random | None = None,
    out: Callable[[str], None] = print,
    nested: bool = False,
    on_state: Callable[[LedgerState], None] | None = None,
) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.func is None:
        parser.print_usage(sys.stderr)
        return 2
    if nested and args.command == "scenario":
        print("E_USAGE scenarios cannot nest", file=sys.stderr)
        return 2
    args.wallet_explicit = "--wallet" in argv or any(a.startswith("--wallet=") for a in argv)
    if nested:
        args.wallet_explicit = True
    ctx = Context(args, argv, rng=rng, out=out)
    try:
        try:
            args.func(ctx)
        finally:
            # report states that grew here, even if the command then failed
            if on_state is not None and ctx._state is not None and ctx._state.height > ctx._start_height:
                on_state(ctx._state)
        ctx.commit()
    except E.LedgerError as exc:
        print(f"{exc.code} {exc}", file=sys.stderr)
        ctx.commit()
        return 1
    except (AddressFileError, analysis.InconsistentKnowledgeError, DerivedZeroError, RingError) as exc:
        code = {
            AddressFileError: "E_ADDRESS_FILE",
            analysis.InconsistentKnowledgeError: "E_INCONSISTENT_KNOWLEDGE",
            DerivedZeroError: "E_DERIVED_ZERO",
        }.get(type(exc), "E_RING")
        print(f"{code} {exc}", file=sys.stderr)
        return 1
    except CliError as exc:
        print(f"{exc.code} {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
