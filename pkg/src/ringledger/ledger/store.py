"""Append-only JSON-lines block log.

Line 1 is the genesis record ``{"genesis": {"profile": ..., "version": 1}}``;
every following line is one block. Loading a log replays it from genesis.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..group import Profile
from .errors import CorruptLog, ProfileMismatch
from .model import Block, Transaction, canonical_json
from .state import LedgerState, replay

LOG_VERSION = 1


def genesis_line(profile: Profile | str) -> str:
    return canonical_json({"genesis": {"profile": Profile(profile).value, "version": LOG_VERSION}}).decode()


def block_line(block: Block) -> str:
    return canonical_json(block.to_json()).decode()


def create(path: str | Path, profile: Profile | str) -> None:
    path = Path(path)
    if path.exists() and path.stat().st_size:
        raise FileExistsError(f"{path} already holds a ledger")
    path.write_text(genesis_line(profile) + "\n")


def read_profile(path: str | Path) -> Profile:
    with open(path) as fh:
        first = fh.readline()
    try:
        return Profile(json.loads(first)["genesis"]["profile"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptLog(f"{path}: missing genesis record") from exc


def load(path: str | Path, expect_profile: Profile | str | None = None) -> LedgerState:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise CorruptLog(f"{path}: empty log")
    profile = read_profile(path)
    if expect_profile is not None and Profile(expect_profile) is not profile:
        raise ProfileMismatch(f"ledger is {profile.value}, requested {Profile(expect_profile).value}")
    from ..group import get_group

    group = get_group(profile)
    blocks = []
    for n, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            blocks.append(Block(d["height"], d["prev"], Transaction.from_json(group, d["tx"]), d["hash"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptLog(f"{path}:{n + 1}: {exc}") from exc
    return replay(blocks, profile)


def append(path: str | Path, state: LedgerState, start_height: int) -> None:
    """Append every block of ``state`` from ``start_height`` on."""
    with open(path, "a") as fh:
        for block in state.blocks[start_height:]:
            fh.write(block_line(block) + "\n")


def dump(path: str | Path, state: LedgerState) -> None:
    Path(path).write_text(
        genesis_line(state.profile) + "\n" + "".join(block_line(b) + "\n" for b in state.blocks)
    )
