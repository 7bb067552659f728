"""Stealth addresses, linkable ring signatures and a ledger simulator that uses them."""

from .group import GroupElement, KeyPair, Profile, get_group

__version__ = "0.1.0"

__all__ = ["GroupElement", "KeyPair", "Profile", "get_group", "__version__"]
