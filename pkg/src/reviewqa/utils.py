"""Small shared helpers: seed derivation and canonical JSON."""

import hashlib
import json


def derive_seed(master: int, name: str) -> int:
    """Derive a stable named sub-seed from the master seed.

    Decouples pipeline stages: consuming extra randomness in one stage
    never shifts the stream seen by another.
    """
    digest = hashlib.sha256(f"{master}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def canonical_json(obj) -> str:
    """Serialize with sorted keys and fixed separators (byte-stable across runs)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
