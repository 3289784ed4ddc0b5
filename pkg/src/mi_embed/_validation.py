"""Small input-validation helpers used across the package."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError


def as_float_matrix(x, name="X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatchError(f"{name} contains non-finite values")
    return arr


def as_float_vector(x, name="x", length=None) -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of fixed length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatchError(
            f"{name} has length {arr.shape[0]}, expected {length}"
        )
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatchError(f"{name} contains non-finite values")
    return arr


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return a write-protected float64 copy (for immutable value objects)."""
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


def derive_seed(*parts) -> int:
    """Deterministically derive an integer seed from a tuple of entropy parts.

    Strings are folded in via a stable digest so the result does not depend
    on interpreter hash randomization.
    """
    import hashlib

    entropy = []
    for part in parts:
        if isinstance(part, str):
            digest = hashlib.blake2s(part.encode("utf-8"), digest_size=4).digest()
            entropy.append(int.from_bytes(digest, "little"))
        else:
            entropy.append(int(part))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
