"""Deterministic integer seed derivation (never hash()-based, so results
survive PYTHONHASHSEED randomization)."""

from __future__ import annotations

_MULT = 6364136223846793005
_INC = 1442695040888963407
_MASK = (1 << 63) - 1


def mix_seed(base: int, *salts: int) -> int:
    """Derive a child seed from a base seed and integer salts."""
    s = (int(base) * _MULT + _INC) & _MASK
    for salt in salts:
        s = ((s ^ (int(salt) & _MASK)) * _MULT + _INC) & _MASK
    return s
