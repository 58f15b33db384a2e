"""Fixed-length symbol vectors derived from fractal codes, plus Hamming
distances between them.

Each range tile contributes 4 symbols in row-major tile order:
(domain_index, isometry id, contrast level, offset level). The default
distance counts differing symbol positions; a bit-wise mode over the 32-bit
symbol encoding is available for comparison studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import FractalCode

__all__ = ["IncomparableCodesError", "CodeVector", "vectorize", "hamming"]

SYMBOLS_PER_BLOCK = 4


class IncomparableCodesError(ValueError):
    """Vectors from different encoder configurations (or lengths) cannot be
    meaningfully compared."""


@dataclass(frozen=True, eq=False)
class CodeVector:
    symbols: np.ndarray
    config_fingerprint: int

    def __post_init__(self):
        sym = np.ascontiguousarray(self.symbols, dtype=np.uint32)
        if sym.ndim != 1 or sym.size == 0 or sym.size % SYMBOLS_PER_BLOCK:
            raise ValueError("symbols must be a non-empty flat array, 4 per block")
        sym.setflags(write=False)
        object.__setattr__(self, "symbols", sym)

    def __len__(self) -> int:
        return int(self.symbols.size)


def vectorize(code: FractalCode) -> CodeVector:
    """Flatten a fractal code into its comparison vector (deterministic and
    injective for codes sharing a configuration)."""
    sym = np.empty(SYMBOLS_PER_BLOCK * len(code.entries), dtype=np.uint32)
    for i, e in enumerate(code.entries):
        base = SYMBOLS_PER_BLOCK * i
        sym[base] = e.domain_index
        sym[base + 1] = int(e.isometry)
        sym[base + 2] = e.s_q
        sym[base + 3] = e.o_q
    return CodeVector(sym, code.config.fingerprint())


def hamming(a: CodeVector, b: CodeVector, mode: str = "symbol") -> int:
    """Number of differing positions between two comparable vectors.

    mode="symbol" counts differing symbols; mode="bit" counts differing bits
    of the fixed-width 32-bit symbol encoding.
    """
    if a.config_fingerprint != b.config_fingerprint or len(a) != len(b):
        raise IncomparableCodesError(
            "vectors come from different configurations or grids"
        )
    if mode == "symbol":
        return int(np.count_nonzero(a.symbols != b.symbols))
    if mode == "bit":
        xor = (a.symbols ^ b.symbols).view(np.uint8)
        return int(np.unpackbits(xor).sum())
    raise ValueError(f"unknown hamming mode {mode!r}")
