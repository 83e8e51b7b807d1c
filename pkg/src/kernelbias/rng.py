"""Seeded permuted-congruential generator (PCG32, XSH-RR variant).

Everything random in the package goes through :class:`Pcg32` so that a run
is a pure function of its integer seed. Draws are produced in blocks: the
64-bit LCG state after ``j`` steps is affine in the starting state,
``s_j = A_j * s + C_j (mod 2**64)``, so a block of outputs is one vectorised
multiply-add over cached ``(A_j, C_j)`` tables. The stream is identical to
the reference sequential generator.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
MULTIPLIER = 6364136223846793005
DEFAULT_STREAM = 54

_TABLES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _advance_tables(inc: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A, C)`` with ``len >= k + 1`` for increment ``inc``."""
    A, C = _TABLES.get(inc, (None, None))
    if A is None:
        A = np.array([1, MULTIPLIER], dtype=np.uint64)
        C = np.array([0, inc], dtype=np.uint64)
    while len(A) < k + 1:
        m = len(A) - 1
        # compose the first m+1 maps with the m-step map
        Am, Cm = A[m], C[m]
        A = np.concatenate([A, A[1:] * Am])
        C = np.concatenate([C, A[1 : m + 1] * Cm + C[1:]])
    _TABLES[inc] = (A, C)
    return A, C


def derive_seed(seed: int, *labels) -> int:
    """Hash ``seed`` and labels into an independent 64-bit seed."""
    text = "/".join([str(int(seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


class Pcg32:
    """PCG32 generator with 64-bit state and 32-bit outputs.

    Parameters
    ----------
    seed : int
        Initial state (reduced mod 2**64).
    stream : int
        Stream selector; the LCG increment is ``2 * stream + 1``.

    Examples
    --------
    >>> g = Pcg32(42, 54)
    >>> [hex(v) for v in g.next_u32(3)]
    ['0xa15c02b7', '0x7b47f409', '0xba1d3330']
    """

    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.inc = ((int(stream) << 1) | 1) & MASK64
        self.state = 0
        self._step()
        self.state = (self.state + (int(seed) & MASK64)) & MASK64
        self._step()

    def _step(self) -> None:
        self.state = (self.state * MULTIPLIER + self.inc) & MASK64

    @classmethod
    def from_labels(cls, seed: int, *labels) -> "Pcg32":
        return cls(derive_seed(seed, *labels))

    def next_u32(self, size: int) -> np.ndarray:
        """Return ``size`` raw 32-bit outputs as uint64 array."""
        size = int(size)
        if size < 0:
            raise ValueError("size must be nonnegative")
        if size == 0:
            return np.zeros(0, dtype=np.uint64)
        A, C = _advance_tables(self.inc, size)
        s = np.uint64(self.state)
        old = A[:size] * s + C[:size]
        self.state = (int(A[size]) * self.state + int(C[size])) & MASK64
        xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(0xFFFFFFFF)
        rot = old >> np.uint64(59)
        left = (np.uint64(32) - rot) & np.uint64(31)
        out = (xorshifted >> rot) | (xorshifted << left)
        return out & np.uint64(0xFFFFFFFF)

    def random(self, size: int) -> np.ndarray:
        """Uniform doubles in [0, 1) with 53 random bits each."""
        raw = self.next_u32(2 * int(size))
        hi = (raw[0::2] >> np.uint64(5)).astype(np.float64)
        lo = (raw[1::2] >> np.uint64(6)).astype(np.float64)
        return (hi * 67108864.0 + lo) / 9007199254740992.0

    def uniform(self, lo: float, hi: float, size: int) -> np.ndarray:
        return lo + (hi - lo) * self.random(size)

    def normal(self, size: int) -> np.ndarray:
        """Standard normal draws by the Box-Muller transform.

        Pairs are generated together; an odd request discards the second
        member of the last pair, so ``normal(a)`` then ``normal(b)`` is not
        the same stream as ``normal(a + b)``.
        """
        size = int(size)
        pairs = (size + 1) // 2
        u = self.random(2 * pairs)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        return z[:size]

    def integers(self, n: int, size: int) -> np.ndarray:
        """Uniform integers in ``[0, n)`` by unbiased rejection."""
        n = int(n)
        if n < 1 or n > 2**32:
            raise ValueError("n must be in [1, 2**32]")
        size = int(size)
        threshold = (2**32 - n) % n
        out = np.empty(0, dtype=np.int64)
        while len(out) < size:
            need = size - len(out)
            raw = self.next_u32(need)
            raw = raw[raw >= np.uint64(threshold)]
            out = np.concatenate([out, (raw % np.uint64(n)).astype(np.int64)])
        return out
