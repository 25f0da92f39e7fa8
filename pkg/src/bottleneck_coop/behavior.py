"""Stochastic driver policies and the reproducible random stream behind them.

Every draw consumes exactly one uniform variate from the stream, so a run is
fully described by its seed and the number of draws taken.
"""

from __future__ import annotations

import enum
import hashlib
import struct

import numpy as np

from .core import VehicleKind

_BLOCK = 4096


class Action(enum.Enum):
    DRIVE = "drive"
    YIELD = "yield"
    STOP = "stop"


class RngStream:
    """Seeded PCG64 uniform stream with a draw counter."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self._buf = np.empty(0)
        self._pos = 0
        self.draws = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BLOCK)
            self._pos = 0
        u = float(self._buf[self._pos])
        self._pos += 1
        self.draws += 1
        return u

    def skip(self, n: int) -> None:
        for _ in range(n):
            self.uniform()


def uniform_block(seed: int, n: int) -> np.ndarray:
    """First ``n`` variates of the stream for ``seed``, in draw order."""
    return np.random.Generator(np.random.PCG64(int(seed))).random(n)


def derive_seed(base_seed: int, index: int) -> int:
    """Stable 64-bit seed for grid entry ``index``; independent of worker layout."""
    digest = hashlib.blake2b(
        struct.pack("<QQ", base_seed % 2**64, index % 2**64), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def human_free_decision(rng: RngStream, p_f: float) -> Action:
    return Action.YIELD if rng.uniform() < p_f else Action.DRIVE


def human_blocked_decision(rng: RngStream, p_b: float) -> Action:
    return Action.STOP if rng.uniform() < p_b else Action.DRIVE


def draw_kind(rng: RngStream, kappa: float) -> VehicleKind:
    return VehicleKind.CAV if rng.uniform() < kappa else VehicleKind.HUMAN


def draw_dmax(rng: RngStream, dmaxmax: int) -> int:
    # uniform < 1 strictly, so the result stays within 1..dmaxmax
    return 1 + int(rng.uniform() * dmaxmax)
