"""Analytic and enumerated predictions, independent of the simulator code."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterable

from .core import DEFAULT_COMM_RANGE, Variant


def phi_baseline(p_f: float, p_b: float) -> float:
    """Long-run flow balance without cooperating vehicles.

    Drain runs alternate between lanes; the opening vehicle of each run always
    drives and every later one continues with probability ``1 - p``, so run
    lengths are geometric with means ``1/p_f`` and ``1/p_b``.
    """
    if not p_b > 0:
        raise ValueError("p_b must be > 0")
    if p_f == 0:
        return 1.0
    return (p_b - p_f) / (p_b + p_f)


def full_cav_cycle(variant: Variant, dmax: int, comm_range: int = DEFAULT_COMM_RANGE) -> tuple[int, int]:
    """``(blocked drains, free drains)`` of one cooperation cycle at full penetration.

    The returner sits at ``d = min(dmax, comm_range)``; everything ahead of it
    is cleared. With ``d = 1`` the returner is itself the opening vehicle of
    the blocked run and drives, after which the next (role-less) CAV waits.
    """
    d = min(dmax, comm_range)
    blocked = d - 1 if d >= 2 else 1
    if variant is Variant.COUNTING:
        window = max(blocked - 1, 0)
    elif variant is Variant.NON_COUNTING:
        window = dmax
    else:
        raise ValueError("the baseline variant has no cooperation cycle")
    return blocked, 1 + min(window, comm_range)


def phi_full_cav(variant: Variant, dmaxmax: int, comm_range: int = DEFAULT_COMM_RANGE) -> float:
    """Flow balance at full penetration, enumerating dmax over 1..dmaxmax.

    Cycles are i.i.d. in dmax, so the long-run ratio is the ratio of expected
    per-cycle drains.
    """
    if dmaxmax < 1:
        raise ValueError("dmaxmax must be >= 1")
    free = blocked = 0
    for dmax in range(1, dmaxmax + 1):
        b, f = full_cav_cycle(variant, dmax, comm_range)
        blocked += b
        free += f
    return float(Fraction(free - blocked, free + blocked))


@lru_cache(maxsize=None)
def _pmf(returner_d: int, p_b: float, cleared: frozenset) -> tuple:
    probs = [0.0] * returner_d

    def walk(pos: int, prob: float) -> None:
        # vehicles 1..pos-1 have drained; pos is next in line
        if pos == returner_d:
            probs[pos - 1] += prob
            return
        if pos in cleared:
            walk(pos + 1, prob)
            return
        if p_b > 0:
            probs[pos - 1] += prob * p_b
        if p_b < 1:
            walk(pos + 1, prob * (1 - p_b))

    walk(2, 1.0)
    return tuple(probs[1:])


def blocked_drain_distribution(returner_d: int, p_b: float,
                               cleared_positions: Iterable[int] = ()) -> dict[int, float]:
    """Exact pmf of blocked drains before the flow stops, keyed 1..returner_d-1.

    Position 1 always drives, cleared CAVs drive if reached, each other human
    stops with probability ``p_b``, and the returner never drives.
    """
    if returner_d < 2:
        raise ValueError("returner_d must be >= 2")
    cleared = frozenset(cleared_positions)
    if any(not 2 <= c < returner_d for c in cleared):
        raise ValueError("cleared positions must lie in 2..returner_d-1")
    probs = _pmf(returner_d, float(p_b), cleared)
    return {k: probs[k - 1] for k in range(1, returner_d)}


def pmf_mean(pmf: dict[int, float]) -> float:
    return sum(k * p for k, p in pmf.items())


def predict(variant: Variant, kappa: float, p_f: float, p_b: float, dmaxmax: int,
            comm_range: int = DEFAULT_COMM_RANGE):
    """Predicted phi where a closed form exists, else ``None``."""
    if variant is Variant.BASELINE or kappa == 0:
        return phi_baseline(p_f, p_b)
    if kappa == 1:
        return phi_full_cav(variant, dmaxmax, comm_range)
    return None
