"""Compiled counterpart of :class:`engine.Simulation` for bulk runs.

Same rules, same draw order, no event log. Queues are ring buffers of fixed
length ``comm_range + 1``; vehicle roles live in a parallel int8 array.
Equivalence with the reference engine is enforced by the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .behavior import uniform_block
from .core import ScenarioParams, Variant
from .metrics import RunResult

_VARIANT_CODE = {Variant.COUNTING: 0, Variant.NON_COUNTING: 1, Variant.BASELINE: 2}

# role codes
IDLE, CLEARED_BLOCKED, RETURNER, CLEARED_FREE, INVITER = 0, 1, 2, 3, 4
FREE, BLOCKED = 0, 1


def draw_bound(comm_range: int, turns: int) -> int:
    # 2 draws per created vehicle, at most one decision + one creation per turn
    return 4 * (comm_range + 1) + 3 * turns + 8


@njit(cache=True)
def _simulate(u, kappa, p_f, p_b, dmaxmax, variant, comm_range, turns):
    size = comm_range + 1
    cap = 1
    while cap < size + 1:
        cap *= 2
    mask = cap - 1
    cav = np.zeros((2, cap), dtype=np.bool_)
    dmax = np.zeros((2, cap), dtype=np.int64)
    role = np.zeros((2, cap), dtype=np.int8)
    vid = np.zeros((2, cap), dtype=np.int64)
    head = np.zeros(2, dtype=np.int64)
    coop = variant != 2

    ui = 0
    next_id = 0
    for lane in range(2):
        for k in range(size):
            is_cav = u[ui] < kappa
            ui += 1
            cav[lane, k] = is_cav
            if is_cav:
                dmax[lane, k] = 1 + int(u[ui] * dmaxmax)
                ui += 1
            vid[lane, k] = next_id
            next_id += 1

    flow = FREE
    first = False
    in_free_run = False
    drained_free = 0
    drained_blocked = 0
    changes = 0
    free_phases = 0
    episodes = 0
    finished = 0
    blocked_total = 0
    free_total = 0

    ep_active = False
    ep_phase = 0  # 1 blocked draining, 2 free draining
    ep_inviter = -1
    ep_dmax = 0
    ep_blocked = 0
    win_rem = 0

    turn = 0
    while turn < turns:
        lane = flow
        h = head[lane]
        is_cav = cav[lane, h] and coop
        r = role[lane, h]
        do_drain = True
        invite_d = -1

        if first:
            pass
        elif lane == FREE:
            if not is_cav:
                yld = u[ui] < p_f
                ui += 1
                if yld:
                    do_drain = False
            elif r != CLEARED_FREE:
                limit = min(dmax[lane, h], comm_range)
                hb = head[BLOCKED]
                for d in range(1, limit + 1):
                    if cav[BLOCKED, (hb + d - 1) & mask]:
                        invite_d = d
                if invite_d > 0 and coop:
                    do_drain = False
                else:
                    invite_d = -1
        else:
            if r == RETURNER:
                do_drain = False
            elif not is_cav:
                stop = u[ui] < p_b
                ui += 1
                if stop:
                    do_drain = False
            elif r != CLEARED_BLOCKED:
                do_drain = False

        if do_drain:
            v = vid[lane, h]
            role[lane, h] = IDLE
            first = False
            if lane == FREE:
                drained_free += 1
                if not in_free_run:
                    free_phases += 1
                    in_free_run = True
                if ep_active and ep_phase == 2:
                    free_total += 1
                    if v != ep_inviter:
                        win_rem -= 1
                    if win_rem <= 0:
                        ep_active = False
                        for k in range(size):
                            idx = (head[FREE] + k) & mask
                            if role[FREE, idx] == CLEARED_FREE or role[FREE, idx] == INVITER:
                                role[FREE, idx] = IDLE
            else:
                drained_blocked += 1
                if ep_active and ep_phase == 1:
                    ep_blocked += 1
            # pop and append a fresh vehicle at the tail
            nh = (h + 1) & mask
            head[lane] = nh
            t = (nh + size - 1) & mask
            is_new_cav = u[ui] < kappa
            ui += 1
            cav[lane, t] = is_new_cav
            role[lane, t] = IDLE
            if is_new_cav:
                dmax[lane, t] = 1 + int(u[ui] * dmaxmax)
                ui += 1
            else:
                dmax[lane, t] = 0
            vid[lane, t] = next_id
            next_id += 1
        else:
            if lane == FREE:
                for k in range(size):
                    idx = (head[FREE] + k) & mask
                    if role[FREE, idx] == CLEARED_FREE:
                        role[FREE, idx] = IDLE
                if ep_active:
                    ep_active = False
                    for k in range(size):
                        idx = (head[FREE] + k) & mask
                        if role[FREE, idx] == INVITER:
                            role[FREE, idx] = IDLE
                if invite_d > 0:
                    ep_active = True
                    ep_phase = 1
                    ep_inviter = vid[FREE, h]
                    ep_dmax = dmax[FREE, h]
                    ep_blocked = 0
                    episodes += 1
                    role[FREE, h] = INVITER
                    hb = head[BLOCKED]
                    for d in range(1, invite_d):
                        idx = (hb + d - 1) & mask
                        if cav[BLOCKED, idx]:
                            role[BLOCKED, idx] = CLEARED_BLOCKED
                    role[BLOCKED, (hb + invite_d - 1) & mask] = RETURNER
            else:
                for k in range(size):
                    idx = (head[BLOCKED] + k) & mask
                    if role[BLOCKED, idx] == CLEARED_BLOCKED or role[BLOCKED, idx] == RETURNER:
                        role[BLOCKED, idx] = IDLE
                if ep_active and ep_phase == 1:
                    if variant == 0:
                        window = max(ep_blocked - 1, 0)
                    else:
                        window = ep_dmax
                    window = min(window, comm_range)
                    ep_phase = 2
                    win_rem = window
                    finished += 1
                    blocked_total += ep_blocked
                    hf = head[FREE]
                    for k in range(1, window + 1):
                        idx = (hf + k) & mask
                        if cav[FREE, idx]:
                            role[FREE, idx] = CLEARED_FREE
            flow = 1 - lane
            first = True
            changes += 1
            in_free_run = False
        turn += 1

    return (drained_free, drained_blocked, changes, episodes, blocked_total,
            free_total, finished, free_phases, ui)


def run_fast(params: ScenarioParams) -> RunResult:
    p = params
    u = uniform_block(p.seed, draw_bound(p.comm_range, p.turns_target))
    (df, db, dc, eps, btot, ftot, fin, fph, draws) = _simulate(
        u, float(p.kappa), float(p.p_f), float(p.p_b), int(p.dmaxmax),
        _VARIANT_CODE[p.variant], int(p.comm_range), int(p.turns_target))
    return RunResult.build(
        params=p, drained_free=df, drained_blocked=db, direction_changes=dc,
        episode_count=eps, blocked_drains_total=btot, free_drains_total=ftot,
        finished_blocked_phases=fin, free_phases=fph, rng_draws=draws)
