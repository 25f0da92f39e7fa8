"""Turn-based bottleneck simulation.

One turn is either a vehicle draining through the bottleneck or a change of
flow direction. :class:`Simulation` is the reference implementation and
records a replayable event log; :func:`run` uses the compiled kernel when no
log is requested (both produce identical results for identical params).
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import behavior
from .behavior import Action, RngStream
from .core import Lane, ScenarioParams, Variant, Vehicle, VehicleKind, validate_params
from .metrics import RunResult
from .protocol import (
    CavRole,
    Episode,
    Message,
    MessageKind,
    Phase,
    RoleKind,
    free_clearance_window,
    free_window_messages,
    negotiate,
)

LOG_FORMAT = "bottleneck-events/1"


class Cause(enum.Enum):
    HUMAN_YIELD = "HumanYield"
    CAV_INVITE_YIELD = "CavInviteYield"
    HUMAN_STOP = "HumanStop"
    CAV_RETURNER_STOP = "CavReturnerStop"
    CAV_WAIT_STOP = "CavWaitStop"


@dataclass(frozen=True)
class TurnEvent:
    turn_index: int
    lane: Lane
    vehicle_id: Optional[int] = None
    vehicle_kind: Optional[VehicleKind] = None
    had_clearance: bool = False
    cause: Optional[Cause] = None
    messages: tuple = ()

    @property
    def is_drain(self) -> bool:
        return self.cause is None

    def to_json(self) -> dict:
        if self.is_drain:
            out = {"turn": self.turn_index, "event": "drain", "lane": self.lane.value,
                   "vehicle_id": self.vehicle_id, "vehicle_kind": self.vehicle_kind.value,
                   "had_clearance": self.had_clearance}
        else:
            out = {"turn": self.turn_index, "event": "direction_change",
                   "from": self.lane.value, "to": self.lane.opposite.value,
                   "cause": self.cause.value}
        if self.messages:
            out["messages"] = [m.to_json() for m in self.messages]
        return out


@dataclass
class EpisodeRecord:
    returner_d: int
    cleared: frozenset
    inviter_dmax: int
    drained_blocked: int = 0
    drained_free: int = 0
    end_cause: Optional[Cause] = None


class Simulation:
    """Mutable simulation state advanced one turn at a time by :meth:`step`."""

    def __init__(self, params: ScenarioParams, record: bool = False, initial=None):
        """``initial`` optionally seeds the queue fronts as ``(free, blocked)``
        lists of dmax values, ``None`` marking a human; the rest is drawn."""
        self.params = validate_params(params)
        self.rng = RngStream(params.seed)
        self.record = record
        self.cooperative = params.variant is not Variant.BASELINE
        self.free_queue: deque = deque()
        self.blocked_queue: deque = deque()
        self.queues = {Lane.FREE: self.free_queue, Lane.BLOCKED: self.blocked_queue}
        self.roles: dict[int, CavRole] = {}
        self.flow = Lane.FREE
        self.first_after_change = False
        self.episode: Optional[Episode] = None
        self.free_window_remaining = 0
        self.turn_index = 0
        self.drained_free = 0
        self.drained_blocked = 0
        self.direction_changes = 0
        self.free_phases = 0
        self.episodes: list[EpisodeRecord] = []
        self.events: list[TurnEvent] = []
        self._next_id = 0
        self._current: Optional[EpisodeRecord] = None
        self._in_free_run = False
        for lane, specs in zip((Lane.FREE, Lane.BLOCKED), initial or ((), ())):
            if len(specs) > params.comm_range + 1:
                raise ValueError("initial queue longer than comm_range + 1")
            for dmax in specs:
                kind = VehicleKind.HUMAN if dmax is None else VehicleKind.CAV
                self.queue(lane).append(Vehicle(self._next_id, kind, dmax))
                self._next_id += 1
        self.extend_queue(Lane.FREE)
        self.extend_queue(Lane.BLOCKED)

    # queue plumbing -------------------------------------------------------

    def queue(self, lane: Lane) -> deque:
        return self.free_queue if lane is Lane.FREE else self.blocked_queue

    def extend_queue(self, lane: Lane) -> None:
        q = self.queue(lane)
        p = self.params
        while len(q) < p.comm_range + 1:
            kind = behavior.draw_kind(self.rng, p.kappa)
            dmax = behavior.draw_dmax(self.rng, p.dmaxmax) if kind is VehicleKind.CAV else None
            q.append(Vehicle(self._next_id, kind, dmax))
            self._next_id += 1

    def view(self, lane: Lane) -> list[tuple[int, bool]]:
        q = self.queue(lane)
        n = min(len(q), self.params.comm_range + (1 if lane is Lane.FREE else 0))
        return [(d + 1, q[d].is_cav and self.cooperative) for d in range(n)]

    def _ids(self) -> dict:
        return {lane: [v.id for v in q] for lane, q in self.queues.items()}

    def role(self, v: Vehicle) -> RoleKind:
        r = self.roles.get(v.id)
        return r.kind if r else RoleKind.IDLE

    # turn resolution ------------------------------------------------------

    def step(self) -> TurnEvent:
        lane = self.flow
        v = (self.free_queue if lane is Lane.FREE else self.blocked_queue)[0]
        cav = v.is_cav and self.cooperative
        role = self.role(v)

        if self.first_after_change:
            return self._drain(lane)
        if lane is Lane.FREE:
            if not cav:
                if behavior.human_free_decision(self.rng, self.params.p_f) is Action.YIELD:
                    return self._change(Cause.HUMAN_YIELD)
                return self._drain(lane)
            if role is RoleKind.CLEARED_FREE:
                return self._drain(lane)
            ep = negotiate(v.dmax, self.params.comm_range, self.view(Lane.BLOCKED),
                           self.view(Lane.FREE), inviter=v.id,
                           ids=self._ids() if self.record else None, with_messages=self.record)
            if ep is None:
                return self._drain(lane)
            return self._change(Cause.CAV_INVITE_YIELD, ep)

        if role is RoleKind.RETURNER:
            return self._change(Cause.CAV_RETURNER_STOP)
        if not cav:
            if behavior.human_blocked_decision(self.rng, self.params.p_b) is Action.STOP:
                return self._change(Cause.HUMAN_STOP)
            return self._drain(lane)
        if role is RoleKind.CLEARED_BLOCKED:
            return self._drain(lane)
        return self._change(Cause.CAV_WAIT_STOP)

    def _emit(self, event: TurnEvent) -> TurnEvent:
        self.turn_index += 1
        if self.record:
            self.events.append(event)
        return event

    def _drain(self, lane: Lane) -> TurnEvent:
        q = self.free_queue if lane is Lane.FREE else self.blocked_queue
        v = q.popleft()
        role = self.roles.pop(v.id, None)
        cleared = role is not None and role.kind in (RoleKind.CLEARED_BLOCKED, RoleKind.CLEARED_FREE)
        event = TurnEvent(self.turn_index, lane, v.id, v.kind, cleared)
        self.first_after_change = False
        ep = self.episode
        if lane is Lane.FREE:
            self.drained_free += 1
            if not self._in_free_run:
                self.free_phases += 1
                self._in_free_run = True
            if ep is not None and ep.phase is Phase.FREE_DRAINING:
                ep.drained_free += 1
                self._current.drained_free += 1
                if v.id != ep.inviter:
                    self.free_window_remaining -= 1
                if self.free_window_remaining <= 0:
                    self._close_episode()
        else:
            self.drained_blocked += 1
            if ep is not None and ep.phase is Phase.BLOCKED_DRAINING:
                ep.drained_blocked += 1
                self._current.drained_blocked += 1
        self.extend_queue(lane)
        return self._emit(event)

    def _change(self, cause: Cause, negotiated: Optional[Episode] = None) -> TurnEvent:
        old = self.flow
        messages: list[Message] = []
        if old is Lane.FREE:
            self._expire(RoleKind.CLEARED_FREE)
            if self.episode is not None:
                self._close_episode()
            if negotiated is not None:
                self._activate(negotiated)
                messages = negotiated.messages
        else:
            self._expire(RoleKind.CLEARED_BLOCKED, RoleKind.RETURNER)
            ep = self.episode
            if ep is not None and ep.phase is Phase.BLOCKED_DRAINING:
                messages = self._issue_free_window(ep, cause)
        event = TurnEvent(self.turn_index, old, cause=cause,
                          messages=tuple(messages) if self.record else ())
        self.flow = old.opposite
        self.first_after_change = True
        self.direction_changes += 1
        self._in_free_run = False
        return self._emit(event)

    def _expire(self, *kinds: RoleKind) -> None:
        for vid in [k for k, r in self.roles.items() if r.kind in kinds]:
            del self.roles[vid]

    def _activate(self, ep: Episode) -> None:
        blocked = self.blocked_queue
        returner = blocked[ep.returner_d - 1]
        ep.returner = returner.id
        ep.phase = Phase.BLOCKED_DRAINING
        self.roles[returner.id] = CavRole(RoleKind.RETURNER, ep.inviter)
        for d in ep.blocked_cleared:
            self.roles[blocked[d - 1].id] = CavRole(RoleKind.CLEARED_BLOCKED, ep.inviter)
        self.roles[ep.inviter] = CavRole(RoleKind.INVITER, ep.inviter,
                                         min(ep.inviter_dmax, self.params.comm_range))
        self.episode = ep
        self._current = EpisodeRecord(ep.returner_d, frozenset(ep.blocked_cleared), ep.inviter_dmax)
        self.episodes.append(self._current)

    def _issue_free_window(self, ep: Episode, cause: Cause) -> list:
        p = self.params
        window = min(free_clearance_window(p.variant, ep.inviter_dmax, ep.drained_blocked),
                     p.comm_range)
        ep.free_window = window
        ep.phase = Phase.FREE_DRAINING
        self._current.end_cause = cause
        self.free_window_remaining = window
        free = self.free_queue
        for k in range(1, window + 1):
            v = free[k]
            if v.is_cav:
                self.roles[v.id] = CavRole(RoleKind.CLEARED_FREE, ep.inviter)
        if not self.record:
            return []
        messages = []
        if cause is Cause.CAV_RETURNER_STOP:
            messages.append(Message(MessageKind.NOTIFY_RETURN, ep.returner, ep.inviter))
        messages += free_window_messages(ep, self.view(Lane.FREE), window, p.comm_range, self._ids())
        return messages

    def _close_episode(self) -> None:
        ep = self.episode
        ep.phase = Phase.CLOSED
        self.roles.pop(ep.inviter, None)
        self._expire(RoleKind.CLEARED_FREE)
        self.episode = None
        self.free_window_remaining = 0

    # whole runs -----------------------------------------------------------

    def run(self) -> RunResult:
        target = self.params.turns_target
        while self.turn_index < target:
            self.step()
        return self.result()

    def result(self) -> RunResult:
        done = [e for e in self.episodes if e.end_cause is not None]
        return RunResult.build(
            params=self.params,
            drained_free=self.drained_free,
            drained_blocked=self.drained_blocked,
            direction_changes=self.direction_changes,
            episode_count=len(self.episodes),
            blocked_drains_total=sum(e.drained_blocked for e in done),
            free_drains_total=sum(e.drained_free for e in done),
            finished_blocked_phases=len(done),
            free_phases=self.free_phases,
            rng_draws=self.rng.draws,
        )


def run(params: ScenarioParams, log: "str | Path | None" = None,
        reference: bool = False) -> RunResult:
    """Simulate ``params.turns_target`` turns and return the summary.

    With ``log`` the reference engine runs and writes the JSON-lines event
    log; otherwise the compiled kernel is used unless ``reference`` is set.
    """
    validate_params(params)
    if log is not None:
        sim = Simulation(params, record=True)
        result = sim.run()
        Path(log).write_text(render_log(sim, result))
        return result
    if reference:
        return Simulation(params).run()
    from ._kernel import run_fast

    return run_fast(params)


def render_log(sim: Simulation, result: RunResult) -> str:
    header = {"format": LOG_FORMAT, "params": sim.params.to_dict(),
              "seed": sim.params.seed, "rng_draws": sim.rng.draws,
              "result": result.to_dict()}
    encode = json.JSONEncoder(sort_keys=True).encode
    lines = [encode(header)]
    lines += [encode(e.to_json()) for e in sim.events]
    return "\n".join(lines) + "\n"


class ReplayMismatch(RuntimeError):
    pass


def replay(path: "str | Path") -> RunResult:
    """Re-run the logged scenario and require a byte-identical log."""
    text = Path(path).read_text()
    first = text.split("\n", 1)[0]
    header = json.loads(first)
    if header.get("format") != LOG_FORMAT:
        raise ReplayMismatch(f"unsupported log format {header.get('format')!r}")
    params = ScenarioParams.from_dict(header["params"])
    sim = Simulation(params, record=True)
    result = sim.run()
    fresh = render_log(sim, result)
    if fresh != text:
        a, b = text.splitlines(), fresh.splitlines()
        line = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
        raise ReplayMismatch(f"log differs from replay at line {line + 1}")
    return result
