"""V2V message vocabulary and the inviter/returner decision rules.

Positions (``d``) are queue positions counted from the bottleneck, 1 = front.
A *view* is a list of ``(d, is_cav)`` pairs sorted by ``d``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .core import Lane, Variant

BROADCAST = "broadcast"

View = Sequence[tuple[int, bool]]


class ProtocolViolation(RuntimeError):
    """A message arrived that is inconsistent with the recipient's role."""


class MessageKind(enum.Enum):
    INVITE = "Invite"
    POSITION_FREE = "PositionReportFree"
    POSITION_BLOCKED = "PositionReportBlocked"
    REQUEST_RETURN = "RequestReturn"
    ACCEPT_RETURN = "AcceptReturn"
    NOTIFY_RETURN = "NotifyReturn"
    CLEARANCE = "Clearance"
    DISMISS = "Dismiss"


_REPORTS = (MessageKind.POSITION_FREE, MessageKind.POSITION_BLOCKED)


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    recipient: "int | str"
    d: Optional[int] = None

    def __post_init__(self):
        if (self.kind is MessageKind.INVITE) != (self.recipient == BROADCAST):
            raise ValueError("Invite is the only broadcast message")
        if self.kind in _REPORTS:
            if self.d is None or self.d < 1:
                raise ValueError("position reports need d >= 1")
        elif self.d is not None:
            raise ValueError(f"{self.kind.value} carries no position")

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "sender": self.sender, "recipient": self.recipient}
        if self.d is not None:
            out["d"] = self.d
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Message":
        return cls(MessageKind(data["kind"]), data["sender"], data["recipient"], data.get("d"))


class RoleKind(enum.Enum):
    IDLE = "idle"
    INVITER = "inviter"
    RETURNER = "returner"
    CLEARED_BLOCKED = "cleared_blocked"
    CLEARED_FREE = "cleared_free"
    DISMISSED = "dismissed"


@dataclass(frozen=True)
class CavRole:
    kind: RoleKind = RoleKind.IDLE
    inviter_id: Optional[int] = None
    dmax_effective: Optional[int] = None

    @property
    def waiting(self) -> bool:
        """Idle and Dismissed behave identically."""
        return self.kind in (RoleKind.IDLE, RoleKind.DISMISSED)


IDLE = CavRole()


class Phase(enum.Enum):
    NEGOTIATING = "negotiating"
    BLOCKED_DRAINING = "blocked_draining"
    FREE_DRAINING = "free_draining"
    CLOSED = "closed"


@dataclass
class Episode:
    inviter: int
    returner: int
    returner_d: int
    inviter_dmax: int
    blocked_cleared: set = field(default_factory=set)
    free_window: int = 0
    drained_blocked: int = 0
    drained_free: int = 0
    phase: Phase = Phase.NEGOTIATING
    messages: list = field(default_factory=list)


def select_returner(blocked_view: View, dmax: int, comm_range: int,
                    exclude: Iterable[int] = ()) -> Optional[int]:
    """Position of the furthest blocked CAV the inviter is willing to wait for."""
    limit = min(dmax, comm_range)
    skip = set(exclude)
    best = None
    for d, is_cav in blocked_view:
        if d > limit:
            break
        if is_cav and d not in skip:
            best = d
    return best


def blocked_clearance_set(blocked_view: View, returner_d: int) -> set:
    return {d for d, is_cav in blocked_view if is_cav and d < returner_d}


def free_clearance_window(variant: Variant, dmax: int, drained_blocked: int) -> int:
    """Number of queue positions behind the inviter that receive Clearance.

    The counting budget includes the inviter's own drain.
    """
    if variant is Variant.COUNTING:
        return max(drained_blocked - 1, 0)
    return dmax


def negotiate(inviter_dmax: int, comm_range: int, blocked_view: View, free_view: View = (),
              accepts: Optional[Callable[[int], bool]] = None,
              inviter: int = 0, ids: Optional[dict] = None,
              with_messages: bool = True) -> Optional[Episode]:
    """Run one invitation round; ``None`` means the inviter drives through.

    ``accepts(d)`` decides whether the blocked CAV at ``d`` confirms the
    request; simulated CAVs always do. ``ids`` maps each lane to the vehicle
    ids in queue order and is only needed to address the logged messages;
    without it positions stand in for ids.
    """
    ids = ids or {}
    by_lane = {Lane.FREE: ids.get(Lane.FREE), Lane.BLOCKED: ids.get(Lane.BLOCKED)}

    def vid(lane, d):
        lane_ids = by_lane[lane]
        return d if lane_ids is None else lane_ids[d - 1]

    messages = []
    if with_messages:
        messages.append(Message(MessageKind.INVITE, inviter, BROADCAST))
        for d, is_cav in blocked_view:
            if is_cav and d <= comm_range:
                messages.append(Message(MessageKind.POSITION_BLOCKED, vid(Lane.BLOCKED, d), inviter, d))
        for d, is_cav in free_view:
            if is_cav and 1 < d <= comm_range:
                messages.append(Message(MessageKind.POSITION_FREE, vid(Lane.FREE, d), inviter, d))

    rejected: list[int] = []
    while True:
        d = select_returner(blocked_view, inviter_dmax, comm_range, exclude=rejected)
        if d is None:
            return None
        if with_messages:
            messages.append(Message(MessageKind.REQUEST_RETURN, inviter, vid(Lane.BLOCKED, d)))
        if accepts is None or accepts(d):
            break
        rejected.append(d)

    returner = vid(Lane.BLOCKED, d)
    cleared = blocked_clearance_set(blocked_view, d)
    if with_messages:
        messages.append(Message(MessageKind.ACCEPT_RETURN, returner, inviter))
        for c in sorted(cleared):
            messages.append(Message(MessageKind.CLEARANCE, inviter, vid(Lane.BLOCKED, c)))
        for c, is_cav in blocked_view:
            if is_cav and d < c <= comm_range:
                messages.append(Message(MessageKind.DISMISS, inviter, vid(Lane.BLOCKED, c)))
    return Episode(inviter=inviter, returner=returner, returner_d=d, inviter_dmax=inviter_dmax,
                   blocked_cleared=cleared, messages=messages)


def free_window_messages(episode: Episode, free_view: View, window: int, comm_range: int,
                         ids: Optional[dict] = None) -> list:
    """Clearance/Dismiss sent to free CAVs once the blocked flow has ceased.

    ``free_view`` positions are absolute (the inviter sits at 1), so relative
    position ``k`` behind the inviter is absolute position ``k + 1``.
    """
    free_ids = (ids or {}).get(Lane.FREE)
    out = []
    for d, is_cav in free_view:
        if not is_cav or d == 1 or d - 1 > comm_range:
            continue
        kind = MessageKind.CLEARANCE if d - 1 <= window else MessageKind.DISMISS
        out.append(Message(kind, episode.inviter, free_ids[d - 1] if free_ids else d))
    return out


def start_invite(self_id: int, dmax: int, comm_range: int) -> tuple[CavRole, list]:
    """Front free CAV opening a round: the only source of broadcasts."""
    role = CavRole(RoleKind.INVITER, self_id, min(dmax, comm_range))
    return role, [Message(MessageKind.INVITE, self_id, BROADCAST)]


def returner_stop(role: CavRole, self_id: int) -> tuple[CavRole, list]:
    if role.kind is not RoleKind.RETURNER:
        raise ProtocolViolation(f"only a returner can return the right of way, not {role.kind.value}")
    return IDLE, [Message(MessageKind.NOTIFY_RETURN, self_id, role.inviter_id)]


def handle_message(role: CavRole, lane: Lane, msg: Message, self_d: int,
                   self_id: Optional[int] = None, accept: bool = True) -> tuple[CavRole, list]:
    """Per-CAV state machine. Returns the new role and the messages emitted."""
    me = self_id if self_id is not None else (msg.recipient if msg.recipient != BROADCAST else -1)
    kind = msg.kind

    if role.kind is RoleKind.INVITER:
        if kind in _REPORTS or kind in (MessageKind.ACCEPT_RETURN, MessageKind.NOTIFY_RETURN):
            return role, []
        raise ProtocolViolation(f"inviter cannot receive {kind.value}")

    if kind is MessageKind.INVITE:
        if not role.waiting:
            raise ProtocolViolation(f"Invite received while {role.kind.value}")
        report = MessageKind.POSITION_BLOCKED if lane is Lane.BLOCKED else MessageKind.POSITION_FREE
        return role, [Message(report, me, msg.sender, self_d)]

    if kind is MessageKind.REQUEST_RETURN:
        if lane is not Lane.BLOCKED or not role.waiting:
            raise ProtocolViolation(f"RequestReturn received by {lane.value} CAV while {role.kind.value}")
        if not accept:
            return role, []
        return CavRole(RoleKind.RETURNER, msg.sender), [Message(MessageKind.ACCEPT_RETURN, me, msg.sender)]

    if kind is MessageKind.CLEARANCE:
        if not role.waiting:
            raise ProtocolViolation(f"Clearance received while {role.kind.value}")
        new = RoleKind.CLEARED_BLOCKED if lane is Lane.BLOCKED else RoleKind.CLEARED_FREE
        return CavRole(new, msg.sender), []

    if kind is MessageKind.DISMISS:
        if not role.waiting:
            # permissions are never revoked, so a Dismiss to a holder is contradictory
            raise ProtocolViolation(f"Dismiss received while {role.kind.value}")
        return CavRole(RoleKind.DISMISSED, msg.sender), []

    raise ProtocolViolation(f"{kind.value} is not addressed to a non-inviter CAV")
