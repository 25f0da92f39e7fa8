import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bottleneck_coop.core import Lane, Variant
from bottleneck_coop.protocol import (
    BROADCAST,
    IDLE,
    CavRole,
    Message,
    MessageKind,
    ProtocolViolation,
    RoleKind,
    blocked_clearance_set,
    free_clearance_window,
    free_window_messages,
    handle_message,
    negotiate,
    returner_stop,
    select_returner,
    start_invite,
)


def view(n, cavs):
    return [(d, d in cavs) for d in range(1, n + 1)]


# worked example: inviter f1 with dmax 5, blocked CAVs b2 b4 b7, free CAVs f3 f4 f8
FIG2_BLOCKED = view(8, {2, 4, 7})
FIG2_FREE = view(8, {1, 3, 4, 8})
FIG2_IDS = {Lane.BLOCKED: [100 + d for d in range(1, 9)], Lane.FREE: [d for d in range(1, 9)]}


def test_select_returner_examples():
    assert select_returner(FIG2_BLOCKED, 5, 20) == 4
    assert select_returner(view(10, set()), 20, 20) is None
    v = view(20, {3, 19})
    assert select_returner(v, 20, 20) == 19
    assert select_returner(v, 20, 10) == 3


def test_blocked_clearance_examples():
    assert blocked_clearance_set(FIG2_BLOCKED, 4) == {2}
    assert blocked_clearance_set(view(5, {2, 4}), 2) == set()
    assert blocked_clearance_set(view(5, {1, 2, 3}), 3) == {1, 2}


def test_free_window_examples():
    assert free_clearance_window(Variant.NON_COUNTING, 5, 0) == 5
    assert free_clearance_window(Variant.COUNTING, 5, 2) == 1
    assert free_clearance_window(Variant.COUNTING, 5, 0) == 0


def test_negotiate_worked_example():
    ep = negotiate(5, 20, FIG2_BLOCKED, FIG2_FREE, inviter=1, ids=FIG2_IDS)
    assert ep.returner_d == 4
    assert ep.returner == 104
    assert ep.blocked_cleared == {2}
    kinds = [(m.kind, m.recipient) for m in ep.messages]
    assert kinds[0] == (MessageKind.INVITE, BROADCAST)
    assert (MessageKind.REQUEST_RETURN, 104) in kinds
    assert (MessageKind.CLEARANCE, 102) in kinds
    assert (MessageKind.DISMISS, 107) in kinds
    reports = {(m.kind, m.sender, m.d) for m in ep.messages if m.d is not None}
    assert reports == {
        (MessageKind.POSITION_BLOCKED, 102, 2), (MessageKind.POSITION_BLOCKED, 104, 4),
        (MessageKind.POSITION_BLOCKED, 107, 7), (MessageKind.POSITION_FREE, 3, 3),
        (MessageKind.POSITION_FREE, 4, 4), (MessageKind.POSITION_FREE, 8, 8),
    }


def test_negotiate_without_candidate():
    assert negotiate(3, 20, view(8, {5, 7})) is None


def test_negotiate_retry_on_rejection():
    ep = negotiate(5, 20, FIG2_BLOCKED, accepts=lambda d: d != 4)
    assert ep.returner_d == 2
    assert ep.blocked_cleared == set()
    requests = [m.recipient for m in ep.messages if m.kind is MessageKind.REQUEST_RETURN]
    assert requests == [4, 2]
    assert negotiate(5, 20, FIG2_BLOCKED, accepts=lambda d: False) is None


def test_negotiate_without_messages_agrees():
    a = negotiate(5, 20, FIG2_BLOCKED, FIG2_FREE)
    b = negotiate(5, 20, FIG2_BLOCKED, FIG2_FREE, with_messages=False)
    assert (a.returner_d, a.blocked_cleared) == (b.returner_d, b.blocked_cleared)
    assert b.messages == []


@pytest.mark.parametrize("variant,drained,cleared", [
    (Variant.NON_COUNTING, 0, {3, 4}),
    (Variant.COUNTING, 2, set()),
    (Variant.COUNTING, 3, {3}),
])
def test_free_window_messages_worked_example(variant, drained, cleared):
    ep = negotiate(5, 20, FIG2_BLOCKED, FIG2_FREE, inviter=1, ids=FIG2_IDS)
    window = free_clearance_window(variant, 5, drained)
    msgs = free_window_messages(ep, FIG2_FREE, window, 20, FIG2_IDS)
    got = {m.recipient for m in msgs if m.kind is MessageKind.CLEARANCE}
    dismissed = {m.recipient for m in msgs if m.kind is MessageKind.DISMISS}
    assert got == cleared
    assert dismissed == {3, 4, 8} - cleared
    assert 8 in dismissed


def _replay_roles(ep, blocked_view, ids):
    """Deliver every negotiation message through the per-CAV state machine."""
    pos = {vid: d for d, vid in enumerate(ids[Lane.BLOCKED], 1)}
    roles = {ids[Lane.BLOCKED][d - 1]: IDLE for d, cav in blocked_view if cav}
    for msg in ep.messages:
        if msg.recipient == BROADCAST or msg.recipient not in roles:
            continue
        roles[msg.recipient], _ = handle_message(roles[msg.recipient], Lane.BLOCKED, msg,
                                                 pos[msg.recipient])
    return roles


def test_worked_example_round_trip():
    ep = negotiate(5, 20, FIG2_BLOCKED, FIG2_FREE, inviter=1, ids=FIG2_IDS)
    roles = _replay_roles(ep, FIG2_BLOCKED, FIG2_IDS)
    assert roles[104].kind is RoleKind.RETURNER
    assert roles[102].kind is RoleKind.CLEARED_BLOCKED
    assert roles[107].kind is RoleKind.DISMISSED


@settings(max_examples=300, deadline=None)
@given(cavs=st.lists(st.booleans(), min_size=1, max_size=20),
       dmax=st.integers(1, 20), comm_range=st.integers(1, 20))
def test_round_trip_reconstructs_roles(cavs, dmax, comm_range):
    n = len(cavs)
    bview = [(d, c) for d, c in enumerate(cavs, 1)]
    ids = {Lane.BLOCKED: [1000 + d for d in range(1, n + 1)]}
    ep = negotiate(dmax, comm_range, bview, inviter=0, ids=ids)
    if ep is None:
        return
    roles = _replay_roles(ep, bview, ids)
    for d, cav in bview:
        if not cav:
            continue
        kind = roles[1000 + d].kind
        if d == ep.returner_d:
            assert kind is RoleKind.RETURNER
        elif d in ep.blocked_cleared:
            assert kind is RoleKind.CLEARED_BLOCKED
        elif d <= comm_range:
            assert kind is RoleKind.DISMISSED
        else:
            assert kind is RoleKind.IDLE


def test_select_returner_brute_force():
    """Exhaustive over every blocked view of up to 8 vehicles."""
    for n in range(0, 9):
        for pattern in itertools.product((False, True), repeat=n):
            v = [(d, c) for d, c in enumerate(pattern, 1)]
            for comm_range in (1, 3, 8, 20):
                prev = None
                for dmax in range(1, 10):
                    d = select_returner(v, dmax, comm_range)
                    limit = min(dmax, comm_range)
                    eligible = [p for p, c in v if c and p <= limit]
                    assert d == (max(eligible) if eligible else None)
                    if d is not None:
                        assert pattern[d - 1] and d <= limit
                        cleared = blocked_clearance_set(v, d)
                        assert sorted(cleared | {d}) == [p for p, c in v if c and p <= d]
                    # monotone in dmax
                    if prev is not None:
                        assert d is not None and d >= prev
                    prev = d


def test_message_invariants():
    Message(MessageKind.INVITE, 1, BROADCAST)
    with pytest.raises(ValueError):
        Message(MessageKind.CLEARANCE, 1, BROADCAST)
    with pytest.raises(ValueError):
        Message(MessageKind.INVITE, 1, 2)
    with pytest.raises(ValueError):
        Message(MessageKind.POSITION_FREE, 1, 2, 0)
    with pytest.raises(ValueError):
        Message(MessageKind.POSITION_BLOCKED, 1, 2)
    with pytest.raises(ValueError):
        Message(MessageKind.CLEARANCE, 1, 2, 3)


@pytest.mark.parametrize("msg", [
    Message(MessageKind.INVITE, 1, BROADCAST),
    Message(MessageKind.POSITION_BLOCKED, 7, 1, 7),
    Message(MessageKind.DISMISS, 1, 9),
])
def test_message_json_round_trip(msg):
    assert Message.from_json(json.loads(json.dumps(msg.to_json()))) == msg


def test_handle_message_examples():
    invite = Message(MessageKind.INVITE, 1, BROADCAST)
    role, out = handle_message(IDLE, Lane.BLOCKED, invite, 7, self_id=57)
    assert role == IDLE
    assert out == [Message(MessageKind.POSITION_BLOCKED, 57, 1, 7)]
    role, out = handle_message(IDLE, Lane.FREE, invite, 3, self_id=3)
    assert out == [Message(MessageKind.POSITION_FREE, 3, 1, 3)]

    role, out = handle_message(IDLE, Lane.BLOCKED, Message(MessageKind.REQUEST_RETURN, 1, 54), 4)
    assert role.kind is RoleKind.RETURNER and role.inviter_id == 1
    assert out == [Message(MessageKind.ACCEPT_RETURN, 54, 1)]

    role, _ = handle_message(IDLE, Lane.FREE, Message(MessageKind.CLEARANCE, 1, 3), 3)
    assert role.kind is RoleKind.CLEARED_FREE
    with pytest.raises(ProtocolViolation):
        handle_message(role, Lane.FREE, Message(MessageKind.DISMISS, 1, 3), 3)


def test_handle_message_rejections():
    returner = CavRole(RoleKind.RETURNER, 1)
    with pytest.raises(ProtocolViolation):
        handle_message(returner, Lane.BLOCKED, Message(MessageKind.CLEARANCE, 1, 5), 5)
    with pytest.raises(ProtocolViolation):
        handle_message(IDLE, Lane.FREE, Message(MessageKind.REQUEST_RETURN, 1, 5), 5)
    with pytest.raises(ProtocolViolation):
        handle_message(IDLE, Lane.BLOCKED, Message(MessageKind.ACCEPT_RETURN, 5, 1), 5)
    inviter, _ = start_invite(1, 30, 20)
    with pytest.raises(ProtocolViolation):
        handle_message(inviter, Lane.FREE, Message(MessageKind.CLEARANCE, 2, 1), 1)


def test_rejected_request_keeps_role():
    role, out = handle_message(IDLE, Lane.BLOCKED, Message(MessageKind.REQUEST_RETURN, 1, 5), 5,
                               accept=False)
    assert role == IDLE and out == []


def test_dismissed_behaves_like_idle():
    dismissed = CavRole(RoleKind.DISMISSED, 1)
    role, out = handle_message(dismissed, Lane.BLOCKED, Message(MessageKind.INVITE, 9, BROADCAST), 2,
                               self_id=5)
    assert out == [Message(MessageKind.POSITION_BLOCKED, 5, 9, 2)]
    role, _ = handle_message(dismissed, Lane.BLOCKED, Message(MessageKind.CLEARANCE, 9, 5), 2)
    assert role.kind is RoleKind.CLEARED_BLOCKED


def test_start_invite_and_returner_stop():
    role, out = start_invite(1, 30, 20)
    assert role.kind is RoleKind.INVITER and role.dmax_effective == 20
    assert out == [Message(MessageKind.INVITE, 1, BROADCAST)]
    new, out = returner_stop(CavRole(RoleKind.RETURNER, 1), 54)
    assert new == IDLE
    assert out == [Message(MessageKind.NOTIFY_RETURN, 54, 1)]
    with pytest.raises(ProtocolViolation):
        returner_stop(IDLE, 54)


_ANY_MESSAGE = st.builds(
    lambda kind, d: Message(kind, 1, BROADCAST if kind is MessageKind.INVITE else 2,
                            d if kind in (MessageKind.POSITION_FREE, MessageKind.POSITION_BLOCKED) else None),
    st.sampled_from(list(MessageKind)), st.integers(1, 20))
_ANY_ROLE = st.builds(CavRole, st.sampled_from(list(RoleKind)), st.just(1))


@given(role=_ANY_ROLE, lane=st.sampled_from(list(Lane)), msg=_ANY_MESSAGE, d=st.integers(1, 20))
def test_handle_message_never_broadcasts(role, lane, msg, d):
    try:
        _, out = handle_message(role, lane, msg, d, self_id=2)
    except ProtocolViolation:
        return
    assert all(m.recipient != BROADCAST for m in out)
