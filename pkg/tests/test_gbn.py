from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtt_forge.gbn import (ACK_PAYLOAD, CounterReceiver, PreconditionError, SenderState,
                           adv_cur, can_adv_cur, can_timeout, cum_ack, cumackp, max_rcvd,
                           rcv_ack, rcv_pkt, rcvd_subset, receiver_from_set, receiver_init,
                           sender_init, sender_invariant_violation, sender_monotone_violation,
                           snd_ack, timeout)


def test_sender_init():
    assert sender_init(4) == SenderState(4, 1, None, 1)
    with pytest.raises(ValueError):
        SenderState(0)


def test_rcv_ack_examples():
    s = SenderState(10, 1, 1, 2)
    assert rcv_ack(s, 2) == SenderState(10, 2, 1, 2)
    assert rcv_ack(s, 1) == s
    assert rcv_ack(s, 3) == s


def test_rcv_ack_pulls_cur_forward():
    s = SenderState(5, 1, 4, 1)  # after a timeout
    assert rcv_ack(s, 3) == SenderState(5, 3, 4, 3)


def test_adv_cur_examples():
    s, ev = adv_cur(SenderState(2), "p")
    assert (ev.kind, ev.dg.id, ev.dg.payload) == ("snd_s", 1, "p")
    assert s == SenderState(2, 1, 1, 2)
    full = SenderState(2, 1, 2, 3)
    assert not can_adv_cur(full)
    with pytest.raises(PreconditionError) as info:
        adv_cur(full)
    assert info.value.component == "sender" and info.value.rule == "window-full"


def test_retransmission_keeps_hip():
    s = SenderState(3, 1, 3, 4)
    s = timeout(s)
    s, ev = adv_cur(s)
    assert ev.dg.id == 1 and s.hiP == 3 and s.cur == 2


def test_timeout_examples():
    s = timeout(SenderState(3, 1, 3, 4))
    assert s == SenderState(3, 1, 3, 1)
    with pytest.raises(PreconditionError):
        timeout(s)
    ids = []
    for _ in range(3):
        s, ev = adv_cur(s)
        ids.append(ev.dg.id)
    assert ids == [1, 2, 3] and can_timeout(s)


def test_receiver_examples():
    r = rcv_pkt(receiver_init(), 1)
    assert r.rcvd == {1}
    assert rcv_pkt(r, 3).rcvd == {1}
    assert rcv_pkt(receiver_from_set({1}, buffer_ooo=True), 3).rcvd == {1, 3}


def test_cum_ack_examples():
    assert cum_ack(receiver_init()) == 1
    assert cum_ack(receiver_from_set({1, 2, 3})) == 4
    assert cum_ack(receiver_from_set({1, 3}, buffer_ooo=True)) == 2
    with pytest.raises(ValueError):
        receiver_from_set({1, 3})


def test_snd_ack_examples():
    r = receiver_from_set({1, 2})
    ev = snd_ack(r)
    assert (ev.kind, ev.dg.id, ev.dg.payload) == ("snd_r", 3, ACK_PAYLOAD)
    assert snd_ack(r) == ev


def test_buffered_gap_fill_collapses_prefix():
    r = receiver_init(True)
    for i in (3, 5, 2, 1):
        r = rcv_pkt(r, i)
    assert r.prefix == 3 and r.extra == {5} and cum_ack(r) == 4 and max_rcvd(r) == 5
    r = rcv_pkt(r, 4)
    assert r.prefix == 5 and not r.extra


def test_cumackp_unique_on_all_small_sets():
    universe = range(1, 9)
    for k in range(9):
        for subset in combinations(universe, k):
            hits = [a for a in range(1, 11) if cumackp(subset, a)]
            assert len(hits) == 1
            r = receiver_from_set(subset, buffer_ooo=True)
            assert hits == [cum_ack(r)]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 12), max_size=40))
def test_default_receiver_matches_counter(ids):
    r, c = receiver_init(), CounterReceiver()
    for i in ids:
        before = r
        r, c = rcv_pkt(r, i), c.rcv_pkt(i)
        assert rcvd_subset(before, r)
        assert r.rcvd == set(range(1, c.p + 1))
        assert cum_ack(r) == c.cum_ack() and max_rcvd(r) == c.p


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 12), max_size=40))
def test_buffered_receiver_collects_everything(ids):
    r = receiver_init(True)
    for i in ids:
        before = r
        r = rcv_pkt(r, i)
        assert rcvd_subset(before, r)
    assert r.rcvd == set(ids)
    assert cumackp(r.rcvd, cum_ack(r))


sender_moves = st.lists(st.one_of(st.just(("adv",)), st.just(("timeout",)),
                                  st.tuples(st.just("ack"), st.integers(1, 30))), max_size=120)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8), sender_moves)
def test_sender_invariants_under_any_enabled_moves(N, moves):
    s = sender_init(N)
    for m in moves:
        before = s
        if m[0] == "adv":
            if not can_adv_cur(s):
                continue
            s, _ = adv_cur(s)
        elif m[0] == "timeout":
            if not can_timeout(s):
                continue
            s = timeout(s)
        else:
            s = rcv_ack(s, m[1])
        assert sender_invariant_violation(s) is None
        assert sender_monotone_violation(before, s) is None


def test_invariant_checkers_report_violations():
    assert sender_invariant_violation(SenderState(3, 4, 1, 4)) is not None
    assert sender_invariant_violation(SenderState(3, 1, 2, 5)) is not None
    assert sender_monotone_violation(SenderState(3, 2, 2, 2), SenderState(3, 1, 2, 2)) is not None
