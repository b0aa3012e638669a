from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtt_forge import gbn
from rtt_forge.system import (ReceiverRcv, ReceiverSnd, ReplayError, SenderRcv, SenderSnd,
                              SenderTimeout, SimplifiedModel, TbfRSInternal, TbfSRInternal,
                              best_case_params, build_best_case, build_overtx,
                              check_overtx_params, digest, efficiency, efficiency_of_receives,
                              many_steps_simplified, predicted_overtx_eff, replay, rows_to_csv,
                              simplify, single_step_simplified, steps_to_fill, summary, sys_step,
                              system_init, top_dn, trace_rows_from_csv, trace_to_csv)
from rtt_forge.tbf import TbfParams

ROUND_TRIP = [SenderSnd("p"), TbfSRInternal("tick"), ReceiverRcv(0),
              ReceiverSnd(), TbfRSInternal("tick"), SenderRcv(0)]


def fresh(N=3):
    return system_init(N, *best_case_params())


def test_sender_send_only_touches_sender_and_forward_channel():
    s0 = fresh()
    s1, ev = sys_step(s0, SenderSnd("p"))
    assert (ev.kind, ev.dg.id, ev.dg.payload) == ("snd_s", 1, "p")
    assert s1.tbf_s.ids == [1]
    assert s1.receiver == s0.receiver and s1.tbf_r == s0.tbf_r


def test_receive_from_empty_channel_is_rejected():
    with pytest.raises(gbn.PreconditionError) as info:
        sys_step(fresh(), ReceiverRcv(0))
    assert info.value.component == "tbf_s"


def test_receive_without_tokens_is_rejected():
    s, _ = sys_step(fresh(), SenderSnd("p"))
    with pytest.raises(gbn.PreconditionError) as info:
        sys_step(s, ReceiverRcv(0))
    assert info.value.rule == "insufficient-tokens"


def test_one_packet_round_trip():
    trace = replay(fresh(), ROUND_TRIP, check_invariants=True)
    assert trace.final.sender.hiA == 2
    assert [e.event.kind if e.event else None for e in trace.entries] == \
        ["snd_s", None, "dlv_r", "snd_r", None, "dlvr_r"]
    assert trace.entries[3].event.dg.id == 2


def test_ack_tbf_must_carry_an_ack():
    with pytest.raises(ValueError):
        system_init(3, TbfParams(1, 1, 1), TbfParams(2, 3, 2))


def test_replay_basics():
    s0 = fresh()
    assert len(replay(s0, [])) == 0
    t1, t2 = replay(s0, ROUND_TRIP), replay(s0, ROUND_TRIP)
    assert t1.final == t2.final and [e.post for e in t1.entries] == [e.post for e in t2.entries]
    for a, b in zip(t1.entries, t1.entries[1:]):
        assert a.post == b.pre
    assert t1.entries[0].pre == digest(s0) and t1.entries[-1].post == digest(t1.final)


def test_replay_error_reports_index():
    with pytest.raises(ReplayError) as info:
        replay(fresh(), [SenderSnd("p"), SenderTimeout()])
    assert info.value.index == 1


def test_replay_snapshots():
    trace = replay(fresh(), ROUND_TRIP, snapshots=(0, 3, 6))
    assert sorted(trace.snapshots) == [0, 3, 6]
    assert trace.snapshots[3].receiver.rcvd == {1}


def test_efficiency_of_receive_sequences():
    # useful receives are the first 1, the first 2 and the 3
    assert efficiency_of_receives([1, 2, 2, 1, 3]) == F(3, 5)
    assert efficiency_of_receives([1, 2, 3, 4]) == 1
    assert efficiency_of_receives([1, 3, 4, 5, 6]) == F(1, 5)
    # with buffering the out-of-order packets count once the gap fills
    assert efficiency_of_receives([2, 3, 1], buffer_ooo=True) == 1


def test_trace_efficiency_counts_duplicates():
    s0 = system_init(2, TbfParams(1, 4, 1), TbfParams(3, 3, 3, 2))
    # packet 2 waits behind a resend of 1; FIFO forwarding takes the last index
    script = [SenderSnd("p"), TbfSRInternal("tick"), ReceiverRcv(0),
              SenderSnd("p"), SenderTimeout(), SenderSnd("p"),
              TbfSRInternal("tick"), ReceiverRcv(1), TbfSRInternal("tick"), ReceiverRcv(0)]
    trace = replay(s0, script)
    # receives 1, 2, 1
    assert trace.packets_received == 3 and trace.dlv_events == 2
    assert efficiency(trace) == F(2, 3)


@pytest.mark.parametrize("N", [1, 2, 5, 10])
def test_best_case(N):
    sys0, script = build_best_case(N)
    assert len(script) == 3 * N + 3
    trace = replay(sys0, script, check_invariants=True)
    assert efficiency(trace) == 1
    s = trace.final.sender
    assert (s.hiA, s.hiP, s.cur) == (N + 1, N, N + 1)


def test_best_case_five_windows():
    sys0, script = build_best_case(4, windows=5)
    trace = replay(sys0, script, check_invariants=True)
    assert efficiency(trace) == 1 and trace.final.sender.hiA == 21


def test_steps_to_fill_examples():
    assert steps_to_fill(10, 1, 100) == 10
    assert steps_to_fill(2, 1, 3) == 1
    with pytest.raises(ValueError):
        steps_to_fill(10, 1, 99)


def test_predicted_efficiency_arithmetic():
    # 10 * 90 / 9 + 10 + 1 = 111 useful packets of 200
    assert predicted_overtx_eff(10, 1, 100, 200) == F(111, 200)
    # N = 4000: 200 * 200 / 180 + 220 = 3980 / 9, over 4000
    assert predicted_overtx_eff(200, 20, 400, 4000) == F(199, 1800)


def test_predicted_efficiency_at_most_one_within_preconditions():
    seen = 0
    for N in range(20, 200, 7):
        for R in range(2, 30):
            for rat in range(1, R):
                for d_cap in range(R + 1, N, 5):
                    try:
                        check_overtx_params(N, R, rat, d_cap)
                    except ValueError:
                        continue
                    seen += 1
                    assert predicted_overtx_eff(R, rat, d_cap, N) <= 1
    assert seen > 100


def test_overtx_builder_refusals():
    check_overtx_params(120, 10, 1, 100)
    with pytest.raises(ValueError):
        build_overtx(111, 10, 1, 100)
    with pytest.raises(ValueError):
        build_overtx(200, 5, 5, 100)
    with pytest.raises(ValueError):
        build_overtx(200, 10, 1, 99)


def test_overtx_replays_and_matches_prediction():
    plan = build_overtx(200, 10, 1, 100)
    trace = replay(plan.sys0, plan.script, check_invariants=True)
    assert trace.packets_received == 200
    assert efficiency(trace) == F(111, 200)
    assert summary(trace, F(111, 200))["match"] is True


def test_overtx_warmup_state():
    N, R, rat, d_cap = 200, 10, 1, 100
    plan = build_overtx(N, R, rat, d_cap)
    w = plan.warmup
    trace = replay(plan.sys0, plan.script, snapshots=(plan.burst_ends[w - 1],))
    mid = trace.snapshots[plan.burst_ends[w - 1]]
    sm = simplify(mid)
    assert sm.cur == 1 + R * w
    assert sm.ack == 1 + rat * w
    assert sm.chan == top_dn(R * w, len(sm.chan))
    assert len(sm.chan) == d_cap - R


def test_simplified_model_matches_replay_in_warmup():
    N, R, rat, d_cap = 200, 10, 1, 100
    plan = build_overtx(N, R, rat, d_cap)
    trace = replay(plan.sys0, plan.script, snapshots=plan.burst_ends)
    sm = simplify(plan.sys0)
    for k, end in enumerate(plan.burst_ends[:plan.warmup + 1]):
        sm = single_step_simplified(sm, R, rat)
        assert sm == simplify(trace.snapshots[end]), k


def test_simplified_model_helpers():
    sm = SimplifiedModel((), 5, 1, 1, 1, 10)
    one = single_step_simplified(sm, 3, 1)
    assert one.chan == (3, 2) and one.ack == 2 and one.cur == 4
    assert many_steps_simplified(sm, 3, 1, 3) == \
        single_step_simplified(single_step_simplified(one, 3, 1), 3, 1)
    with pytest.raises(ValueError):
        many_steps_simplified(sm, 3, 1, 4)
    assert top_dn(5, 3) == (5, 4, 3) and top_dn(5, 0) == ()


def test_trace_csv_round_trip():
    trace = replay(fresh(), ROUND_TRIP)
    text = trace_to_csv(trace)
    rows = trace_rows_from_csv(text)
    assert len(rows) == 6 and rows[-1]["hiA"] == "2"
    assert rows_to_csv(rows) == text


steps = st.lists(st.one_of(
    st.just(SenderSnd("p")), st.just(ReceiverSnd()), st.just(SenderTimeout()),
    st.builds(TbfSRInternal, st.sampled_from(["tick", "decay"])),
    st.builds(TbfRSInternal, st.sampled_from(["tick", "decay"])),
    st.builds(ReceiverRcv, st.integers(0, 3)), st.builds(SenderRcv, st.integers(0, 2)),
    st.builds(TbfSRInternal, st.just("drop"), st.integers(0, 3))), max_size=80)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.booleans(), steps)
def test_enabled_steps_preserve_invariants(N, buffered, script):
    s = system_init(N, TbfParams(2, 4, 1, 3), TbfParams(3, 6, 3, 2), buffer_ooo=buffered)
    for step in script:
        try:
            nxt, _ = sys_step(s, step)
        except (gbn.PreconditionError, ValueError, IndexError):
            continue
        assert gbn.sender_invariant_violation(nxt.sender) is None
        assert gbn.sender_monotone_violation(s.sender, nxt.sender) is None
        assert s.receiver.rcvd <= nxt.receiver.rcvd
        s = nxt
