"""The composite Go-Back-N system: a sender, a receiver and one TBF per
direction, stepped by seven kinds of transition.

Also builds the best-case and over-transmission scripts and carries the
simplified model (bare ids in the forward channel) used as an independent
oracle for the channel warm-up.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

from . import gbn, tbf
from .gbn import (Event, PreconditionError, ReceiverState, SenderState, cum_ack,
                  receiver_init, sender_init)
from .numerics import INF, format_ext, format_rational
from .tbf import Datagram, TbfParams, TbfState

SCHEMA = "rtt-forge/1"

SENDER_SND = "SenderSnd"
RECEIVER_SND = "ReceiverSnd"
SENDER_TIMEOUT = "SenderTimeout"
TBF_S_INTERNAL = "TbfSRInternal"  # internal step of tbf_s (sender -> receiver)
TBF_R_INTERNAL = "TbfRSInternal"  # internal step of tbf_r (receiver -> sender)
SENDER_RCV = "SenderRcv"
RECEIVER_RCV = "ReceiverRcv"

STEP_KINDS = (SENDER_SND, RECEIVER_SND, SENDER_TIMEOUT, TBF_S_INTERNAL,
              TBF_R_INTERNAL, SENDER_RCV, RECEIVER_RCV)
INTERNAL_OPS = ("tick", "decay", "drop")


@dataclass(frozen=True)
class Step:
    kind: str
    arg: object = None  # payload, forward index, or (op, index) for internal steps

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")

    def __str__(self):
        if self.kind in (TBF_S_INTERNAL, TBF_R_INTERNAL):
            op, i = self.arg
            return f"{self.kind}({op})" if i is None else f"{self.kind}({op},{i})"
        return self.kind if self.arg is None else f"{self.kind}({self.arg})"


def SenderSnd(payload: str = "p") -> Step:
    return Step(SENDER_SND, payload)


def ReceiverSnd() -> Step:
    return Step(RECEIVER_SND)


def SenderTimeout() -> Step:
    return Step(SENDER_TIMEOUT)


def TbfSRInternal(op: str, i: Optional[int] = None) -> Step:
    return Step(TBF_S_INTERNAL, (op, i))


def TbfRSInternal(op: str, i: Optional[int] = None) -> Step:
    return Step(TBF_R_INTERNAL, (op, i))


def SenderRcv(i: int) -> Step:
    return Step(SENDER_RCV, i)


def ReceiverRcv(i: int) -> Step:
    return Step(RECEIVER_RCV, i)


@dataclass(frozen=True)
class SystemState:
    sender: SenderState
    receiver: ReceiverState
    tbf_s: TbfState
    tbf_r: TbfState


def system_init(N: int, params_s: TbfParams, params_r: TbfParams,
                buffer_ooo: bool = False) -> SystemState:
    if min(params_r.d_cap, params_r.b_cap) < len(gbn.ACK_PAYLOAD):
        raise ValueError("tbf_r needs min(d_cap, b_cap) >= 3 to carry an ACK")
    return SystemState(sender_init(N), receiver_init(buffer_ooo),
                       tbf.tbf_init(params_s), tbf.tbf_init(params_r))


def _forward(t: TbfState, i, component: str):
    if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(t.data):
        raise PreconditionError(component, "forward-index",
                                f"index {i!r} with {len(t.data)} datagrams queued")
    if not tbf.can_forward(t, i):
        raise PreconditionError(component, "insufficient-tokens",
                                f"needs {t.data[i].dg.size}, bucket holds {t.bucket}")
    return tbf.forward(t, i)


def _internal(t: TbfState, arg, component: str) -> TbfState:
    op, i = arg
    if op == "tick":
        return tbf.tick(t)
    if op == "decay":
        return tbf.decay(t)
    if op == "drop":
        if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(t.data):
            raise PreconditionError(component, "drop-index",
                                    f"index {i!r} with {len(t.data)} datagrams queued")
        return tbf.drop(t, i)
    raise PreconditionError(component, "unknown-internal-op", repr(op))


def sys_step(sys: SystemState, step: Step):
    """Apply one step; returns ``(new_state, event_or_None)``."""
    k = step.kind
    if k == SENDER_SND:
        if not gbn.can_adv_cur(sys.sender):
            raise PreconditionError("sender", "window-full",
                                    f"cur={sys.sender.cur}, hiA + N = {sys.sender.hiA + sys.sender.N}")
        s, ev = gbn.adv_cur(sys.sender, step.arg)
        return replace(sys, sender=s, tbf_s=tbf.process(sys.tbf_s, ev.dg)), ev
    if k == RECEIVER_SND:
        ev = gbn.snd_ack(sys.receiver)
        return replace(sys, tbf_r=tbf.process(sys.tbf_r, ev.dg)), ev
    if k == SENDER_TIMEOUT:
        if not gbn.can_timeout(sys.sender):
            raise PreconditionError("sender", "timeout-before-window-sent",
                                    f"cur={sys.sender.cur}, hiA + N = {sys.sender.hiA + sys.sender.N}")
        return replace(sys, sender=gbn.timeout(sys.sender)), None
    if k == TBF_S_INTERNAL:
        return replace(sys, tbf_s=_internal(sys.tbf_s, step.arg, "tbf_s")), None
    if k == TBF_R_INTERNAL:
        return replace(sys, tbf_r=_internal(sys.tbf_r, step.arg, "tbf_r")), None
    if k == SENDER_RCV:
        t, dg = _forward(sys.tbf_r, step.arg, "tbf_r")
        return replace(sys, tbf_r=t, sender=gbn.rcv_ack(sys.sender, dg.id)), Event("dlvr_r", dg)
    t, dg = _forward(sys.tbf_s, step.arg, "tbf_s")
    return replace(sys, tbf_s=t, receiver=gbn.rcv_pkt(sys.receiver, dg.id)), Event("dlv_r", dg)


# Canonical form and digest.

def _tbf_canon(t: TbfState) -> dict:
    p = t.params
    return {"b_cap": p.b_cap, "d_cap": p.d_cap, "rat": p.rat, "ttl": format_ext(p.ttl),
            "bucket": t.bucket,
            "data": [[format_ext(td.remaining), td.dg.id, td.dg.payload] for td in t.data]}


def canonical(sys: SystemState) -> dict:
    s, r = sys.sender, sys.receiver
    return {"sender": {"N": s.N, "hiA": s.hiA, "hiP": s.hiP, "cur": s.cur},
            "receiver": {"prefix": r.prefix, "extra": sorted(r.extra), "buffer_ooo": r.buffer_ooo},
            "tbf_s": _tbf_canon(sys.tbf_s), "tbf_r": _tbf_canon(sys.tbf_r)}


def digest(sys: SystemState) -> str:
    blob = json.dumps(canonical(sys), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# Replay.

class ReplayError(ValueError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"step {index}: {cause}")


@dataclass(frozen=True)
class TraceEntry:
    pre: str
    step: Step
    event: Optional[Event]
    post: str


@dataclass
class Trace:
    initial: SystemState
    final: SystemState
    entries: list = field(default_factory=list)
    packets_received: int = 0  # ReceiverRcv steps, duplicates included
    dlv_events: int = 0  # ReceiverRcv steps that grew rcvd
    snapshots: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)


def _check_step_invariants(before: SystemState, after: SystemState) -> Optional[str]:
    bad = gbn.sender_invariant_violation(after.sender) or \
        gbn.sender_monotone_violation(before.sender, after.sender)
    if bad:
        return bad
    if not before.receiver.rcvd <= after.receiver.rcvd:
        return "receiver lost a received id"
    return tbf.state_invariant_violation(after.tbf_s) or tbf.state_invariant_violation(after.tbf_r)


def replay(sys0: SystemState, script: Sequence[Step], check_invariants: bool = False,
           snapshots: Sequence[int] = ()) -> Trace:
    """Run ``script`` from ``sys0``.

    ``snapshots`` lists step counts after which the state is recorded in
    ``trace.snapshots`` (0 means the initial state).
    """
    trace = Trace(sys0, sys0)
    wanted = set(snapshots)
    if 0 in wanted:
        trace.snapshots[0] = sys0
    sys, pre = sys0, digest(sys0)
    for k, step in enumerate(script):
        try:
            nxt, ev = sys_step(sys, step)
        except (PreconditionError, ValueError, IndexError) as exc:
            raise ReplayError(k, exc) from None
        if check_invariants:
            bad = _check_step_invariants(sys, nxt)
            if bad:
                raise ReplayError(k, AssertionError(bad))
        if step.kind == RECEIVER_RCV:
            trace.packets_received += 1
            if nxt.receiver is not sys.receiver:
                trace.dlv_events += 1
        post = digest(nxt)
        trace.entries.append(TraceEntry(pre, step, ev, post))
        sys, pre = nxt, post
        if k + 1 in wanted:
            trace.snapshots[k + 1] = sys
    trace.final = sys
    return trace


def efficiency(trace: Trace) -> Fraction:
    """Useful receives over all receives.

    A receive is useful when it extends the in-order prefix, so this is the
    growth of the cumulative ack over the trace divided by the receive count;
    from an empty receiver it is ``max(rcvd) / receives``.
    """
    if trace.packets_received == 0:
        raise ValueError("efficiency needs at least one receive")
    gained = cum_ack(trace.final.receiver) - cum_ack(trace.initial.receiver)
    return Fraction(gained, trace.packets_received)


def efficiency_of_receives(ids: Sequence[int], buffer_ooo: bool = False) -> Fraction:
    """Efficiency of a receiver fed ``ids`` in order, starting empty."""
    if not ids:
        raise ValueError("efficiency needs at least one receive")
    r = receiver_init(buffer_ooo)
    for i in ids:
        r = gbn.rcv_pkt(r, i)
    return Fraction(cum_ack(r) - 1, len(ids))


TRACE_FIELDS = ("index", "step", "event", "hiA", "hiP", "cur", "cum_ack",
                "tbf_s_ids", "tbf_r_ids", "pre", "post")


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    sys = trace.initial
    for k, e in enumerate(trace.entries):
        sys, _ = sys_step(sys, e.step)
        s = sys.sender
        w.writerow((k, str(e.step), "" if e.event is None else str(e.event), s.hiA,
                    "" if s.hiP is None else s.hiP, s.cur, cum_ack(sys.receiver),
                    " ".join(map(str, sys.tbf_s.ids)), " ".join(map(str, sys.tbf_r.ids)),
                    e.pre, e.post))
    return buf.getvalue()


def trace_rows_from_csv(text: str) -> list:
    return [dict(r) for r in csv.DictReader(io.StringIO(text))]


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# Best case.

def best_case_params():
    """One-byte packets through tbf_s; tbf_r wide enough for one ACK."""
    return TbfParams(1, 1, 1, 2), TbfParams(3, 3, 3, 2)


def build_best_case(N: int, windows: int = 1, params_s: Optional[TbfParams] = None,
                    params_r: Optional[TbfParams] = None):
    """Per window: send, tick, receive for each packet, then one ACK round trip."""
    if N < 1 or windows < 1:
        raise ValueError("N and windows must be positive")
    ps, pr = best_case_params()
    ps, pr = params_s or ps, params_r or pr
    for name, p in (("ttl_s", ps.ttl), ("ttl_r", pr.ttl)):
        if p is not INF and p <= 1:
            raise ValueError(f"{name} must exceed 1 so datagrams survive one tick")
    sys0 = system_init(N, ps, pr)
    script = []
    for _ in range(windows):
        for _ in range(N):
            script += [SenderSnd("p"), TbfSRInternal("tick"), ReceiverRcv(0)]
        script += [ReceiverSnd(), TbfRSInternal("tick"), SenderRcv(0)]
    return sys0, script


# Over-transmission.

def steps_to_fill(R: int, b: int, d_cap: int) -> int:
    if not 0 < b < R < d_cap:
        raise ValueError(f"steps_to_fill needs 0 < b < R < d_cap, got b={b}, R={R}, d_cap={d_cap}")
    if (d_cap - R) % (R - b):
        raise ValueError(f"R - b = {R - b} does not divide d_cap - R = {d_cap - R}")
    return (d_cap - R) // (R - b)


def predicted_overtx_eff(R, rat, d_cap, N) -> Fraction:
    if not 0 < rat < R < d_cap < N:
        raise ValueError(f"need 0 < rat < R < d_cap < N, got rat={rat}, R={R}, d_cap={d_cap}, N={N}")
    delivered = Fraction(R * (d_cap - R), R - rat) + R + rat
    return delivered / N


def check_overtx_params(N: int, R: int, rat: int, d_cap: int) -> None:
    if not 0 < rat < R:
        raise ValueError(f"no over-transmission unless rat < R (rat={rat}, R={R})")
    if not R < d_cap < N:
        raise ValueError(f"need R < d_cap < N (R={R}, d_cap={d_cap}, N={N})")
    w = steps_to_fill(R, rat, d_cap)
    if not R * w + R + rat < N:
        raise ValueError(f"over-transmission needs (w + 1) R + rat < N, "
                         f"got {(w + 1) * R + rat} >= {N}")


@dataclass
class OvertxPlan:
    sys0: SystemState
    script: list
    burst_ends: list  # script length after each burst of the first window
    warmup: int


def build_overtx(N: int, R: int, rat: int, d_cap: int, ttl_r: int = 2) -> OvertxPlan:
    """Script of the over-transmission pattern, built by stepping the system.

    Each burst sends up to R packets, ticks tbf_s and forwards as many
    packets FIFO as its bucket allows.  Once the window is spent, tbf_s
    drains and the sender times out.  The receiver acknowledges as soon as it
    has received N packets since its last ACK; that ACK round trip ends the
    script.
    """
    check_overtx_params(N, R, rat, d_cap)
    ps = TbfParams(rat, d_cap, rat, INF)
    pr = TbfParams(3, 3, 3, ttl_r)
    sys0 = system_init(N, ps, pr)
    sys = sys0
    script, burst_ends = [], []
    received = 0
    first_window = True

    def run(step):
        nonlocal sys
        sys, _ = sys_step(sys, step)
        script.append(step)

    def deliver() -> bool:
        nonlocal received
        for _ in range(min(sys.tbf_s.bucket, len(sys.tbf_s.data))):
            run(ReceiverRcv(tbf.fifo_index(sys.tbf_s)))
            received += 1
            if received == N:
                run(ReceiverSnd())
                run(TbfRSInternal("tick"))
                run(SenderRcv(0))
                return True
        return False

    while True:
        while gbn.can_adv_cur(sys.sender):
            s = sys.sender
            for _ in range(min(R, s.hiA + s.N - s.cur)):
                run(SenderSnd("p"))
            run(TbfSRInternal("tick"))
            if deliver():
                return OvertxPlan(sys0, script, burst_ends, steps_to_fill(R, rat, d_cap))
            if first_window:
                burst_ends.append(len(script))
        first_window = False
        while sys.tbf_s.data:
            run(TbfSRInternal("tick"))
            if deliver():
                return OvertxPlan(sys0, script, burst_ends, steps_to_fill(R, rat, d_cap))
        run(SenderTimeout())


def summary(trace: Trace, predicted: Optional[Fraction] = None) -> dict:
    eff = efficiency(trace)
    out = {"schema": SCHEMA, "efficiency": format_rational(eff), "steps": len(trace)}
    if predicted is not None:
        out["predicted"] = format_rational(predicted)
        out["match"] = eff == predicted
    return out


# Simplified model: the forward channel as bare ids, head first.

@dataclass(frozen=True)
class SimplifiedModel:
    chan: tuple
    d_cap: int
    ack: int
    cur: int
    hiA: int
    N: int


def simplify(sys: SystemState) -> SimplifiedModel:
    s = sys.sender
    return SimplifiedModel(tuple(sys.tbf_s.ids), sys.tbf_s.params.d_cap, cum_ack(sys.receiver),
                           s.cur, s.hiA, s.N)


def single_step_simplified(sm: SimplifiedModel, R: int, b: int) -> SimplifiedModel:
    """Send R one-byte packets (lost when the channel is full), then deliver
    up to b of the oldest."""
    chan, cur, ack = list(sm.chan), sm.cur, sm.ack
    for _ in range(R):
        if len(chan) < sm.d_cap:
            chan.insert(0, cur)
        cur += 1
    for _ in range(min(b, len(chan))):
        if chan.pop() == ack:
            ack += 1
    return replace(sm, chan=tuple(chan), cur=cur, ack=ack)


def many_steps_simplified(sm: SimplifiedModel, R: int, b: int, steps: int) -> SimplifiedModel:
    if steps < 1:
        raise ValueError("steps must be positive")
    if sm.cur + R * steps > sm.hiA + sm.N:
        raise ValueError("the bursts overrun the sender's window")
    for _ in range(steps):
        sm = single_step_simplified(sm, R, b)
    return sm


def top_dn(top: int, n: int) -> tuple:
    """The descending run ``top, top - 1, ...`` of length ``n``."""
    return tuple(range(top, top - n, -1))
