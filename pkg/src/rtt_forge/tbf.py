"""Token bucket filter channel, its token bound and its serial composition.

A TBF holds a bucket of tokens (refilled by ``rat`` per tick, capped at
``b_cap``) and a byte-capped list of datagrams, each with a remaining delay.
New datagrams go to the head of the list, so FIFO forwarding always takes the
last index.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .numerics import INF, ExtNat, ext_add, format_ext, is_ext_nat, parse_ext


@dataclass(frozen=True)
class Datagram:
    id: int
    payload: str = "p"

    def __post_init__(self):
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id < 1:
            raise ValueError(f"datagram ids are positive integers, got {self.id!r}")
        if not isinstance(self.payload, str):
            raise TypeError("payload must be a string")

    @property
    def size(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class TbfParams:
    b_cap: int
    d_cap: int
    rat: int
    ttl: ExtNat = INF

    def __post_init__(self):
        for name in ("b_cap", "d_cap", "rat"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.rat > self.b_cap:
            raise ValueError(f"refill rate {self.rat} exceeds bucket cap {self.b_cap}")
        if not is_ext_nat(self.ttl) or self.ttl == 0:
            raise ValueError(f"ttl must be a positive natural or INF, got {self.ttl!r}")


@dataclass(frozen=True)
class TimedDatagram:
    remaining: ExtNat
    dg: Datagram


def sz(data) -> int:
    return sum(td.dg.size for td in data)


@dataclass(frozen=True)
class TbfState:
    params: TbfParams
    bucket: int = 0
    data: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(self.data))
        if not 0 <= self.bucket <= self.params.b_cap:
            raise ValueError(f"bucket {self.bucket} outside [0, {self.params.b_cap}]")
        if sz(self.data) > self.params.d_cap:
            raise ValueError(f"data size {sz(self.data)} exceeds d_cap {self.params.d_cap}")

    @property
    def ids(self) -> list:
        return [td.dg.id for td in self.data]

    @property
    def size(self) -> int:
        return sz(self.data)


def tbf_init(params: TbfParams, bucket: int = 0) -> TbfState:
    return TbfState(params, bucket, ())


def _decrement(t: ExtNat) -> ExtNat:
    return t if t is INF else t - 1


def tick(t: TbfState) -> TbfState:
    data = []
    for td in t.data:
        rem = _decrement(td.remaining)
        if rem is INF or rem > 0:
            data.append(TimedDatagram(rem, td.dg))
    bucket = min(t.bucket + t.params.rat, t.params.b_cap)
    return TbfState(t.params, bucket, tuple(data))


def expired_on_tick(t: TbfState) -> list:
    """Ids that the next tick removes."""
    return [td.dg.id for td in t.data if td.remaining is not INF and td.remaining <= 1]


def decay(t: TbfState) -> TbfState:
    return replace(t, bucket=max(t.bucket - 1, 0))


def accepts(t: TbfState, dg: Datagram) -> bool:
    return t.size + dg.size <= t.params.d_cap


def process(t: TbfState, dg: Datagram) -> TbfState:
    """Enqueue ``dg`` at the head, or return ``t`` itself if it does not fit."""
    if not accepts(t, dg):
        return t
    return TbfState(t.params, t.bucket, (TimedDatagram(t.params.ttl, dg),) + t.data)


def _check_index(t: TbfState, i: int, what: str) -> None:
    if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(t.data):
        raise IndexError(f"{what} index {i!r} out of range for {len(t.data)} datagrams")


def drop(t: TbfState, i: int) -> TbfState:
    _check_index(t, i, "drop")
    return TbfState(t.params, t.bucket, t.data[:i] + t.data[i + 1:])


def can_forward(t: TbfState, i: int) -> bool:
    return 0 <= i < len(t.data) and t.data[i].dg.size <= t.bucket


def forward(t: TbfState, i: int):
    """Forward ``data[i]``; returns ``(new_state, datagram)``."""
    _check_index(t, i, "forward")
    dg = t.data[i].dg
    if dg.size > t.bucket:
        raise ValueError(f"forward needs {dg.size} tokens but bucket holds {t.bucket}")
    return TbfState(t.params, t.bucket - dg.size, t.data[:i] + t.data[i + 1:]), dg


def fifo_index(t: TbfState) -> int:
    if not t.data:
        raise IndexError("no datagram to forward")
    return len(t.data) - 1


# Single-TBF traces.  An op is ("tick", None), ("decay", None),
# ("process", Datagram), ("drop", i) or ("forward", i).

TBF_OPS = ("tick", "decay", "process", "drop", "forward")


def apply_op(t: TbfState, op: str, arg=None):
    """Apply one op; returns ``(new_state, forwarded_datagram_or_None)``."""
    if op == "tick":
        return tick(t), None
    if op == "decay":
        return decay(t), None
    if op == "process":
        return process(t, arg), None
    if op == "drop":
        return drop(t, arg), None
    if op == "forward":
        return forward(t, arg)
    raise ValueError(f"unknown TBF op {op!r}")


@dataclass(frozen=True)
class TraceRow:
    step: int
    op: str
    arg: str
    bucket: int
    sz_data: int
    ids: tuple


def _format_arg(op, arg) -> str:
    if op == "process":
        return f"{arg.id}:{arg.payload}"
    return "" if arg is None else str(arg)


def run_trace(t: TbfState, ops: Sequence):
    """Replay ``ops``; returns ``(final_state, rows, forwarded)``."""
    rows, forwarded = [], []
    for k, (op, arg) in enumerate(ops):
        t, out = apply_op(t, op, arg)
        if out is not None:
            forwarded.append(out)
        rows.append(TraceRow(k, op, _format_arg(op, arg), t.bucket, t.size, tuple(t.ids)))
    return t, rows, forwarded


TRACE_FIELDS = ("step", "op", "arg", "bucket", "sz_data", "ids")


def trace_to_csv(rows: Sequence[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in rows:
        w.writerow((r.step, r.op, r.arg, r.bucket, r.sz_data, " ".join(map(str, r.ids))))
    return buf.getvalue()


def trace_from_csv(text: str) -> list:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        ids = tuple(int(x) for x in rec["ids"].split())
        rows.append(TraceRow(int(rec["step"]), rec["op"], rec["arg"], int(rec["bucket"]),
                             int(rec["sz_data"]), ids))
    return rows


def token_bound_check(t: TbfState, ops: Sequence) -> bool:
    """Bytes forwarded between consecutive ticks never exceed the bucket
    value right after the opening tick.  Forwards before the first tick
    belong to no window and are not checked."""
    window_budget = None
    spent = 0
    for op, arg in ops:
        t, out = apply_op(t, op, arg)
        if op == "tick":
            window_budget, spent = t.bucket, 0
        elif out is not None and window_budget is not None:
            spent += out.size
            if spent > window_budget:
                return False
    return True


def state_invariant_violation(t: TbfState) -> Optional[str]:
    if not 0 <= t.bucket <= t.params.b_cap:
        return f"bucket {t.bucket} outside [0, {t.params.b_cap}]"
    if t.size > t.params.d_cap:
        return f"sz(data) = {t.size} exceeds d_cap {t.params.d_cap}"
    return None


# Abstract composition.

def compose_params(p1: TbfParams, p2: TbfParams) -> TbfParams:
    return TbfParams(p2.b_cap, p1.d_cap + p2.d_cap, p2.rat, ext_add(p1.ttl, p2.ttl))


def abstract_compose(t1: TbfState, t2: TbfState) -> TbfState:
    """A single TBF meant to simulate ``t1`` feeding ``t2``."""
    shifted = tuple(TimedDatagram(ext_add(td.remaining, t2.params.ttl), td.dg) for td in t1.data)
    return TbfState(compose_params(t1.params, t2.params), t2.bucket, shifted + t2.data)


def tbf_equiv(a: TbfState, b: TbfState) -> bool:
    """Equal parameters and equal id multisets; payloads, delays and bucket
    are ignored."""
    return a.params == b.params and Counter(a.ids) == Counter(b.ids)


# Serial composition replay.

@dataclass(frozen=True)
class SerialStep:
    """One step of ``F1 |> F2``.

    ``which`` is 1 or 2.  ``forward`` on F1 moves the datagram straight into
    F2 (it is lost if F2 is full); ``forward`` on F2 leaves the pair.
    ``process`` only exists for F1, since F2 is fed by F1's forwards.
    """

    op: str
    which: int
    arg: object = None

    def __str__(self):
        a = _format_arg(self.op, self.arg)
        return f"{self.op}{self.which}({a})"


class ScriptError(ValueError):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"step {index}: {message}")


@dataclass
class CompositionReport:
    serial: tuple  # (t1', t2')
    abstract: TbfState
    target: TbfState  # abstract_compose(t1', t2')
    equivalent: bool
    stepwise_equivalent: bool
    abstract_steps: list = field(default_factory=list)
    divergences: list = field(default_factory=list)

    def __bool__(self):
        return self.equivalent


def _index_of(t: TbfState, dg_id: int) -> int:
    for j, td in enumerate(t.data):
        if td.dg.id == dg_id:
            return j
    raise LookupError(dg_id)


def _serial_step(t1: TbfState, t2: TbfState, s: SerialStep):
    """Apply one serial step; returns ``(t1', t2', effect)`` where ``effect``
    records what the abstract side needs to mirror."""
    if s.which not in (1, 2):
        raise ValueError(f"step targets TBF {s.which!r}, expected 1 or 2")
    if s.op == "tick":
        if s.which == 1:
            return tick(t1), t2, {"expired": expired_on_tick(t1)}
        return t1, tick(t2), {"expired": expired_on_tick(t2)}
    if s.op == "decay":
        return (decay(t1), t2, {}) if s.which == 1 else (t1, decay(t2), {})
    if s.op == "process":
        if s.which != 1:
            raise ValueError("F2 only receives datagrams forwarded by F1")
        if not isinstance(s.arg, Datagram):
            raise ValueError("process needs a Datagram argument")
        n1 = process(t1, s.arg)
        return n1, t2, {"accepted": n1 is not t1}
    if s.op == "drop":
        if s.which == 1:
            return drop(t1, s.arg), t2, {"id": t1.data[s.arg].dg.id}
        return t1, drop(t2, s.arg), {"id": t2.data[s.arg].dg.id}
    if s.op == "forward":
        if s.which == 1:
            n1, dg = forward(t1, s.arg)
            n2 = process(t2, dg)
            return n1, n2, {"id": dg.id, "accepted": n2 is not t2}
        n2, dg = forward(t2, s.arg)
        return t1, n2, {"id": dg.id}
    raise ValueError(f"unknown op {s.op!r}")


def serial_step(t1: TbfState, t2: TbfState, s: SerialStep):
    """Apply one step of ``t1 |> t2``; returns ``(t1', t2')``."""
    n1, n2, _ = _serial_step(t1, t2, s)
    return n1, n2


def _abstract_moves(a: TbfState, s: SerialStep, effect: dict) -> list:
    """Abstract steps mirroring one serial step on a state ``a``.

    tick1 is a noop plus a drop per F1 age-out; tick2 is a tick plus a drop
    for anything that aged out of F2 but not out of the abstract copy;
    decay1 and the F1-to-F2 hop are noops (a hop refused by F2 is a drop);
    decay2, process1, drops and forward2 map to the same op, located by id.
    A process refused by F1 becomes an "offer": the abstract TBF processes
    it and, if it was accepted, drops it again.
    """
    if s.op == "tick":
        if s.which == 1:
            return [("drop", i) for i in effect["expired"]]
        moves = [("tick", None)]
        gone = set(expired_on_tick(a))
        moves += [("drop", i) for i in effect["expired"] if i not in gone]
        return moves
    if s.op == "decay":
        return [] if s.which == 1 else [("decay", None)]
    if s.op == "process":
        if effect["accepted"]:
            return [("process", s.arg)]
        # F1 lost it; the abstract TBF may have room, so erase it explicitly
        return [("offer", s.arg)]
    if s.op == "drop":
        return [("drop", effect["id"])]
    if s.which == 1:
        return [] if effect["accepted"] else [("drop", effect["id"])]
    return [("forward", effect["id"])]


def _apply_abstract(a: TbfState, moves: list):
    """Apply id-addressed abstract moves; returns ``(state, problems)``."""
    problems = []
    for op, arg in moves:
        if op == "offer":
            # process, then erase it again if the abstract TBF took it
            if accepts(a, arg):
                a = drop(process(a, arg), 0)
            continue
        if op in ("drop", "forward"):
            try:
                j = _index_of(a, arg)
            except LookupError:
                problems.append(f"{op} of id {arg}: not present in abstract TBF")
                continue
            if op == "forward" and not can_forward(a, j):
                problems.append(f"forward of id {arg}: abstract bucket {a.bucket} too small")
                continue
            a, _ = apply_op(a, op, j)
        else:
            before = a
            a, _ = apply_op(a, op, arg)
            if op == "process" and a is before:
                problems.append(f"process of id {arg.id}: abstract TBF refused it")
    return a, problems


def _check_fresh_ids(t1: TbfState, t2: TbfState) -> None:
    ids = t1.ids + t2.ids
    dup = [i for i, c in Counter(ids).items() if c > 1]
    if dup:
        raise ValueError(f"ids must be unique across both TBFs, repeated: {sorted(dup)}")


def simulate_serial(t1: TbfState, t2: TbfState, script: Sequence[SerialStep]) -> CompositionReport:
    """Replay ``script`` on ``t1 |> t2`` and mirror it on ``t1 (+) t2``.

    ``equivalent`` compares the mirrored abstract state with the composition
    of the final serial pair.  ``stepwise_equivalent`` checks each step on
    its own: the mirrored moves applied to the composition of the pre-state
    must land on a state equivalent to the composition of the post-state.
    """
    _check_fresh_ids(t1, t2)
    a = abstract_compose(t1, t2)
    abstract_steps, divergences = [], []
    stepwise = True
    for k, s in enumerate(script):
        if s.op == "process":
            dg = s.arg
            if isinstance(dg, Datagram) and dg.id in set(t1.ids) | set(t2.ids):
                raise ScriptError(k, f"id {dg.id} is still in flight")
        try:
            n1, n2, effect = _serial_step(t1, t2, s)
        except (ValueError, IndexError) as exc:
            raise ScriptError(k, str(exc)) from None
        moves = _abstract_moves(a, s, effect)
        abstract_steps.append((k, moves))
        a, problems = _apply_abstract(a, moves)
        divergences += [(k, p) for p in problems]

        local, local_problems = _apply_abstract(abstract_compose(t1, t2),
                                                _abstract_moves(abstract_compose(t1, t2), s, effect))
        if local_problems or not tbf_equiv(local, abstract_compose(n1, n2)):
            stepwise = False
        t1, t2 = n1, n2

    target = abstract_compose(t1, t2)
    equivalent = tbf_equiv(a, target)
    if not equivalent:
        extra = Counter(a.ids) - Counter(target.ids)
        missing = Counter(target.ids) - Counter(a.ids)
        divergences.append((len(script), f"abstract has extra ids {sorted(extra.elements())}, "
                                         f"missing {sorted(missing.elements())}"))
    return CompositionReport((t1, t2), a, target, equivalent, stepwise, abstract_steps, divergences)


def format_state(t: TbfState) -> str:
    items = ", ".join(f"{td.dg.id}@{format_ext(td.remaining)}" for td in t.data)
    p = t.params
    return (f"TBF(b_cap={p.b_cap}, d_cap={p.d_cap}, rat={p.rat}, ttl={format_ext(p.ttl)}, "
            f"bucket={t.bucket}, data=[{items}])")


def params_from_dict(d: dict) -> TbfParams:
    ttl = d.get("ttl", "inf")
    ttl = parse_ext(str(ttl))
    return TbfParams(int(d["b_cap"]), int(d["d_cap"]), int(d["rat"]), ttl)
