"""Observable executions of a sender, a channel and a receiver.

An execution is a finite sequence of id-carrying actions.  The sender emits
``snd_s`` and is delivered ``dlvr_r`` (acknowledgements); the receiver is
delivered ``dlv_r`` (packets) and emits ``snd_r``.  Ids are positive; zero is
reserved for "undefined".
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

SND_S = "snd_s"
DLV_R = "dlv_r"
SND_R = "snd_r"
DLVR_R = "dlvr_r"

KINDS = (SND_S, DLV_R, SND_R, DLVR_R)
SENDER_KINDS = (SND_S, DLVR_R)

ACTOR = {SND_S: "sender", DLVR_R: "sender", DLV_R: "receiver", SND_R: "receiver"}


@dataclass(frozen=True)
class Action:
    kind: str
    id: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id < 1:
            raise ValueError(f"action ids are positive integers, got {self.id!r}")

    @property
    def is_sender_event(self) -> bool:
        return self.kind in SENDER_KINDS

    def __str__(self):
        return f"{self.kind}({self.id})"


def SndS(i: int) -> Action:
    return Action(SND_S, i)


def DlvR(i: int) -> Action:
    return Action(DLV_R, i)


def SndR(i: int) -> Action:
    return Action(SND_R, i)


def DlvrR(i: int) -> Action:
    return Action(DLVR_R, i)


Execution = tuple  # of Action


class InvalidExecution(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:3])
        super().__init__(f"invalid execution: {shown}")


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    detail: str = ""

    def __str__(self):
        return f"[{self.index}] {self.rule}: {self.detail}"


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


# Rule names used in validity reports.
RULE_PACKET_DELIVERY = "delivery-without-send"
RULE_ACK_DELIVERY = "ack-delivery-without-send"
RULE_SENDER_ORDER = "sender-order"
RULE_ACK_MONOTONE = "ack-monotone"


def validate(e: Sequence[Action]) -> ValidityReport:
    sent_packets = set()
    sent_acks = set()
    last_ack = 0
    violations = []
    for idx, a in enumerate(e):
        if a.kind == SND_S:
            if a.id > 1 and (a.id - 1) not in sent_packets:
                violations.append(Violation(idx, RULE_SENDER_ORDER,
                                            f"snd_s({a.id}) before snd_s({a.id - 1})"))
            sent_packets.add(a.id)
        elif a.kind == DLV_R:
            if a.id not in sent_packets:
                violations.append(Violation(idx, RULE_PACKET_DELIVERY,
                                            f"dlv_r({a.id}) without prior snd_s({a.id})"))
        elif a.kind == SND_R:
            if a.id < last_ack:
                violations.append(Violation(idx, RULE_ACK_MONOTONE,
                                            f"snd_r({a.id}) after snd_r({last_ack})"))
            last_ack = max(last_ack, a.id)
            sent_acks.add(a.id)
        else:
            if a.id not in sent_acks:
                violations.append(Violation(idx, RULE_ACK_DELIVERY,
                                            f"dlvr_r({a.id}) without prior snd_r({a.id})"))
    return ValidityReport(tuple(violations))


def require_valid(e: Sequence[Action]) -> None:
    report = validate(e)
    if not report.ok:
        raise InvalidExecution(report.violations)


def is_fifo_ack(e: Sequence[Action]) -> bool:
    """Delivered acks always form a prefix of transmitted acks."""
    require_valid(e)
    sent = []
    delivered = 0
    for a in e:
        if a.kind == SND_R:
            sent.append(a.id)
        elif a.kind == DLVR_R:
            if delivered >= len(sent) or sent[delivered] != a.id:
                return False
            delivered += 1
    return True


def sender_clock(e: Sequence[Action]) -> list:
    """Clock value at which each event is observed by the sender's monitor.

    The clock starts at 1 and advances after every sender event; events of
    other actors read the current value without advancing it.
    """
    tau = 1
    out = []
    for a in e:
        out.append(tau)
        if a.is_sender_event:
            tau += 1
    return out


def rtt(e: Sequence[Action], i: int) -> Optional[int]:
    """Round-trip time of packet ``i`` on the sender clock, or None.

    Measured from the first ``snd_s(i)`` to the first delivered ack that
    covers ``i`` (id > i).  Undefined when no such ack was delivered or when
    ``i`` was transmitted more than once before it.
    """
    require_valid(e)
    clock = sender_clock(e)
    first_send = None
    sends = 0
    for idx, a in enumerate(e):
        if a.kind == SND_S and a.id == i:
            sends += 1
            if first_send is None:
                first_send = idx
        elif a.kind == DLVR_R and a.id > i:
            if sends != 1:
                return None
            return clock[idx] - clock[first_send]
    return None


@dataclass(frozen=True)
class ExecConfig:
    n_packets: int
    loss_rate: Fraction = Fraction(0)
    reorder_window: int = 0
    allow_ack_loss: bool = False
    fifo_acks: bool = False
    max_retransmissions: int = 0
    seed: int = 0
    allow_duplication: bool = False

    def __post_init__(self):
        if self.n_packets < 0:
            raise ValueError("n_packets must be non-negative")
        lr = Fraction(self.loss_rate)
        if not (0 <= lr < 1):
            raise ValueError("loss_rate must lie in [0, 1)")
        object.__setattr__(self, "loss_rate", lr)
        if self.reorder_window < 0 or self.max_retransmissions < 0:
            raise ValueError("reorder_window and max_retransmissions are naturals")


def _coin(rng: random.Random, p: Fraction) -> bool:
    return p > 0 and rng.randrange(p.denominator) < p.numerator


def gen_execution(cfg: ExecConfig) -> Execution:
    """Random valid execution driven by a seeded scheduler.

    The receiver acknowledges cumulatively (one ``snd_r`` per delivered
    packet).  With ``fifo_acks`` acknowledgements are never lost and are
    delivered in transmission order.
    """
    rng = random.Random(cfg.seed)
    events = []
    next_new = 1
    retx_left = cfg.max_retransmissions
    to_receiver = []  # in-flight packet ids, oldest first
    to_sender = []  # in-flight ack ids, oldest first
    delivered = set()
    expected = 1
    ack_loss = cfg.allow_ack_loss and not cfg.fifo_acks
    ack_window = 0 if cfg.fifo_acks else cfg.reorder_window

    while True:
        moves = []
        if next_new <= cfg.n_packets:
            moves += ["send"] * 2
        if retx_left > 0 and next_new > 1:
            moves.append("retx")
        if to_receiver:
            moves += ["deliver"] * 2
        if to_sender:
            moves += ["ack"] * 2
        if not moves:
            break
        move = rng.choice(moves)
        if move == "send":
            events.append(SndS(next_new))
            to_receiver.append(next_new)
            next_new += 1
        elif move == "retx":
            pkt = rng.randrange(1, next_new)
            events.append(SndS(pkt))
            to_receiver.append(pkt)
            retx_left -= 1
        elif move == "deliver":
            k = rng.randrange(min(len(to_receiver), cfg.reorder_window + 1))
            pkt = to_receiver[k]
            if cfg.allow_duplication and _coin(rng, Fraction(1, 10)):
                pass
            else:
                to_receiver.pop(k)
            if _coin(rng, cfg.loss_rate):
                continue
            events.append(DlvR(pkt))
            delivered.add(pkt)
            while expected in delivered:
                expected += 1
            events.append(SndR(expected))
            to_sender.append(expected)
        else:
            k = rng.randrange(min(len(to_sender), ack_window + 1))
            ack = to_sender.pop(k)
            if ack_loss and _coin(rng, cfg.loss_rate):
                continue
            events.append(DlvrR(ack))
    return tuple(events)


def sender_projection(e: Iterable[Action]) -> list:
    return [(idx, a) for idx, a in enumerate(e) if a.is_sender_event]


CSV_FIELDS = ("index", "actor", "action", "id")


def write_execution_csv(e: Sequence[Action], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for idx, a in enumerate(e):
        w.writerow((idx, ACTOR[a.kind], a.kind, a.id))


def read_execution_csv(fh) -> Execution:
    rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["index"]))
    events = []
    for expected, row in enumerate(rows):
        if int(row["index"]) != expected:
            raise ValueError(f"execution CSV indices must be 0..n-1, gap at {expected}")
        a = Action(row["action"].strip(), int(row["id"]))
        if row.get("actor") and row["actor"].strip() != ACTOR[a.kind]:
            raise ValueError(f"row {expected}: actor {row['actor']!r} does not match {a.kind}")
        events.append(a)
    return tuple(events)


def execution_to_csv(e: Sequence[Action]) -> str:
    buf = io.StringIO()
    write_execution_csv(e, buf)
    return buf.getvalue()


def execution_from_csv(text: str) -> Execution:
    return read_execution_csv(io.StringIO(text))
