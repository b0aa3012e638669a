"""Go-Back-N sender and receiver as pure state-update functions."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .tbf import Datagram

ACK_PAYLOAD = "ACK"


class PreconditionError(ValueError):
    """A step was attempted whose guard does not hold."""

    def __init__(self, component: str, rule: str, detail: str = ""):
        self.component = component
        self.rule = rule
        msg = f"{component}: {rule}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


@dataclass(frozen=True)
class Event:
    """An observable event: ``snd_s``, ``snd_r``, ``dlv_r`` or ``dlvr_r``."""

    kind: str
    dg: Datagram

    def __str__(self):
        return f"{self.kind}({self.dg.id},{self.dg.payload!r})"


# Sender

@dataclass(frozen=True)
class SenderState:
    N: int
    hiA: int = 1
    hiP: Optional[int] = None
    cur: int = 1

    def __post_init__(self):
        for name in ("N", "hiA", "cur"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.hiP is not None and (not isinstance(self.hiP, int) or self.hiP < 1):
            raise ValueError(f"hiP must be absent or a positive integer, got {self.hiP!r}")

    @property
    def hiP0(self) -> int:
        return 0 if self.hiP is None else self.hiP


def sender_init(N: int) -> SenderState:
    return SenderState(N)


def rcv_ack(s: SenderState, a: int) -> SenderState:
    if s.hiA < a <= s.hiP0 + 1:
        return replace(s, hiA=a, cur=max(s.cur, a))
    return s


def can_adv_cur(s: SenderState) -> bool:
    return s.cur < s.hiA + s.N


def adv_cur(s: SenderState, payload: str = "p"):
    """Transmit packet ``cur``; returns ``(new_state, snd_s event)``."""
    if not can_adv_cur(s):
        raise PreconditionError("sender", "window-full", f"cur={s.cur} = hiA + N")
    ev = Event("snd_s", Datagram(s.cur, payload))
    return replace(s, hiP=max(s.hiP0, s.cur), cur=s.cur + 1), ev


def can_timeout(s: SenderState) -> bool:
    return s.cur == s.hiA + s.N


def timeout(s: SenderState) -> SenderState:
    if not can_timeout(s):
        raise PreconditionError("sender", "timeout-before-window-sent",
                                f"cur={s.cur}, hiA + N = {s.hiA + s.N}")
    return replace(s, cur=s.hiA)


def sender_invariant_violation(s: SenderState) -> Optional[str]:
    if not s.hiA <= s.hiP0 + 1:
        return f"hiA={s.hiA} acknowledges beyond hiP={s.hiP}"
    if not s.hiA <= s.cur <= s.hiA + s.N:
        return f"cur={s.cur} outside [hiA, hiA + N] = [{s.hiA}, {s.hiA + s.N}]"
    return None


def sender_monotone_violation(before: SenderState, after: SenderState) -> Optional[str]:
    if after.hiA < before.hiA:
        return f"hiA decreased from {before.hiA} to {after.hiA}"
    if after.hiP0 < before.hiP0:
        return f"hiP decreased from {before.hiP} to {after.hiP}"
    return None


# Receiver

@dataclass(frozen=True)
class ReceiverState:
    """``rcvd`` stored as a prefix ``{1..prefix}`` plus ids above ``prefix + 1``.

    ``extra`` is only ever non-empty when ``buffer_ooo`` is set.
    """

    prefix: int = 0
    extra: frozenset = frozenset()
    buffer_ooo: bool = False

    @property
    def rcvd(self) -> frozenset:
        return frozenset(range(1, self.prefix + 1)) | self.extra

    def __contains__(self, i: int) -> bool:
        return 1 <= i <= self.prefix or i in self.extra


def receiver_init(buffer_ooo: bool = False) -> ReceiverState:
    return ReceiverState(0, frozenset(), buffer_ooo)


def receiver_from_set(rcvd: Iterable[int], buffer_ooo: bool = False) -> ReceiverState:
    ids = set(rcvd)
    if any(not isinstance(i, int) or i < 1 for i in ids):
        raise ValueError("received ids are positive integers")
    k = 0
    while k + 1 in ids:
        k += 1
    extra = frozenset(i for i in ids if i > k)
    if extra and not buffer_ooo:
        raise ValueError("without buffering the received set must be a prefix {1..k}")
    return ReceiverState(k, extra, buffer_ooo)


def cum_ack(r: ReceiverState) -> int:
    return r.prefix + 1


def rcv_pkt(r: ReceiverState, i: int) -> ReceiverState:
    if i == r.prefix + 1:
        k, extra = i, set(r.extra)
        while k + 1 in extra:
            k += 1
            extra.discard(k)
        return ReceiverState(k, frozenset(extra), r.buffer_ooo)
    if r.buffer_ooo and i > r.prefix + 1 and i not in r.extra:
        return ReceiverState(r.prefix, r.extra | {i}, True)
    return r


def rcvd_subset(a: ReceiverState, b: ReceiverState) -> bool:
    """``a.rcvd`` is a subset of ``b.rcvd``."""
    return a.prefix <= b.prefix and all(i in b for i in a.extra)


def snd_ack(r: ReceiverState) -> Event:
    return Event("snd_r", Datagram(cum_ack(r), ACK_PAYLOAD))


def cumackp(rcvd: Iterable[int], a: int) -> bool:
    """``a`` is missing from ``rcvd`` and everything below it is present."""
    s = set(rcvd)
    return a >= 1 and a not in s and all(k in s for k in range(1, a))


def max_rcvd(r: ReceiverState) -> int:
    return max(r.rcvd, default=0)


@dataclass(frozen=True)
class CounterReceiver:
    """Default-mode receiver that only remembers ``max(rcvd)``."""

    p: int = 0

    def rcv_pkt(self, i: int) -> "CounterReceiver":
        return CounterReceiver(i) if i == self.p + 1 else self

    def cum_ack(self) -> int:
        return self.p + 1
