"""Karn's RTT sampling as a non-interfering monitor of the sender.

The monitor sees ``snd_s(i)`` and ``dlvr_r(j)`` events only.  It counts
transmissions per packet, remembers each packet's first transmission time on
a logical clock, and emits a sample when a new highest ack arrives and every
packet from the previous highest ack up to the new one was sent exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Optional, Sequence

from .execution import (DLVR_R, SND_S, Action, InvalidExecution, is_fifo_ack,
                        require_valid, rtt)


@dataclass(frozen=True)
class KarnState:
    tau: int = 1
    numT: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    time: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    high: int = 0
    emitted: tuple = ()

    def num_t(self, k: int) -> int:
        return self.numT.get(k, 0)

    def time_of(self, k: int) -> int:
        return self.time.get(k, 0)

    def __eq__(self, other):
        if not isinstance(other, KarnState):
            return NotImplemented
        return (self.tau, dict(self.numT), dict(self.time), self.high, self.emitted) == \
            (other.tau, dict(other.numT), dict(other.time), other.high, other.emitted)

    __hash__ = None


def karn_init() -> KarnState:
    return KarnState()


def ok_to_sample(s: KarnState, j: int) -> bool:
    if any(s.num_t(k) != 1 for k in range(s.high + 1, j)):
        return False
    return s.high == 0 or s.num_t(s.high) == 1


class KarnMonitor:
    """Mutable monitor; :func:`karn_step` is the pure wrapper around it."""

    def __init__(self, allow_sample_at_high_zero: bool = False):
        self.tau = 1
        self.numT = {}
        self.time = {}
        self.high = 0
        self.emitted = []
        self.allow_sample_at_high_zero = allow_sample_at_high_zero

    @classmethod
    def from_state(cls, s: KarnState, allow_sample_at_high_zero: bool = False):
        m = cls(allow_sample_at_high_zero)
        m.tau = s.tau
        m.numT = dict(s.numT)
        m.time = dict(s.time)
        m.high = s.high
        m.emitted = list(s.emitted)
        return m

    def state(self) -> KarnState:
        return KarnState(self.tau, MappingProxyType(dict(self.numT)),
                         MappingProxyType(dict(self.time)), self.high, tuple(self.emitted))

    def _ok_to_sample(self, j: int) -> bool:
        numT = self.numT
        for k in range(self.high + 1, j):
            if numT.get(k, 0) != 1:
                return False
        return self.high == 0 or numT.get(self.high, 0) == 1

    def feed(self, a: Action, index: Optional[int] = None) -> Optional[int]:
        if a.kind == SND_S:
            i = a.id
            self.numT[i] = self.numT.get(i, 0) + 1
            if self.time.get(i, 0) == 0:
                self.time[i] = self.tau
            self.tau += 1
            return None
        if a.kind != DLVR_R:
            raise ValueError(f"karn monitor only observes sender events, got {a}")
        j = a.id
        sample = None
        if j > self.high:
            if (self.high > 0 or self.allow_sample_at_high_zero) and self._ok_to_sample(j):
                sample = self.tau - self.time.get(self.high, 0)
                self.emitted.append((self.tau - 1 if index is None else index, sample))
            self.high = j
        self.tau += 1
        return sample


def karn_step(s: KarnState, a: Action, index: Optional[int] = None,
              allow_sample_at_high_zero: bool = False):
    """Apply one sender event; returns ``(new_state, sample_or_None)``.

    ``index`` labels an emitted sample; by default it is the event's position
    in the sender projection.
    """
    m = KarnMonitor.from_state(s, allow_sample_at_high_zero)
    sample = m.feed(a, index)
    return m.state(), sample


def karn_run(e: Sequence[Action], allow_sample_at_high_zero: bool = False,
             check_invariants: bool = False):
    """Fold the monitor over the sender events of ``e``.

    Sample indices refer to positions in ``e`` itself.  With
    ``check_invariants`` the monitor invariants are asserted after every step.
    """
    require_valid(e)
    m = KarnMonitor(allow_sample_at_high_zero)
    for idx, a in enumerate(e):
        if a.is_sender_event:
            m.feed(a, idx)
            if check_invariants:
                bad = monitor_invariant_violation(m.numT, m.time)
                if bad:
                    raise AssertionError(f"after event {idx}: {bad}")
    return m.state(), list(m.emitted)


def monitor_invariant_violation(numT, time) -> Optional[str]:
    """Check both transmission invariants; returns a description or None.

    For 0 < i < j with numT[j] > 0: numT[i] > 0 and time[i] < time[j].
    """
    sent = sorted(k for k, v in numT.items() if v > 0)
    if not sent:
        return None
    top = sent[-1]
    if len(sent) != top:
        missing = next(k for k in range(1, top + 1) if numT.get(k, 0) == 0)
        return f"numT[{top}] > 0 but numT[{missing}] = 0"
    for i in range(1, top):
        if not time.get(i, 0) < time.get(i + 1, 0):
            return f"time[{i}] = {time.get(i, 0)} not below time[{i + 1}] = {time.get(i + 1, 0)}"
    return None


@dataclass(frozen=True)
class ObservationReport:
    holds: bool
    samples: tuple = ()
    witnesses: tuple = ()
    violations: tuple = ()

    def __bool__(self):
        return self.holds


def _sample_windows(e: Sequence[Action]):
    """Yield ``(event_index, sample, old_high, new_high)`` per fresh sample."""
    m = KarnMonitor()
    for idx, a in enumerate(e):
        if not a.is_sender_event:
            continue
        old_high = m.high
        s = m.feed(a, idx)
        if s is not None:
            yield idx, s, old_high, m.high


def check_sample_covers_rtts(e: Sequence[Action]) -> ObservationReport:
    """Each fresh sample bounds, and equals one of, the RTTs it spans."""
    require_valid(e)
    samples, witnesses, violations = [], [], []
    cache = {}

    def rtt_of(k):
        if k not in cache:
            cache[k] = rtt(e, k)
        return cache[k]

    for idx, s, old_high, new_high in _sample_windows(e):
        samples.append((idx, s))
        witness = None
        for ell in range(max(old_high, 1), new_high):
            r = rtt_of(ell)
            if r is None:
                continue
            if r > s:
                violations.append((idx, f"rtt({ell}) = {r} exceeds sample {s}"))
            if r == s and witness is None:
                witness = ell
        if witness is None:
            violations.append((idx, f"no packet in [{max(old_high, 1)}, {new_high}) has rtt {s}"))
        witnesses.append((idx, witness))
    return ObservationReport(not violations, tuple(samples), tuple(witnesses), tuple(violations))


def check_fifo_sample_is_rtt(e: Sequence[Action]) -> ObservationReport:
    """On FIFO-ack executions every sample is the RTT of the previous high."""
    if not is_fifo_ack(e):
        raise InvalidExecution(["execution is not a FIFO-acknowledgement execution"])
    samples, witnesses, violations = [], [], []
    for idx, s, old_high, _ in _sample_windows(e):
        samples.append((idx, s))
        r = rtt(e, old_high)
        witnesses.append((idx, old_high))
        if r != s:
            violations.append((idx, f"sample {s} != rtt({old_high}) = {r}"))
    return ObservationReport(not violations, tuple(samples), tuple(witnesses), tuple(violations))
