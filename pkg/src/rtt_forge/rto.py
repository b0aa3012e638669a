"""RFC 6298 retransmission-timeout recursions and their steady-state bounds.

Everything is exact over :class:`fractions.Fraction`.  The 1 second RTO
floor and exponential backoff of RFC 6298 are deliberately not modelled.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .numerics import qpow, to_rational


@dataclass(frozen=True)
class RtoParams:
    alpha: Fraction = Fraction(1, 8)
    beta: Fraction = Fraction(1, 4)
    G: Fraction = Fraction(1, 100)

    def __post_init__(self):
        for name in ("alpha", "beta", "G"):
            object.__setattr__(self, name, to_rational(getattr(self, name)))
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.G <= 0:
            raise ValueError(f"clock granularity G must be positive, got {self.G}")


@dataclass(frozen=True)
class RtoState:
    index: int
    srtt: Fraction
    rttvar: Fraction
    rto: Fraction


@dataclass(frozen=True)
class SteadyBand:
    """Samples in ``[c - r, c + r]``."""

    c: Fraction
    r: Fraction

    def __post_init__(self):
        object.__setattr__(self, "c", to_rational(self.c))
        object.__setattr__(self, "r", to_rational(self.r))
        if self.c <= 0 or self.r < 0:
            raise ValueError("band needs c > 0 and r >= 0")
        if self.c - self.r <= 0:
            raise ValueError("band must contain only positive samples (c - r > 0)")

    @property
    def low(self) -> Fraction:
        return self.c - self.r

    @property
    def high(self) -> Fraction:
        return self.c + self.r


def _positive_sample(S) -> Fraction:
    S = to_rational(S)
    if S <= 0:
        raise ValueError(f"RTT samples must be positive, got {S}")
    return S


def rto_init(S1, p: RtoParams) -> RtoState:
    S1 = _positive_sample(S1)
    rttvar = S1 / 2
    return RtoState(1, S1, rttvar, S1 + max(p.G, 4 * rttvar))


def rto_step(s: RtoState, S, p: RtoParams) -> RtoState:
    S = _positive_sample(S)
    # rttvar reads the previous srtt, so it is updated first
    rttvar = (1 - p.beta) * s.rttvar + p.beta * abs(s.srtt - S)
    srtt = (1 - p.alpha) * s.srtt + p.alpha * S
    return RtoState(s.index + 1, srtt, rttvar, srtt + max(p.G, 4 * rttvar))


def rto_run(samples: Sequence, p: RtoParams) -> list:
    if not samples:
        raise ValueError("rto_run needs at least one sample")
    it = iter(samples)
    states = [rto_init(next(it), p)]
    for S in it:
        states.append(rto_step(states[-1], S, p))
    return states


def _check_alpha(alpha: Fraction) -> Fraction:
    alpha = to_rational(alpha)
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def srtt_bounds(srtt_prev, band: SteadyBand, alpha, n: int):
    """Lower and upper bound on srtt after ``n + 1`` samples inside ``band``."""
    alpha = _check_alpha(alpha)
    if n < 0:
        raise ValueError("n must be a natural number")
    decay = qpow(1 - alpha, n + 1)
    srtt_prev = to_rational(srtt_prev)
    L = decay * srtt_prev + (1 - decay) * band.low
    H = decay * srtt_prev + (1 - decay) * band.high
    return L, H


def rttvar_closed_bound(rttvar_prev, Delta, beta, n: int) -> Fraction:
    """Closed form of ``n + 1`` applications of ``x -> (1 - beta) x + beta Delta``."""
    beta, Delta, rttvar_prev = to_rational(beta), to_rational(Delta), to_rational(rttvar_prev)
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if Delta <= 0:
        raise ValueError(f"Delta must be positive, got {Delta}")
    if n < 0:
        raise ValueError("n must be a natural number")
    decay = qpow(1 - beta, n + 1)
    return decay * rttvar_prev + (1 - decay) * Delta


def rttvar_bound_step(x, Delta, beta) -> Fraction:
    return (1 - beta) * x + beta * Delta


def delta_expr(srtt_prev, band: SteadyBand, alpha, n: int) -> Fraction:
    """``(1-a)^(n+1) srtt_prev + 2r - (1-a)^(n+1) (c + r)``.

    This is ``H - (c - r)``: how far a sample can sit below the srtt upper
    bound.  It only bounds ``|S - srtt|`` when srtt approaches from above;
    see :func:`deviation_bound` for a two-sided bound.
    """
    alpha = _check_alpha(alpha)
    if n < 0:
        raise ValueError("n must be a natural number")
    decay = qpow(1 - alpha, n + 1)
    return decay * to_rational(srtt_prev) + 2 * band.r - decay * band.high


def deviation_bound(srtt_prev, band: SteadyBand) -> Fraction:
    """Bound on ``|S_j - srtt_{j-1}|`` for every sample of a steady run.

    Each srtt in the run is a convex combination of ``srtt_prev`` and samples
    from the band, so it stays between ``min(srtt_prev, c - r)`` and
    ``max(srtt_prev, c + r)``.
    """
    srtt_prev = to_rational(srtt_prev)
    return max(srtt_prev - band.low, band.high - srtt_prev, 2 * band.r)


def limit_delta(alpha, eps) -> int:
    """A threshold past which ``alpha ** n < eps``.

    With ``alpha = p/q`` and ``eps = x/y`` in lowest terms, ``alpha`` is at
    most ``p/(p+1)``, whose ``p``-th power is below 1/2, and ``1/2**y < eps``;
    hence ``n > p*y`` suffices.
    """
    alpha, eps = to_rational(alpha), to_rational(eps)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    delta = alpha.numerator * eps.denominator
    assert qpow(alpha, delta + 1) < eps
    return delta


def detect_timeouts(samples: Sequence, states: Sequence[RtoState]) -> list:
    """Indices whose sample strictly exceeds the previously computed rto."""
    if len(samples) != len(states):
        raise ValueError(f"{len(samples)} samples but {len(states)} states")
    return [i for i in range(1, len(samples))
            if to_rational(samples[i]) > states[i - 1].rto]


def steady_check(samples: Iterable, band: SteadyBand) -> bool:
    return all(band.low <= to_rational(S) <= band.high for S in samples)


def gen_uniform_steady(band: SteadyBand, n: int, grid: int, seed) -> list:
    if grid < 1:
        raise ValueError("grid must be a positive integer")
    rng = random.Random(seed)
    step = 2 * band.r / grid
    return [band.low + step * rng.randint(0, grid) for _ in range(n)]


def gen_spike_steady(band: SteadyBand, period: int, n: int) -> list:
    if period < 2:
        raise ValueError("period must be at least 2")
    return [band.high if (i + 1) % period == 0 else band.low for i in range(n)]


def stable_spike_warmup(samples: Sequence, states: Sequence[RtoState], period: int) -> int:
    """Smallest W such that from W on, timeouts occur exactly at the spikes."""
    flagged = set(detect_timeouts(samples, states))
    W = len(samples)
    for i in range(len(samples) - 1, -1, -1):
        spike = (i + 1) % period == 0
        if (i in flagged) != spike:
            break
        W = i
    return W
