"""Randomized and worked-example checks shared by ``selftest`` and the tests.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import gbn, karn, rto, system, tbf
from .execution import ExecConfig, gen_execution, is_fifo_ack
from .numerics import INF, qpow

# Warm-up of the spike scenario (c=135/2, r=15/2, period 100, n=1000),
# computed once with stable_spike_warmup and frozen here.
SPIKE_WARMUP = 0

OVERTX_GRID = ((200, 10, 1, 100), (500, 20, 4, 180), (1000, 50, 10, 450))


@dataclass
class CheckResult:
    criterion: str
    name: str
    passed: bool
    trials: int = 1
    failures: int = 0
    detail: str = ""
    elapsed: float = 0.0
    examples: list = field(default_factory=list)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{self.criterion:>3}] {verdict} {self.name}: {self.failures}/{self.trials} failures{extra}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def srtt_worked_example() -> CheckResult:
    """srtt after six samples of c from 3/4 c, with c = 1, r = 0."""
    beta, alpha = Fraction(1, 4), Fraction(1, 8)
    L, H = rto.srtt_bounds(3 * beta, rto.SteadyBand(1, 0), alpha, 5)
    ok = L == H and Fraction(887, 1000) <= L <= Fraction(889, 1000)
    return CheckResult("1", "srtt worked example", ok, failures=int(not ok),
                       detail=f"L = H = {L} ~ {float(L):.5f}")


@_timed
def rto_recursion_example() -> CheckResult:
    states = rto.rto_run([1, 44, 13], rto.RtoParams())
    s3 = states[-1]
    ok = s3.rttvar == 10 and s3.srtt == Fraction(461, 64)
    return CheckResult("2", "rto recursion on samples 1, 44, 13", ok, failures=int(not ok),
                       detail=f"srtt3 = {s3.srtt}, rttvar3 = {s3.rttvar}")


def _rand_fraction(rng, lo_num, hi_num, den):
    return Fraction(rng.randint(lo_num, hi_num), den)


@_timed
def steady_state_bounds(trials: int = 10_000, seed: int = 0) -> CheckResult:
    """srtt stays within [L, H] and rttvar under the closed-form bound."""
    rng = random.Random(seed)
    failures, examples = 0, []
    for trial in range(trials):
        q = rng.choice((2, 4, 8, 16))
        alpha = Fraction(rng.randint(1, q - 1), q)
        beta = Fraction(rng.randint(1, q - 1), q)
        c = _rand_fraction(rng, 2, 200, 2)
        r = _rand_fraction(rng, 0, int(4 * c) - 1, 4)
        band = rto.SteadyBand(c, r)
        srtt0 = _rand_fraction(rng, 1, 400, 2)
        rttvar0 = _rand_fraction(rng, 0, 200, 2)
        n = rng.randint(0, 50)
        grid = rng.randint(1, 8)
        samples = [band.low + 2 * r * Fraction(rng.randint(0, grid), grid) for _ in range(n + 1)]
        p = rto.RtoParams(alpha, beta)
        delta = rto.deviation_bound(srtt0, band)
        s = rto.RtoState(0, srtt0, rttvar0, srtt0 + max(p.G, 4 * rttvar0))
        for j, S in enumerate(samples):
            s = rto.rto_step(s, S, p)
            L, H = rto.srtt_bounds(srtt0, band, alpha, j)
            bad = not L <= s.srtt <= H
            if delta > 0:
                bad |= s.rttvar > rto.rttvar_closed_bound(rttvar0, delta, beta, j)
            if bad:
                failures += 1
                if len(examples) < 3:
                    examples.append((trial, j))
                break
    return CheckResult("3", "steady-state srtt/rttvar bounds", failures == 0, trials, failures,
                       examples=examples)


@_timed
def limit_witness(trials: int = 100, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    failures = 0
    for _ in range(trials):
        q = rng.randint(2, 60)
        alpha = Fraction(rng.randint(1, q - 1), q)
        y = rng.randint(1, 60)
        eps = Fraction(rng.randint(1, y), y)
        delta = alpha.numerator * eps.denominator
        if not (rto.limit_delta(alpha, eps) == delta and qpow(alpha, delta + 1) < eps):
            failures += 1
    return CheckResult("4", "limit witness alpha^(delta+1) < eps", failures == 0, trials, failures)


@_timed
def spike_scenario(warmup: int = SPIKE_WARMUP) -> CheckResult:
    band = rto.SteadyBand(Fraction(135, 2), Fraction(15, 2))
    period, n = 100, 1000
    samples = rto.gen_spike_steady(band, period, n)
    states = rto.rto_run(samples, rto.RtoParams())
    flagged = [i for i in rto.detect_timeouts(samples, states) if i >= warmup]
    expected = [i for i in range(warmup, n) if (i + 1) % period == 0]
    ok = flagged == expected and len(flagged) >= 9
    return CheckResult("5", "spike scenario timeouts", ok, failures=int(not ok),
                       detail=f"W = {warmup}, {len(flagged)} timeouts")


def _mixed_config(rng, seed):
    return ExecConfig(n_packets=rng.randint(1, 25),
                      loss_rate=rng.choice((Fraction(0), Fraction(1, 10), Fraction(1, 5), Fraction(1, 3))),
                      reorder_window=rng.randint(0, 3),
                      allow_ack_loss=rng.random() < 0.5,
                      max_retransmissions=rng.randint(0, 6),
                      seed=seed)


@_timed
def karn_observations(trials: int = 1000, seed: int = 0) -> CheckResult:
    """Monitor invariants and sample soundness on mixed executions; exact
    samples on FIFO-ack executions."""
    rng = random.Random(seed)
    failures, examples = 0, []
    for k in range(trials):
        e = gen_execution(_mixed_config(rng, seed * 100_003 + k))
        try:
            karn.karn_run(e, check_invariants=True)
            ok = bool(karn.check_sample_covers_rtts(e))
        except AssertionError:
            ok = False
        if not ok:
            failures += 1
            examples.append(("mixed", k))
    for k in range(trials):
        cfg = _mixed_config(rng, seed * 100_003 + trials + k)
        cfg = ExecConfig(cfg.n_packets, cfg.loss_rate, cfg.reorder_window, False, True,
                         cfg.max_retransmissions, cfg.seed)
        e = gen_execution(cfg)
        if not (is_fifo_ack(e) and karn.check_fifo_sample_is_rtt(e)):
            failures += 1
            examples.append(("fifo", k))
    return CheckResult("6", "Karn monitor observations", failures == 0, 2 * trials, failures,
                       examples=examples[:3])


def _random_gbn_sequence(rng, length):
    """Interleaved sender and receiver steps; returns the first violation."""
    s = gbn.sender_init(rng.randint(1, 12))
    r = gbn.receiver_init(rng.random() < 0.5)
    for _ in range(length):
        if rng.random() < 0.6:
            choices = ["ack"]
            if gbn.can_adv_cur(s):
                choices += ["adv", "adv"]
            if gbn.can_timeout(s):
                choices.append("timeout")
            move = rng.choice(choices)
            if move == "adv":
                nxt, _ = gbn.adv_cur(s)
            elif move == "timeout":
                nxt = gbn.timeout(s)
            else:
                nxt = gbn.rcv_ack(s, rng.randint(1, s.hiP0 + 3))
            bad = gbn.sender_invariant_violation(nxt) or gbn.sender_monotone_violation(s, nxt)
            if bad:
                return bad
            s = nxt
        else:
            if rng.random() < 0.8:
                nxt = gbn.rcv_pkt(r, rng.randint(1, r.prefix + 4))
            else:
                gbn.snd_ack(r)
                nxt = r
            if not gbn.rcvd_subset(r, nxt):
                return "receiver lost a received id"
            r = nxt
    return None


@_timed
def gbn_endpoint_invariants(trials: int = 10_000, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    failures, examples = 0, []
    for k in range(trials):
        bad = _random_gbn_sequence(rng, rng.randint(1, 200))
        if bad:
            failures += 1
            examples.append((k, bad))
    return CheckResult("7", "GBN sender and receiver invariants", failures == 0, trials, failures,
                       examples=examples[:3])


def random_tbf_params(rng, max_ttl: int = 4) -> tbf.TbfParams:
    b = rng.randint(1, 6)
    ttl = rng.choice(list(range(1, max_ttl + 1)) + [INF])
    return tbf.TbfParams(b, rng.randint(3, 12), rng.randint(1, b), ttl)


def random_tbf_state(rng, params: tbf.TbfParams, ids) -> tbf.TbfState:
    data = []
    for _ in range(rng.randint(0, 3)):
        dg = tbf.Datagram(next(ids), "p" * rng.randint(1, 3))
        if tbf.sz(data) + dg.size <= params.d_cap:
            rem = INF if params.ttl is INF else rng.randint(1, params.ttl)
            data.append(tbf.TimedDatagram(rem, dg))
    return tbf.TbfState(params, rng.randint(0, params.b_cap), tuple(data))


def random_inter_tick_trace(rng, t: tbf.TbfState, ids, length: int) -> list:
    """An opening tick, ``length`` non-tick ops, and a closing tick."""
    ops = [("tick", None)]
    cur, _ = tbf.apply_op(t, "tick")
    for _ in range(length):
        choices = [("decay", None), ("process", tbf.Datagram(next(ids), "p" * rng.randint(1, 3)))]
        if cur.data:
            choices.append(("drop", rng.randrange(len(cur.data))))
            choices += [("forward", i) for i in range(len(cur.data)) if tbf.can_forward(cur, i)] * 2
        op = rng.choice(choices)
        cur, _ = tbf.apply_op(cur, *op)
        ops.append(op)
    ops.append(("tick", None))
    return ops


@_timed
def tbf_token_bound(trials: int = 10_000, seed: int = 0) -> CheckResult:
    rng = random.Random(seed)
    failures = 0
    for _ in range(trials):
        ids = itertools.count(1)
        t = random_tbf_state(rng, random_tbf_params(rng), ids)
        ops = random_inter_tick_trace(rng, t, ids, rng.randint(0, 12))
        if not tbf.token_bound_check(t, ops):
            failures += 1
    return CheckResult("8", "TBF token bound", failures == 0, trials, failures)


def random_serial_instance(rng, max_steps: int = 30, max_ttl: int = 4):
    """Two TBFs and a feasible script; ``max_ttl=0`` makes every ttl INF."""
    ids = itertools.count(1)
    t1 = random_tbf_state(rng, random_tbf_params(rng, max_ttl), ids)
    t2 = random_tbf_state(rng, random_tbf_params(rng, max_ttl), ids)
    a, b = t1, t2
    script = []
    for _ in range(rng.randint(0, max_steps)):
        opts = [tbf.SerialStep("tick", 1), tbf.SerialStep("tick", 2),
                tbf.SerialStep("decay", 1), tbf.SerialStep("decay", 2),
                tbf.SerialStep("process", 1, tbf.Datagram(next(ids), "p" * rng.randint(1, 3)))]
        if a.data:
            opts.append(tbf.SerialStep("drop", 1, rng.randrange(len(a.data))))
        if b.data:
            opts.append(tbf.SerialStep("drop", 2, rng.randrange(len(b.data))))
        opts += [tbf.SerialStep("forward", 1, i) for i in range(len(a.data)) if tbf.can_forward(a, i)]
        opts += [tbf.SerialStep("forward", 2, i) for i in range(len(b.data)) if tbf.can_forward(b, i)]
        step = rng.choice(opts)
        script.append(step)
        a, b = tbf.serial_step(a, b, step)
    return t1, t2, script


@_timed
def tbf_composition(trials: int = 1000, seed: int = 0) -> CheckResult:
    """The abstract composition tracks the serial pair over whole scripts."""
    rng = random.Random(seed)
    failures, stepwise_failures, examples = 0, 0, []
    for k in range(trials):
        t1, t2, script = random_serial_instance(rng)
        report = tbf.simulate_serial(t1, t2, script)
        stepwise_failures += not report.stepwise_equivalent
        if not report.equivalent:
            failures += 1
            if len(examples) < 3:
                examples.append((k, report.divergences[-1][1]))
    detail = f"single-step lemma failed {stepwise_failures}/{trials}"
    return CheckResult("9", "TBF composition over whole scripts", failures == 0, trials, failures,
                       detail=detail, examples=examples)


@_timed
def best_case_efficiency() -> CheckResult:
    failures, runs = 0, 0
    for N in (1, 2, 5, 10):
        for windows in (1, 5):
            sys0, script = system.build_best_case(N, windows)
            trace = system.replay(sys0, script, check_invariants=True)
            s = trace.final.sender
            runs += 1
            if system.efficiency(trace) != 1 or (s.hiA, s.hiP, s.cur) != (windows * N + 1, windows * N,
                                                                           windows * N + 1):
                failures += 1
    return CheckResult("10", "best-case efficiency is 1", failures == 0, runs, failures)


@_timed
def worst_case_efficiency(grid=OVERTX_GRID) -> CheckResult:
    failures, parts = 0, []
    for N, R, rat, d_cap in grid:
        plan = system.build_overtx(N, R, rat, d_cap)
        trace = system.replay(plan.sys0, plan.script)
        eff = system.efficiency(trace)
        predicted = system.predicted_overtx_eff(R, rat, d_cap, N)
        parts.append(f"N={N}: {eff}")
        failures += eff != predicted
    return CheckResult("11", "over-transmission efficiency matches prediction", failures == 0,
                       len(grid), failures, detail=", ".join(parts))


@_timed
def overtx_formula() -> CheckResult:
    N = 4000
    value = system.predicted_overtx_eff(N // 20, N // 200, N // 10, N)
    ok = value == Fraction(199, 1800)
    return CheckResult("12", "over-transmission formula", ok, failures=int(not ok), detail=str(value))


def warmup_claims(N: int, R: int, rat: int, d_cap: int) -> list:
    """Failed warm-up claims for one parameter tuple (empty when all hold)."""
    plan = system.build_overtx(N, R, rat, d_cap)
    w = plan.warmup
    at = plan.burst_ends[w - 1]
    trace = system.replay(plan.sys0, plan.script[:at], snapshots=[0, at])
    before, after = system.simplify(trace.snapshots[0]), system.simplify(trace.snapshots[at])
    failed = []
    if after.chan != system.top_dn(before.cur + R * w - 1, (R - rat) * w):
        failed.append("channel is not the descending run")
    if after.ack - before.ack != rat * w:
        failed.append("ack growth differs from rat * w")
    if after.cur - before.cur != R * w:
        failed.append("cur growth differs from R * w")
    if after != system.many_steps_simplified(before, R, rat, w):
        failed.append("simplified model disagrees with the full system")
    return failed


@_timed
def warmup_lemma(grid=OVERTX_GRID) -> CheckResult:
    failures, examples = 0, []
    for params in grid:
        bad = warmup_claims(*params)
        if bad:
            failures += 1
            examples.append((params, bad))
    return CheckResult("13", "channel warm-up claims", failures == 0, len(grid), failures,
                       examples=examples)


ALL_CHECKS = (srtt_worked_example, rto_recursion_example, steady_state_bounds, limit_witness,
              spike_scenario, karn_observations, gbn_endpoint_invariants, tbf_token_bound,
              tbf_composition, best_case_efficiency, worst_case_efficiency, overtx_formula,
              warmup_lemma)

RANDOMIZED = {steady_state_bounds, limit_witness, karn_observations, gbn_endpoint_invariants,
              tbf_token_bound, tbf_composition}


def run_all(seed: int = 0, scale: Fraction = Fraction(1)) -> list:
    """Run every check; ``scale`` shrinks the randomized trial counts."""
    results = []
    for check in ALL_CHECKS:
        if check in RANDOMIZED:
            trials = _DEFAULT_TRIALS[check.__name__]
            results.append(check(trials=max(1, int(trials * scale)), seed=seed))
        else:
            results.append(check())
    return results


_DEFAULT_TRIALS = {"steady_state_bounds": 10_000, "limit_witness": 100, "karn_observations": 1000,
                   "gbn_endpoint_invariants": 10_000, "tbf_token_bound": 10_000,
                   "tbf_composition": 1000}
