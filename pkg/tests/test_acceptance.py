"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary, so they
show up in a plain ``pytest -v`` run.
"""

from fractions import Fraction as F

import pytest

from oracles import rto_oracle
from rtt_forge import checks, rto

LINES = []


def report(result, limit_s=None):
    line = result.line() + f" [{result.elapsed * 1000:.1f} ms"
    line += f", limit {limit_s * 1000:g} ms]" if limit_s is not None else "]"
    LINES.append(line)
    print(line)
    assert result.passed, line
    if limit_s is not None:
        assert result.elapsed < limit_s, f"took {result.elapsed:.3f} s, limit {limit_s} s"


def best_of(fn, runs=5):
    """Best wall time of a few runs, for sub-millisecond limits."""
    return min((fn() for _ in range(runs)), key=lambda r: r.elapsed)


def test_c01_srtt_worked_example():
    report(best_of(checks.srtt_worked_example), 0.001)


@pytest.mark.xfail(strict=True, reason="printed exact value 2327329/2621440 is not what the "
                                        "bound formula yields (930927/1048576)")
def test_c01b_srtt_printed_exact_value():
    L, H = rto.srtt_bounds(F(3, 4), rto.SteadyBand(1, 0), F(1, 8), 5)
    ok = L == H == F(2327329, 2621440)
    line = f"[ 1b] {'PASS' if ok else 'FAIL'} srtt printed exact value: got {L}, expected 2327329/2621440"
    LINES.append(line + " (expected failure)")
    print(line)
    assert ok


def test_c02_rto_recursion_oracle():
    result = checks.rto_recursion_example()
    states = rto.rto_run([1, 44, 13], rto.RtoParams())
    want = rto_oracle([1, 44, 13], F(1, 8), F(1, 4), F(1, 100))
    if [(s.srtt, s.rttvar, s.rto) for s in states] != want:
        result.passed, result.failures = False, 1
        result.detail += "; disagrees with the brute-force oracle"
    report(result)


def test_c03_steady_state_bounds():
    report(checks.steady_state_bounds(trials=10_000), 60)


def test_c04_limit_witness():
    report(checks.limit_witness(trials=100), 10)


def test_c05_spike_scenario():
    band = rto.SteadyBand(F(135, 2), F(15, 2))
    samples = rto.gen_spike_steady(band, 100, 1000)
    states = rto.rto_run(samples, rto.RtoParams())
    # the frozen warm-up must still be what the engine derives
    assert rto.stable_spike_warmup(samples, states, 100) == checks.SPIKE_WARMUP
    report(checks.spike_scenario(checks.SPIKE_WARMUP), 1)


def test_c06_karn_observations():
    report(checks.karn_observations(trials=1000), 30)


def test_c07_gbn_endpoint_invariants():
    report(checks.gbn_endpoint_invariants(trials=10_000), 30)


def test_c08_tbf_token_bound():
    report(checks.tbf_token_bound(trials=10_000), 30)


def test_c09_tbf_composition():
    report(checks.tbf_composition(trials=1000), 60)


def test_c10_best_case_efficiency():
    report(checks.best_case_efficiency(), 1)


def test_c11_worst_case_efficiency():
    result = checks.worst_case_efficiency()
    assert "N=200: 111/200" in result.detail
    report(result, 10)


def test_c12_overtx_formula():
    report(best_of(checks.overtx_formula), 0.001)


def test_c13_warmup_lemma():
    report(checks.warmup_lemma())
