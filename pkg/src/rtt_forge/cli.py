"""Command-line front end.

Exit status: 0 on success, 1 when a check fails, 2 on usage errors or a
missing input file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction

from . import checks, karn, rto, system, tbf
from .execution import (ExecConfig, execution_to_csv, gen_execution, is_fifo_ack,
                        read_execution_csv)
from .numerics import format_decimal, format_rational, to_rational

SEED_ENV = "RTT_FORGE_SEED"


class UsageError(Exception):
    pass


def _load_config(text):
    if text is None:
        return {}
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad JSON config: {exc}") from None
    if not os.path.exists(text):
        raise UsageError(f"config file not found: {text}")
    with open(text) as fh:
        return json.load(fh)


def _seed(args, cfg) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _param(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is None:
        v = cfg.get(name, default)
    return v


def _rat(value, name) -> Fraction:
    try:
        return to_rational(str(value))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{name} must be a rational such as 135/2 or 67.5, got {value!r}") from None


def _open_input(path):
    if not os.path.exists(path):
        raise UsageError(f"input file not found: {path}")
    return open(path, newline="")


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# karn-run

def cmd_karn_run(args, cfg) -> int:
    if args.input:
        with _open_input(args.input) as fh:
            try:
                e = read_execution_csv(fh)
            except (ValueError, KeyError) as exc:
                raise UsageError(f"bad execution CSV: {exc}") from None
    else:
        e = gen_execution(ExecConfig(
            n_packets=int(_param(args, cfg, "n_packets", 20)),
            loss_rate=_rat(_param(args, cfg, "loss", "0"), "loss"),
            reorder_window=int(_param(args, cfg, "reorder", 0)),
            allow_ack_loss=bool(cfg.get("allow_ack_loss", False)),
            fifo_acks=bool(cfg.get("fifo_acks", False)),
            max_retransmissions=int(_param(args, cfg, "retransmissions", 0)),
            seed=_seed(args, cfg)))
        if args.execution_out:
            _emit(execution_to_csv(e), args.execution_out)
    try:
        _, samples = karn.karn_run(e, allow_sample_at_high_zero=args.allow_sample_at_high_zero)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("event_index", "sample"))
    w.writerows(samples)
    _emit(buf.getvalue(), args.output)
    if not args.report:
        return 0
    try:
        karn.karn_run(e, check_invariants=True)
        invariants = True
    except AssertionError:
        invariants = False
    covers = karn.check_sample_covers_rtts(e)
    report = {"schema": system.SCHEMA, "samples": len(samples), "monitor_invariants": invariants,
              "sample_covers_rtts": covers.holds, "fifo_ack": is_fifo_ack(e)}
    if report["fifo_ack"]:
        report["fifo_sample_is_rtt"] = karn.check_fifo_sample_is_rtt(e).holds
    _emit(_json(report), args.report)
    ok = invariants and covers.holds and report.get("fifo_sample_is_rtt", True)
    return 0 if ok else 1


# rto-run and scenario

RTO_FIELDS = ("index", "sample", "srtt", "rttvar", "rto", "timeout_flag")


def rto_csv(samples, states, decimal: bool) -> str:
    timeouts = set(rto.detect_timeouts(samples, states))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(RTO_FIELDS)
    if decimal:
        header += ["srtt_decimal", "rttvar_decimal", "rto_decimal"]
    w.writerow(header)
    for i, (S, st) in enumerate(zip(samples, states)):
        row = [i, format_rational(S), format_rational(st.srtt), format_rational(st.rttvar),
               format_rational(st.rto), int(i in timeouts)]
        if decimal:
            row += [format_decimal(st.srtt), format_decimal(st.rttvar), format_decimal(st.rto)]
        w.writerow(row)
    return buf.getvalue()


def read_rto_csv(text: str) -> list:
    """Rows of an rto CSV as dicts of exact values; decimal columns are ignored."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append({"index": int(rec["index"]),
                    **{k: Fraction(rec[k]) for k in ("sample", "srtt", "rttvar", "rto")},
                    "timeout_flag": int(rec["timeout_flag"])})
    return out


def read_samples_csv(fh) -> list:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or "sample" not in reader.fieldnames:
        raise UsageError("samples CSV needs a 'sample' column")
    rows = list(reader)
    if "index" in reader.fieldnames:
        rows.sort(key=lambda r: int(r["index"]))
    return [_rat(r["sample"], "sample") for r in rows]


def _rto_params(args, cfg) -> rto.RtoParams:
    try:
        return rto.RtoParams(_rat(_param(args, cfg, "alpha", "1/8"), "alpha"),
                             _rat(_param(args, cfg, "beta", "1/4"), "beta"),
                             _rat(_param(args, cfg, "G", "1/100"), "G"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_rto_run(args, cfg) -> int:
    with _open_input(args.input) as fh:
        samples = read_samples_csv(fh)
    if not samples:
        raise UsageError("no samples in input")
    try:
        states = rto.rto_run(samples, _rto_params(args, cfg))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(rto_csv(samples, states, args.decimal), args.output)
    return 0


def cmd_scenario(args, cfg) -> int:
    try:
        band = rto.SteadyBand(_rat(_param(args, cfg, "c"), "c"), _rat(_param(args, cfg, "r"), "r"))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"scenario needs a valid band: {exc}") from None
    n = int(_param(args, cfg, "n", 1000))
    if n < 1:
        raise UsageError("n must be positive")
    kind = _param(args, cfg, "kind", "spike")
    if kind == "spike":
        samples = rto.gen_spike_steady(band, int(_param(args, cfg, "period", 100)), n)
    elif kind == "uniform":
        samples = rto.gen_uniform_steady(band, n, int(_param(args, cfg, "grid", 16)), _seed(args, cfg))
    else:
        raise UsageError(f"unknown scenario kind {kind!r}")
    states = rto.rto_run(samples, _rto_params(args, cfg))
    _emit(rto_csv(samples, states, args.decimal), args.output)
    return 0


def cmd_rto_bounds(args, cfg) -> int:
    alpha = _rat(_param(args, cfg, "alpha", "1/8"), "alpha")
    beta = _rat(_param(args, cfg, "beta", "1/4"), "beta")
    n = int(_param(args, cfg, "n", 5))
    try:
        band = rto.SteadyBand(_rat(_param(args, cfg, "c"), "c"), _rat(_param(args, cfg, "r", 0), "r"))
        srtt_prev = _rat(_param(args, cfg, "srtt_prev"), "srtt_prev")
        rttvar_prev = _rat(_param(args, cfg, "rttvar_prev", 0), "rttvar_prev")
        L, H = rto.srtt_bounds(srtt_prev, band, alpha, n)
        delta = rto.delta_expr(srtt_prev, band, alpha, n)
        dev = rto.deviation_bound(srtt_prev, band)
        out = {"schema": system.SCHEMA, "L": format_rational(L), "H": format_rational(H),
               "L_decimal": format_decimal(L), "H_decimal": format_decimal(H),
               "delta_expr": format_rational(delta), "deviation_bound": format_rational(dev)}
        if dev > 0:
            out["rttvar_closed_bound"] = format_rational(
                rto.rttvar_closed_bound(rttvar_prev, dev, beta, n))
        eps = _param(args, cfg, "eps")
        if eps is not None:
            out["limit_delta"] = rto.limit_delta(alpha, _rat(eps, "eps"))
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    _emit(_json(out), args.output)
    return 0


# gbn

def _gbn_outputs(args, trace, predicted) -> int:
    out = system.summary(trace, predicted)
    if args.trace:
        _emit(system.trace_to_csv(trace), args.trace)
    _emit(_json(out), args.summary)
    return 0 if out.get("match", True) else 1


def cmd_gbn_best_case(args, cfg) -> int:
    try:
        sys0, script = system.build_best_case(args.window, args.windows)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace = system.replay(sys0, script, check_invariants=True)
    return _gbn_outputs(args, trace, Fraction(1))


def cmd_gbn_overtx(args, cfg) -> int:
    try:
        plan = system.build_overtx(args.window, args.rate, args.refill, args.dcap)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace = system.replay(plan.sys0, plan.script, check_invariants=True)
    predicted = system.predicted_overtx_eff(args.rate, args.refill, args.dcap, args.window)
    return _gbn_outputs(args, trace, predicted)


# tbf-compose-check and selftest

def cmd_tbf_compose_check(args, cfg) -> int:
    seed = _seed(args, cfg)
    trials = int(_param(args, cfg, "trials", 1000))
    res = checks.tbf_composition(trials=trials, seed=seed)
    out = {"schema": system.SCHEMA, "seed": seed, "trials": trials, "failures": res.failures,
           "passed": res.passed, "detail": res.detail,
           "examples": [{"trial": k, "divergence": d} for k, d in res.examples]}
    _emit(_json(out), args.output)
    return 0 if res.passed else 1


def cmd_selftest(args, cfg) -> int:
    seed = _seed(args, cfg)
    scale = Fraction(1, 10) if args.quick else Fraction(1)
    results = checks.run_all(seed=seed, scale=scale)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if args.report:
        _emit(_json({"schema": system.SCHEMA, "seed": seed,
                     "results": [{"criterion": r.criterion, "name": r.name, "passed": r.passed,
                                  "trials": r.trials, "failures": r.failures, "detail": r.detail}
                                 for r in results]}), args.report)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtt-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output=True):
        sp.add_argument("--config", help="JSON parameters, inline or a file path")
        sp.add_argument("--seed", type=int)
        if output:
            sp.add_argument("--output", "-o", help="output path (default stdout)")
        return sp

    sp = common(sub.add_parser("karn-run", help="run the Karn monitor over an execution"))
    sp.add_argument("--input", "-i", help="execution CSV (index, actor, action, id)")
    sp.add_argument("--n-packets", dest="n_packets", type=int)
    sp.add_argument("--loss")
    sp.add_argument("--reorder", type=int)
    sp.add_argument("--retransmissions", type=int)
    sp.add_argument("--execution-out", dest="execution_out")
    sp.add_argument("--allow-sample-at-high-zero", action="store_true")
    sp.add_argument("--report", help="invariant report JSON path")
    sp.set_defaults(func=cmd_karn_run)

    for name, fn, help_ in (("rto-run", cmd_rto_run, "rto recursion over a samples CSV"),
                            ("scenario", cmd_scenario, "generate a steady-state scenario")):
        sp = common(sub.add_parser(name, help=help_))
        sp.add_argument("--alpha")
        sp.add_argument("--beta")
        sp.add_argument("--G")
        sp.add_argument("--decimal", action="store_true", help="add decimal columns")
        if name == "rto-run":
            sp.add_argument("--input", "-i", required=True)
        else:
            sp.add_argument("--kind", choices=("spike", "uniform"))
            sp.add_argument("--c")
            sp.add_argument("--r")
            sp.add_argument("--period", type=int)
            sp.add_argument("--n", type=int)
            sp.add_argument("--grid", type=int)
        sp.set_defaults(func=fn)

    sp = common(sub.add_parser("rto-bounds", help="steady-state bound values"))
    for flag in ("--alpha", "--beta", "--c", "--r", "--eps"):
        sp.add_argument(flag)
    sp.add_argument("--srtt-prev", dest="srtt_prev")
    sp.add_argument("--rttvar-prev", dest="rttvar_prev")
    sp.add_argument("--n", type=int)
    sp.set_defaults(func=cmd_rto_bounds)

    gp = sub.add_parser("gbn", help="Go-Back-N efficiency scenarios")
    gsub = gp.add_subparsers(dest="scenario", required=True)
    for name, fn in (("best-case", cmd_gbn_best_case), ("overtx", cmd_gbn_overtx)):
        sp = common(gsub.add_parser(name), output=False)
        sp.add_argument("--window", type=int, required=True)
        sp.add_argument("--trace", help="trace CSV path")
        sp.add_argument("--summary", help="summary JSON path (default stdout)")
        if name == "best-case":
            sp.add_argument("--windows", type=int, default=1)
        else:
            sp.add_argument("--rate", type=int, required=True)
            sp.add_argument("--refill", type=int, required=True)
            sp.add_argument("--dcap", type=int, required=True)
        sp.set_defaults(func=fn)

    sp = common(sub.add_parser("tbf-compose-check", help="random serial-composition replays"))
    sp.add_argument("--trials", type=int)
    sp.set_defaults(func=cmd_tbf_compose_check)

    sp = common(sub.add_parser("selftest", help="run every check suite"), output=False)
    sp.add_argument("--quick", action="store_true", help="a tenth of the randomized trials")
    sp.add_argument("--report", help="JSON report path")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"rtt-forge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
