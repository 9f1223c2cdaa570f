"""Command-line entry point.

Subcommands:

  werner            sweep the qubit Werner line; CSV columns p,closed_form,sdp_lower,sdp_upper
  divergence        dmax | domega | domega_sep | beta on matrix files
  exponent          per-copy distillation exponent bracket of a state file
  instrument-check  ne | dne verdict on an instrument file; exit 0 yes, 1 no, 2 unknown
  verify            lemmas | oracles | werner | all; nonzero exit on any failure
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import checks
from .divergence import d_max, d_omega
from .errors import EntDistillError
from .exponents import distill_exponent_bracket, dne_exponent_bracket
from .fileio import read_instrument, read_matrix, to_jsonable
from .instruments import DilSubchannel, dne_check_dil, dne_check_iso, ne_check_dil, ne_check_iso
from .postselect import beta_hat_analytic, beta_hat_bruteforce
from .sepset import SepSearchOptions, d_omega_sep

WERNER_COLUMNS = ("p", "closed_form", "sdp_lower", "sdp_upper")
VERIFY_COLUMNS = ("suite", "check", "instances", "failures", "worst")
EXIT_CODES = {"yes": 0, "no": 1, "unknown": 2}


# --- output --------------------------------------------------------------


def emit_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(row[c])) for c in columns])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    return [{k: float(v) for k, v in row.items()} for row in reader]


def _write(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj, args):
    _write(json.dumps(to_jsonable(obj), indent=2) + "\n", args.out)


# --- commands ------------------------------------------------------------


def _grid(args):
    if args.p:
        return [float(x) for x in args.p.split(",")]
    return list(checks.WERNER_GRID)


def cmd_werner(args) -> int:
    grid = _grid(args)
    if any(not 0 <= p <= 1 for p in grid):
        raise SystemExit("p values must lie in [0, 1]")

    def row(p):
        return checks.werner_row(p, args.d, rng=np.random.default_rng(args.seed))

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        rows = list(pool.map(row, grid))
    if args.format == "csv":
        _write(emit_csv(rows, WERNER_COLUMNS), args.out)
    else:
        _dump({"columns": WERNER_COLUMNS, "rows": rows}, args)
    return 0


def _options(args):
    return SepSearchOptions(bisect_tol=args.bisect_tol, gap_tol=args.gap_tol)


def cmd_divergence(args) -> int:
    rho, dims = read_matrix(args.rho)
    rng = np.random.default_rng(args.seed)
    if args.kind == "domega_sep":
        br = d_omega_sep(rho, dims, options=_options(args), rng=rng)
        report = {"kind": args.kind, "lower": br.lower, "upper": br.upper,
                  "lower_certificate": br.lower_certificate, "upper_certificate": br.upper_certificate}
        _dump(report, args)
        return 0
    if args.kind == "beta" and not args.sigma:
        if args.eps is None:
            raise SystemExit("beta needs --eps")
        # against the separable set: the formula at both ends of the distance bracket
        br = d_omega_sep(rho, dims, options=_options(args), rng=rng)
        lo, hi = beta_hat_analytic(args.eps, 2.0**br.lower), beta_hat_analytic(args.eps, 2.0**br.upper)
        _dump({"kind": args.kind, "method": "separable set", "lower": lo, "upper": hi,
               "distance_lower": br.lower, "distance_upper": br.upper}, args)
        return 0
    if not args.sigma:
        raise SystemExit(f"{args.kind} needs --sigma")
    sigma, _ = read_matrix(args.sigma)
    if args.kind == "dmax":
        v = d_max(rho, sigma, method=args.method or "eigen_closed_form", gap_tol=args.gap_tol)
        report = {"kind": args.kind, "value": v.value, "finite": v.finite, "method": v.method}
    elif args.kind == "domega":
        v = d_omega(rho, sigma, method=args.method or "eigen_closed_form", gap_tol=args.gap_tol)
        report = {"kind": args.kind, "value": v.value, "finite": v.finite, "method": v.method}
    else:
        if args.eps is None:
            raise SystemExit("beta needs --eps")
        if args.method == "bruteforce":
            br = beta_hat_bruteforce(args.eps, rho, sigma, tol=args.bisect_tol, gap_tol=args.gap_tol)
            report = {"kind": args.kind, "method": "bruteforce", "lower": br.lower, "upper": br.upper}
        else:
            # sigma is the alternative, so the metric enters as Omega(sigma, rho)
            om = d_omega(sigma, rho).value
            v = beta_hat_analytic(args.eps, 2.0**om)
            report = {"kind": args.kind, "method": "analytic", "value": v, "lower": v, "upper": v, "omega_bits": om}
    _dump(report, args)
    return 0


def cmd_exponent(args) -> int:
    rho, dims = read_matrix(args.rho)
    rng = np.random.default_rng(args.seed)
    fn = dne_exponent_bracket if args.measured else distill_exponent_bracket
    rep = fn(rho, n=args.n, m=args.m, delta=args.delta, dims=dims, rng=rng)
    _dump(rep.to_dict(), args)
    return 0


def cmd_instrument_check(args) -> int:
    s = read_instrument(args.file)
    rng = np.random.default_rng(args.seed)
    budget = args.delta if args.delta is not None else args.eps
    if budget is None:
        raise SystemExit("instrument-check needs --delta (or --eps for dilution instruments)")
    if isinstance(s, DilSubchannel):
        fn = ne_check_dil if args.mode == "ne" else dne_check_dil
    else:
        fn = ne_check_iso if args.mode == "ne" else dne_check_iso
    v = fn(s, budget, rng=rng)
    _dump({"verdict": v.verdict, "budget": v.delta_budget, "evidence": v.evidence}, args)
    return EXIT_CODES[v.verdict]


def summarize(results) -> tuple[list[dict], bool]:
    rows, ok = [], True
    for suite, items in results.items():
        for r in items:
            rows.append({"suite": suite, "check": r.name, "instances": r.instances, "failures": r.failures,
                         "worst": r.worst, "notes": r.notes})
            ok = ok and r.passed
    return rows, ok


def cmd_verify(args) -> int:
    rows, ok = summarize(checks.run_suite(args.suite, args.seed))
    if args.format == "json":
        _dump({"seed": args.seed, "passed": ok, "checks": rows}, args)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(VERIFY_COLUMNS)
        for r in rows:
            w.writerow([r[c] for c in VERIFY_COLUMNS])
        _write(buf.getvalue(), args.out)
    for r in rows:
        print(f"{'PASS' if r['failures'] == 0 else 'FAIL'} {r['suite']}/{r['check']}: "
              f"{r['instances'] - r['failures']}/{r['instances']}", file=sys.stderr)
        for n in r["notes"]:
            print(f"  {n}", file=sys.stderr)
    return 0 if ok else 1


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--gap-tol", type=float, default=1e-9)
    common.add_argument("--bisect-tol", type=float, default=1e-6)

    p = argparse.ArgumentParser(prog="entdistill", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("werner", parents=[common], help="Werner sweep (CSV columns: p,closed_form,sdp_lower,sdp_upper)")
    w.add_argument("--p", help="comma-separated p values (default 0.05..0.95 step 0.05)")
    w.add_argument("--d", type=int, default=2)
    w.set_defaults(func=cmd_werner, format="csv")

    d = sub.add_parser("divergence", parents=[common], help="divergences on matrix files")
    d.add_argument("kind", choices=("dmax", "domega", "domega_sep", "beta"))
    d.add_argument("--rho", required=True)
    d.add_argument("--sigma", help="second state; beta without it is taken against the separable set")
    d.add_argument("--eps", type=float)
    d.add_argument("--method", help="eigen_closed_form | sdp (dmax, domega); analytic | bruteforce (beta)")
    d.set_defaults(func=cmd_divergence)

    e = sub.add_parser("exponent", parents=[common], help="per-copy exponent bracket")
    e.add_argument("--rho", required=True)
    e.add_argument("--n", type=int, default=1)
    e.add_argument("--m", type=int, default=2)
    e.add_argument("--delta", type=float, default=0.0)
    e.add_argument("--measured", action="store_true", help="restrict to separable measurements")
    e.set_defaults(func=cmd_exponent)

    i = sub.add_parser("instrument-check", parents=[common], help="NE/DNE verdict (exit 0 yes, 1 no, 2 unknown)")
    i.add_argument("file")
    i.add_argument("--mode", choices=("ne", "dne"), default="ne")
    i.add_argument("--delta", type=float)
    i.add_argument("--eps", type=float)
    i.set_defaults(func=cmd_instrument_check)

    v = sub.add_parser("verify", parents=[common], help="randomized verification suites")
    v.add_argument("suite", choices=checks.SUITES)
    v.set_defaults(func=cmd_verify, format="csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EntDistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
