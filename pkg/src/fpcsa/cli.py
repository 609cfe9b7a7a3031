"""``fpcsa`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 malformed input
file, 3 a ``simulate`` check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings

import numpy as np

from .constants import TABLE_M, constants_for, format_order, reproduction_table
from .errors import ExperimentError, FormatError, FpcsaError
from .field import FieldSpec
from .harness import ExperimentConfig, evaluate_checks, run_experiment
from .l0 import ExactState, PrimeScheme, exact_l0, prime_set_size, select_prime
from .primes import primes_at_least, primes_first_n
from .sketch import Sketch
from .stream import read_stream

EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_CHECK = 3

BATCH = 1 << 16


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sub = self.prog.partition(" ")[2]
        raise CliUsageError(f"{sub}: {message}" if sub else message)


def _field(text):
    try:
        return FieldSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _add_scheme_flags(p, required=False):
    p.add_argument("--scheme", choices=("infinity", "average", "fixed"), required=required)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--linf", type=float, help="bound on max |x_v| (infinity scheme)")
    p.add_argument("--avg", type=float, help="bound on ||x||_1 / ||x||_0 (average scheme)")
    p.add_argument("--p", type=int, help="prime for the fixed scheme")


def _scheme_from_args(args, seed, state=None):
    """Build a PrimeScheme; a missing bound is taken from ``state`` (two-pass mode)."""
    if args.scheme == "fixed":
        if args.p is None:
            raise CliUsageError("--scheme fixed needs --p")
        return PrimeScheme.fixed(args.p)
    if args.epsilon is None:
        raise CliUsageError(f"--scheme {args.scheme} needs --epsilon")
    if args.scheme == "infinity":
        bound = args.linf
        if bound is None and state is not None:
            bound = max(state.linf(), 1)
        if bound is None:
            raise CliUsageError("--scheme infinity needs --linf (or --two-pass)")
        return PrimeScheme.infinity_norm(args.epsilon, bound, seed)
    bound = args.avg
    if bound is None and state is not None:
        bound = state.l1() / len(state) if len(state) else 1
    if bound is None:
        raise CliUsageError("--scheme average needs --avg (or --two-pass)")
    return PrimeScheme.average_norm(args.epsilon, bound, seed)


def _build_parser():
    ap = _Parser(prog="fpcsa", description="F-PCSA distinct-count sketches over finite fields.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build a sketch from a stream file")
    b.add_argument("stream")
    b.add_argument("--field", type=_field, help="sketch field; must agree with the stream header")
    b.add_argument("--m", type=int, required=True, help="number of rows")
    b.add_argument("--columns", type=int, default=64)
    b.add_argument("--seed", type=_seed, default=0)
    b.add_argument("--reduce", type=_field, help="gf(p) used to reduce an integer (field=z) stream")
    _add_scheme_flags(b)
    b.add_argument("--scheme-seed", type=_seed, help="seed for drawing the prime (default: --seed)")
    b.add_argument("--two-pass", action="store_true", help="read the stream once to learn the scheme bound")
    b.add_argument("-o", "--output", required=True)

    e = sub.add_parser("estimate", help="estimate the number of nonzero coordinates")
    e.add_argument("sketch")
    e.add_argument("--format", choices=("text", "json"), default="text")

    mg = sub.add_parser("merge", help="merge two compatible sketches")
    mg.add_argument("a")
    mg.add_argument("b")
    mg.add_argument("-o", "--output", required=True)

    c = sub.add_parser("constants", help="estimator constants")
    c.add_argument("--field", type=_field)
    c.add_argument("--m", type=int)
    c.add_argument("--table", action="store_true", help="asymptotic constants for the standard field orders")
    c.add_argument("--format", choices=("text", "csv"), default="text")

    x = sub.add_parser("exact", help="exact norms of a stream's final state")
    x.add_argument("stream")
    x.add_argument("--field", type=_field, help="also report ||x||_{0;F_p} for an integer stream")

    pr = sub.add_parser("primes", help="prime selection for integer streams")
    psub = pr.add_subparsers(dest="primes_command", required=True, parser_class=_Parser)
    sel = psub.add_parser("select")
    _add_scheme_flags(sel, required=True)
    sel.add_argument("--seed", type=_seed, default=0)
    ls = psub.add_parser("list")
    ls.add_argument("--count", type=int, required=True)
    ls.add_argument("--at-least", type=int, default=2)

    s = sub.add_parser("simulate", help="Monte Carlo experiment")
    s.add_argument("config", nargs="?", help="JSON file with experiment fields and optional 'checks'")
    s.add_argument("--field")
    s.add_argument("--m", type=int)
    s.add_argument("--columns", type=int)
    s.add_argument("--n", type=int, dest="true_cardinality")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=_seed, dest="base_seed")
    s.add_argument("--workload", choices=("distinct_inserts", "insert_delete_pairs"))
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--estimates", action="store_true", help="include per-trial estimates in JSON output")
    return ap


# -- build -------------------------------------------------------------------


def _flush(sketch, ids, vals):
    if ids:
        sketch.update_many(np.array(ids, dtype=np.uint64), np.array(vals, dtype=np.uint64))
        ids.clear()
        vals.clear()


def _read_exact(path):
    header, updates = read_stream(path)
    state = ExactState(field=header.field)
    for elem, value in updates:
        state.update(elem, value)
    return header, state


def cmd_build(args, out):
    header, updates = read_stream(args.stream)
    if header.integer_mode:
        if args.reduce is None and args.scheme is None:
            raise CliUsageError("integer (field=z) streams need --reduce gf(p) or --scheme")
        if args.reduce is not None and args.scheme is not None:
            raise CliUsageError("give either --reduce or --scheme, not both")
        if args.reduce is not None:
            field = args.reduce
            if field.degree != 1:
                raise CliUsageError(f"--reduce needs a prime field, got {field}")
        else:
            state = _read_exact(args.stream)[1] if args.two_pass else None
            seed = args.seed if args.scheme_seed is None else args.scheme_seed
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                field = FieldSpec(select_prime(_scheme_from_args(args, seed, state)))
            for w in caught:
                print(f"fpcsa: warning: {w.message}", file=sys.stderr)
            print(f"reduction prime: {field.characteristic}", file=out)
        if args.field is not None and args.field != field:
            raise CliUsageError(f"--field {args.field} disagrees with the reduction field {field}")
    else:
        if args.reduce is not None or args.scheme is not None:
            raise CliUsageError(f"stream is already over {header.field}; --reduce/--scheme apply to field=z")
        field = header.field
        if args.field is not None and args.field != field:
            raise CliUsageError(f"--field {args.field} disagrees with stream header field {field}")
    sketch = Sketch(field, args.m, args.columns, args.seed)
    p = field.characteristic
    ids, vals = [], []
    for elem, value in updates:
        ids.append(elem)
        vals.append(value % p if header.integer_mode else value)
        if len(ids) >= BATCH:
            _flush(sketch, ids, vals)
    _flush(sketch, ids, vals)
    with open(args.output, "wb") as fh:
        fh.write(sketch.to_bytes())


def _load_sketch(path):
    with open(path, "rb") as fh:
        return Sketch.from_bytes(fh.read())


def cmd_estimate(args, out):
    sk = _load_sketch(args.sketch)
    consts = constants_for(sk.rows, sk.field.order)
    est = sk.estimate(consts)
    if args.format == "json":
        json.dump({
            "estimate": est.value,
            "m": sk.rows,
            "columns": sk.columns,
            "field": str(sk.field),
            "field_order": sk.field.order,
            "relative_error": consts.rel_error_exact,
            "empty_rows": est.empty_rows,
            "calibrated": est.calibrated,
        }, out, indent=2)
        out.write("\n")
        return
    print(f"estimate: {est.value:.6g}", file=out)
    print(f"m: {sk.rows}", file=out)
    print(f"field: {sk.field} (|F| = {sk.field.order})", file=out)
    print(f"predicted relative error: {consts.rel_error_exact:.6f}", file=out)
    if est.calibrated:
        print("calibrated: yes", file=out)
    else:
        print(f"calibrated: no ({est.empty_rows} empty rows; below the calibrated range)", file=out)


def cmd_merge(args, out):
    merged = _load_sketch(args.a).merge(_load_sketch(args.b))
    with open(args.output, "wb") as fh:
        fh.write(merged.to_bytes())


_TABLE_HEAD = ("|F|", "psi_E", "psi_V", "norm/m", "relerr*sqrt(m)")


def cmd_constants(args, out):
    if args.table:
        if args.field is not None:
            raise CliUsageError("--table and --field are exclusive")
        rows = reproduction_table(m=args.m or TABLE_M)
        cells = [
            (format_order(r.field_order), f"{r.psi_e:.5f}", f"{r.psi_v:.5f}",
             f"{r.norm_factor_per_m:.5f}", f"{r.rel_error_sqrt_m:.5f}")
            for r in rows
        ]
        _emit_table(out, _TABLE_HEAD, cells, args.format)
        return
    if args.field is None or args.m is None:
        raise CliUsageError("constants needs --field and --m, or --table")
    c = constants_for(args.m, args.field.order)
    items = [
        ("field", str(args.field)),
        ("m", c.m),
        ("r", f"{c.r:.12g}"),
        ("phi(1/m)", f"{c.phi_1m:.15g}"),
        ("phi(2/m)", f"{c.phi_2m:.15g}"),
        ("norm_factor", f"{c.norm_factor:.10g}"),
        ("rel_error_exact", f"{c.rel_error_exact:.10g}"),
        ("psi_e", f"{c.psi_e:.10g}"),
        ("psi_v", f"{c.psi_v:.10g}"),
        ("rel_error_asymptotic", f"{c.rel_error_asymptotic:.10g}"),
    ]
    if args.format == "csv":
        _emit_table(out, ("name", "value"), items, "csv")
    else:
        for k, v in items:
            print(f"{k}: {v}", file=out)


def _emit_table(out, head, rows, fmt):
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(head)
        w.writerows(rows)
        return
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    for row in (head, *rows):
        print("  ".join(str(x).rjust(wd) for x, wd in zip(row, widths)), file=out)


def cmd_exact(args, out):
    header, state = _read_exact(args.stream)
    print(f"l0: {state.l0()}", file=out)
    if header.integer_mode:
        print(f"l1: {state.l1()}", file=out)
        print(f"linf: {state.linf()}", file=out)
        if args.field is not None:
            print(f"l0 over {args.field}: {exact_l0(state, args.field)}", file=out)
    elif args.field is not None and args.field != header.field:
        raise CliUsageError(f"stream is over {header.field}; --field {args.field} does not apply")


def cmd_primes(args, out):
    if args.primes_command == "list":
        if args.count < 1:
            raise CliUsageError("--count must be >= 1")
        ps = primes_first_n(args.count) if args.at_least <= 2 else primes_at_least(args.at_least, args.count)
        print(" ".join(map(str, ps)), file=out)
        return
    scheme = _scheme_from_args(args, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = select_prime(scheme)
    for w in caught:
        print(f"fpcsa: warning: {w.message}", file=sys.stderr)
    print(f"prime: {p}", file=out)
    print(f"set size: {prime_set_size(scheme)}", file=out)


_SIM_FLAGS = ("field", "m", "columns", "true_cardinality", "trials", "base_seed", "workload")


def cmd_simulate(args, out):
    checks = {}
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON config: {exc.msg}", line=exc.lineno) from None
        if not isinstance(doc, dict):
            raise FormatError("config must be a JSON object", line=1)
        checks = doc.pop("checks", {}) or {}
        if "C" in doc:
            doc["columns"] = doc.pop("C")
        cfg.update(doc)
    for name in _SIM_FLAGS:
        v = getattr(args, name)
        if v is not None:
            cfg[name] = v
    missing = [k for k in ("m", "true_cardinality", "trials") if k not in cfg]
    if missing:
        raise CliUsageError(f"simulate needs {', '.join(missing)} (flags or config)")
    try:
        config = ExperimentConfig.from_dict(cfg)
    except TypeError as exc:
        raise CliUsageError(f"bad simulate config: {exc}") from None
    report = run_experiment(config)
    results = evaluate_checks(report, checks)
    if args.format == "json":
        doc = report.to_dict(include_estimates=args.estimates)
        doc["checks"] = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
        json.dump(doc, out, indent=2)
        out.write("\n")
    else:
        _simulate_csv(report, out)
        for r in results:
            print(f"check {r.name}: {'PASS' if r.passed else 'FAIL'} ({r.detail})", file=sys.stderr)
    return EXIT_CHECK if any(not r.passed for r in results) else 0


def _simulate_csv(report, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("metric", "value"))
    for key in ("trials", "mean_estimate", "mean_target", "relative_bias", "relative_stddev",
                "predicted_relative_error", "calibrated_fraction"):
        w.writerow((key, getattr(report, key)))
    w.writerow(())
    w.writerow(("level", "observed", "predicted", "sigma"))
    for lv in report.levels:
        w.writerow((lv.level, lv.observed, lv.predicted, lv.sigma))


COMMANDS = {
    "build": cmd_build,
    "estimate": cmd_estimate,
    "merge": cmd_merge,
    "constants": cmd_constants,
    "exact": cmd_exact,
    "primes": cmd_primes,
    "simulate": cmd_simulate,
}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    try:
        args = _build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out) or 0
    except CliUsageError as exc:
        print(f"fpcsa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"fpcsa: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (FpcsaError, ValueError, OSError) as exc:
        if isinstance(exc, ExperimentError):
            print(f"fpcsa: experiment stopped: {exc}", file=sys.stderr)
        else:
            print(f"fpcsa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run(argv):
    """Run the CLI in-process and capture stdout (used by tests)."""
    buf = io.StringIO()
    code = main(argv, buf)
    return code, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
