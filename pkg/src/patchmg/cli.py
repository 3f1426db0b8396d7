"""Command line interface: ``patchmg {solve,smoother-bench,traffic,validate}``.

List-valued flags (``--level 4,5,6``, ``--variant combined,batched``) sweep
the cartesian product of their values. ``--config FILE`` reads flat
``key = value`` lines using the flag names; flags given on the command line
win over the file.
"""

import argparse
import csv
import dataclasses
import io
import json
import sys

from .bench import (
    BENCH_COLUMNS,
    TRAFFIC_COLUMNS,
    RunSpec,
    bench_smoother,
    expand,
    run_solve,
    run_traffic,
    run_validation,
)
from .exceptions import ResourceError

LIST_KEYS = ("level", "variant", "ordering", "batch_size", "threads", "cache_lines")


def _none_or_int(s):
    s = s.strip()
    return None if s.lower() in ("", "none", "inf", "unbounded") else int(s)


_PARSERS = {
    "dim": int,
    "degree": int,
    "level": int,
    "variant": str.strip,
    "ordering": str.strip,
    "batch_size": _none_or_int,
    "threads": int,
    "tol": float,
    "reps": int,
    "cache_lines": _none_or_int,
    "line_elems": int,
    "out": str.strip,
}


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in _PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def _add_run_flags(p):
    p.add_argument("--config", help="flat key=value file with defaults for the flags below")
    p.add_argument("--dim", help="spatial dimension (2 or 3)")
    p.add_argument("--degree", help="polynomial degree p")
    p.add_argument("--level", help="mesh level(s), comma separated")
    p.add_argument("--variant", help="smoother variant(s), comma separated")
    p.add_argument("--ordering", help="patch ordering(s): z_curve, hierarchical")
    p.add_argument("--batch-size", dest="batch_size", help="patches per color per batch (batched only)")
    p.add_argument("--threads", help="worker threads (batched only)")
    p.add_argument("--tol", help="relative residual reduction")
    p.add_argument("--reps", help="timed repetitions")
    p.add_argument("--cache-lines", dest="cache_lines",
                   help="simulated cache capacity(ies) in lines; 'none' for unbounded")
    p.add_argument("--line-elems", dest="line_elems", help="doubles per cache line")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="patchmg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="multigrid solve with timing breakdown (JSON)")
    _add_run_flags(p)
    p.add_argument("--dry-run", action="store_true", help="report the problem size only")

    p = sub.add_parser("smoother-bench", help="smoother time relative to one vmult (CSV)")
    _add_run_flags(p)

    p = sub.add_parser("traffic", help="simulated memory traffic per DoF (CSV)")
    _add_run_flags(p)
    p.add_argument("--metadata", action="store_true", help="include index-table accesses")

    p = sub.add_parser("validate", help="run the self-check suites")
    p.add_argument("--mutate", choices=["sign-flip"],
                   help="deliberately break the cell operator to check the suites fail")
    p.add_argument("--out", help="write the JSON summary here")
    return parser


def collect(args, allow_lists):
    """Merge config file and flags into a base RunSpec plus sweep lists."""
    raw = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _PARSERS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    scalars, lists = {}, {}
    for key, value in raw.items():
        parse = _PARSERS[key]
        if key in LIST_KEYS and "," in value:
            if not allow_lists:
                raise ValueError(f"--{key.replace('_', '-')} takes a single value here")
            lists[key] = [parse(v) for v in value.split(",")]
        else:
            scalars[key] = parse(value)
    # validate sweep members against the other fields, not the defaults
    first = {**scalars, **{k: v[0] for k, v in lists.items()}}
    base = RunSpec(**first)
    specs = expand(base, **lists)
    return base, specs, lists


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            report = run_validation(sign=-1.0 if args.mutate == "sign-flip" else 1.0)
            for name, s in report["suites"].items():
                status = "PASS" if not s["failed"] else "FAIL"
                print(f"{status} {name}: {s['passed']}/{s['total']}", file=sys.stderr)
                for f in s["failures"]:
                    print(f"    failed: {f}", file=sys.stderr)
            _write(json.dumps(report, indent=2) + "\n", args.out)
            return 0 if report["passed"] else 1

        if args.command == "solve":
            base, _, _ = collect(args, allow_lists=False)
            report = run_solve(base, dry_run=args.dry_run)
            _write(json.dumps(report, indent=2) + "\n", base.out)
            if args.dry_run:
                return 0
            return 0 if report["converged"] else 1

        base, specs, lists = collect(args, allow_lists=True)
        if args.command == "smoother-bench":
            rows = []
            for spec in specs:
                row, _ = bench_smoother(spec)
                rows.append(row)
            _write(_csv(rows, BENCH_COLUMNS), base.out)
            return 0

        # traffic: capacities are a sweep over one recorded trace
        caps = lists.pop("cache_lines", None)
        specs = expand(dataclasses.replace(base, cache_lines=None), **lists)
        if caps is None and base.cache_lines is not None:
            caps = [base.cache_lines]
        rows = run_traffic(specs, capacities=caps, metadata=args.metadata)
        _write(_csv(rows, TRAFFIC_COLUMNS), base.out)
        return 0
    except (ValueError, ResourceError) as exc:
        print(f"patchmg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
