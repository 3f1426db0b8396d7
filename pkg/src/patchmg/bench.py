"""Experiment drivers behind the command line: full solves, smoother timing,
traffic sweeps and the self-validation suites.

Every driver takes a :class:`RunSpec` and returns plain dicts so the CLI
only has to serialize them.
"""

import dataclasses
import itertools
import time
from dataclasses import dataclass

import numpy as np

from .dofs import n_dofs
from .level import Level
from .mesh import ORDERINGS
from .multigrid import MultigridSolver, SolveConfig, assemble_rhs
from .smoothers import VARIANTS, smooth
from .traffic import CacheConfig, record_trace, simulate_lru, vector_lines

__all__ = [
    "SCHEMA_VERSION",
    "BENCH_COLUMNS",
    "TRAFFIC_COLUMNS",
    "RunSpec",
    "expand",
    "run_solve",
    "bench_smoother",
    "run_traffic",
    "run_validation",
]

SCHEMA_VERSION = 1

BENCH_COLUMNS = (
    "level",
    "variant",
    "ordering",
    "n_B",
    "threads",
    "smoother_seconds_mean",
    "vmult_seconds_mean",
    "ratio",
    "cell_apply_count",
)

TRAFFIC_COLUMNS = (
    "level",
    "variant",
    "ordering",
    "n_B",
    "capacity",
    "line_elems",
    "loads",
    "writebacks",
    "doubles_per_dof",
)

CLI_VARIANTS = tuple(v for v in VARIANTS if v != "richardson")


@dataclass(frozen=True)
class RunSpec:
    """One experiment configuration.

    ``batch_size`` is only meaningful for the ``batched`` variant and
    ``threads > 1`` only for ``batched``; other combinations are rejected
    rather than silently ignored.
    """

    dim: int = 2
    degree: int = 3
    level: int = 3
    variant: str = "combined"
    ordering: str = "z_curve"
    batch_size: int | None = None
    threads: int = 1
    tol: float = 1e-12
    reps: int = 20
    cache_lines: int | None = None
    line_elems: int = 8
    out: str | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        if self.variant not in CLI_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(CLI_VARIANTS)}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}; choose from {', '.join(ORDERINGS)}")
        if self.batch_size is not None:
            if self.variant != "batched":
                raise ValueError("a batch size requires the batched variant")
            if self.batch_size < 1:
                raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.threads > 1 and self.variant != "batched":
            raise ValueError("more than one thread requires the batched variant")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.reps < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.reps}")
        if self.cache_lines is not None and self.cache_lines < 1:
            raise ValueError(f"cache capacity must be >= 1 line, got {self.cache_lines}")
        if self.line_elems < 1:
            raise ValueError(f"line size must be >= 1 element, got {self.line_elems}")

    @property
    def n_dofs(self):
        return n_dofs(self.dim, self.degree, self.level)

    def to_dict(self):
        return dataclasses.asdict(self)


def expand(base, **lists):
    """Cartesian product of list-valued fields applied to ``base``."""
    keys = [k for k, v in lists.items() if v]
    specs = []
    for combo in itertools.product(*(lists[k] for k in keys)):
        specs.append(dataclasses.replace(base, **dict(zip(keys, combo))))
    return specs or [base]


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else 0.0


def run_solve(spec, dry_run=False):
    """Solve ``-lap u = 1`` to relative residual ``spec.tol``, ``spec.reps`` times.

    Setup (levels, schedules, right-hand side) and one warm-up solve are not
    timed. ``per_iteration`` holds the mean smoothing time per V-cycle and
    the time of one finest-level vmult.
    """
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "spec": spec.to_dict(),
        "tol": spec.tol,
        "dofs": spec.n_dofs,
    }
    if dry_run:
        report["dry_run"] = True
        return report
    cfg = SolveConfig(tol=spec.tol, variant=spec.variant, ordering=spec.ordering,
                      batch_size=spec.batch_size, threads=spec.threads)
    solver = MultigridSolver(spec.dim, spec.degree, spec.level, cfg)
    b = solver.rhs()
    solver.solve(b)  # warm-up: compilation and caches
    samples, breakdowns, result = [], [], None
    for _ in range(spec.reps):
        t = time.perf_counter()
        result = solver.solve(b)
        samples.append(time.perf_counter() - t)
        breakdowns.append(result.timings)
    op = solver.levels[-1].op
    t = time.perf_counter()
    op.vmult(result.u)
    vmult_seconds = time.perf_counter() - t
    its = max(result.iterations, 1)
    breakdown = {k: _mean([bd[k] for bd in breakdowns]) for k in breakdowns[0]}
    report.update({
        "iterations": result.iterations,
        "converged": bool(result.converged),
        "relative_residual": result.relative_residual,
        "solve_seconds": {"samples": samples, "mean": _mean(samples)},
        "per_iteration": {
            "smoothing_seconds": breakdown["smoothing"] / its,
            "vmult_seconds": vmult_seconds,
        },
        "breakdown": breakdown,
    })
    return report


def _bench_level(spec):
    return Level.create(spec.dim, spec.degree, spec.level)


def bench_smoother(spec, level=None, vmult_inner=4):
    """Time one smoother sweep against one vmult on the same level.

    One untimed warm-up of each, then ``spec.reps`` repetitions in which a
    sweep and ``vmult_inner`` back-to-back vmults are timed alternately, so
    both see the same machine state. Returns one :data:`BENCH_COLUMNS` row
    plus the raw samples.
    """
    lv = level or _bench_level(spec)
    colored = spec.variant not in ("naive", "combined")
    schedule = lv.schedule(spec.ordering, spec.batch_size, colored)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(lv.space.n_dofs)
    u[lv.space.boundary_mask] = 0.0
    b = assemble_rhs(lv.space)
    out = np.empty_like(u)

    stats = smooth(spec.variant, lv, u, b, schedule, threads=spec.threads)
    lv.op.vmult(u, out)
    ts, tv = [], []
    for _ in range(spec.reps):
        t = time.perf_counter()
        smooth(spec.variant, lv, u, b, schedule, threads=spec.threads)
        ts.append(time.perf_counter() - t)
        t = time.perf_counter()
        for _ in range(vmult_inner):
            lv.op.vmult(u, out)
        tv.append((time.perf_counter() - t) / vmult_inner)
    sm, vm = _mean(ts), _mean(tv)
    row = {
        "level": spec.level,
        "variant": spec.variant,
        "ordering": spec.ordering,
        "n_B": spec.batch_size if spec.batch_size is not None else "",
        "threads": spec.threads,
        "smoother_seconds_mean": sm,
        "vmult_seconds_mean": vm,
        "ratio": sm / vm,
        "cell_apply_count": stats.cell_applies,
    }
    return row, {"smoother_seconds": ts, "vmult_seconds": tv}


def run_traffic(specs, capacities=None, metadata=False):
    """Traffic rows for every spec and every capacity.

    ``capacities`` defaults to each spec's ``cache_lines`` or, if unset, one
    twentieth of the lines spanned by a single global vector. ``None`` inside
    the list stands for an unbounded cache. Traces are recorded once per
    spec and replayed for each capacity.
    """
    rows = []
    levels = {}
    for spec in specs:
        key = (spec.dim, spec.degree, spec.level)
        if key not in levels:
            levels[key] = _bench_level(spec)
        lv = levels[key]
        colored = spec.variant not in ("naive", "combined")
        schedule = lv.schedule(spec.ordering, spec.batch_size, colored)
        trace = record_trace(spec.variant, schedule, lv, metadata=metadata)
        caps = capacities
        if caps is None:
            caps = [spec.cache_lines if spec.cache_lines is not None
                    else max(1, vector_lines(lv.space.n_dofs, spec.line_elems) // 20)]
        for cap in caps:
            rep = simulate_lru(trace, CacheConfig(cap, spec.line_elems))
            rows.append({
                "level": spec.level,
                "variant": spec.variant,
                "ordering": spec.ordering,
                "n_B": spec.batch_size if spec.batch_size is not None else "",
                "capacity": "" if cap is None else cap,
                "line_elems": spec.line_elems,
                "loads": rep.loads,
                "writebacks": rep.writebacks,
                "doubles_per_dof": rep.doubles_per_dof,
            })
    return rows


# ---------------------------------------------------------------- validation

def _suite_oracle(sign, rng):
    from .oracle import assemble_dense

    for d, p, l in [(2, 1, 1), (2, 3, 1), (3, 2, 0), (3, 1, 1)]:
        lv = Level.create(d, p, l, sign)
        A = assemble_dense(d, p, l)
        u = rng.standard_normal(lv.space.n_dofs)
        u[lv.space.boundary_mask] = 0.0
        ref = A.matvec_global(u)
        yield f"vmult d={d} p={p} l={l}", _rel(lv.op.vmult(u), ref) < 1e-11
        r = lv.op.residual(u, np.zeros_like(u))
        yield f"residual d={d} p={p} l={l}", _rel(-r, ref) < 1e-11


def _suite_fdm(sign, rng):
    # independent of the cell operator: must pass even under mutation
    from .fdm import apply_fdm, build_fdm
    from .oracle import dense_patch_matrix

    for d in (2, 3):
        for p in (1, 3):
            h = 0.25
            fdm = build_fdm(p, h, d)
            A = dense_patch_matrix(p, h, d).matrix
            x = rng.standard_normal(A.shape[0])
            yield f"fdm inverse d={d} p={p}", _rel(apply_fdm(fdm, A @ x), x) < 1e-10


def _suite_smoothers(sign, rng):
    for d, p, l in [(2, 2, 1), (3, 1, 1)]:
        lv = Level.create(d, p, l, sign)
        b = assemble_rhs(lv.space)
        seq = lv.schedule("z_curve", None, False)
        col = lv.schedule("z_curve", None, True)
        u0 = rng.standard_normal(lv.space.n_dofs)
        u0[lv.space.boundary_mask] = 0.0
        out = {}
        for name, sch in [("naive", seq), ("combined", seq),
                          ("separated_colorized", col), ("combined_colorized", col)]:
            u = u0.copy()
            smooth(name, lv, u, b, sch)
            out[name] = u
        yield f"naive=combined d={d}", _rel(out["naive"], out["combined"]) < 1e-12
        yield (f"separated=combined colorized d={d}",
               _rel(out["separated_colorized"], out["combined_colorized"]) < 1e-12)
        # one smoothing sweep of an exact patch solver must reduce the error
        # for this elliptic problem
        r0 = np.linalg.norm(lv.op.residual(u0, b))
        r1 = np.linalg.norm(lv.op.residual(out["combined"], b))
        yield f"sweep reduces residual d={d}", r1 < r0


def _suite_multigrid(sign, rng):
    from .oracle import dense_solution

    for d, p, l in [(2, 2, 2), (3, 1, 1)]:
        cfg = SolveConfig(tol=1e-10, max_iter=20)
        solver = MultigridSolver(d, p, l, cfg)
        if sign != 1.0:
            for lv in solver.levels:
                lv.op = type(lv.op)(lv.space, sign)
        b = solver.rhs()
        res = solver.solve(b)
        ref = dense_solution(d, p, l, b)
        yield f"v-cycle converges d={d} p={p} l={l}", res.converged and res.iterations <= 12
        yield f"v-cycle matches direct solve d={d}", _rel(res.u, ref) < 1e-8


SUITES = {
    "oracle": _suite_oracle,
    "fdm": _suite_fdm,
    "smoothers": _suite_smoothers,
    "multigrid": _suite_multigrid,
}


def _rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb > 0 else 1.0)


def run_validation(sign=1.0, suites=None, seed=0):
    """Run the self-check suites; ``sign=-1`` flips the cell operator as a
    mutation test of the suites themselves.

    Returns
    -------
    dict
        ``{"passed": bool, "suites": {name: {"passed", "failed", "total",
        "failures"}}}``
    """
    rng = np.random.default_rng(seed)
    report = {"schema_version": SCHEMA_VERSION, "command": "validate", "suites": {}}
    ok = True
    for name in suites or SUITES:
        npass, failures = 0, []
        try:
            for label, good in SUITES[name](sign, rng):
                if good:
                    npass += 1
                else:
                    failures.append(label)
        except Exception as exc:  # a crashing suite is a failing suite
            failures.append(f"raised {type(exc).__name__}: {exc}")
        report["suites"][name] = {
            "passed": npass,
            "failed": len(failures),
            "total": npass + len(failures),
            "failures": failures,
        }
        ok = ok and not failures
    report["passed"] = ok
    return report
