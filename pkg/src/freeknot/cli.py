"""``freeknot`` command line: experiment runs, lemma checks, plots, projection test."""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .energy_opt import LEARNING_RATES, OptimConfig, minimise, optimal_energy
from .errors import CapabilityError, FreeKnotError
from .problems import PROBLEMS, degree_gate, error_metrics, make_problem

SUMMARY_COLUMNS = ("experiment", "degree", "patches", "n_dofs", "n_free_knots", "lr", "iters", "energy",
                   "err_energy_uniform", "err_energy_adapted", "err_l2_uniform", "err_l2_adapted", "wall_s")
TRACE_COLUMNS = ("iter", "energy", "grad_norm", "step_norm", "min_slack", "cg_iters", "cg_residual", "cross_gap")

EXIT_OK, EXIT_FAIL, EXIT_ABORTED = 0, 1, 2


class UsageError(FreeKnotError):
    pass


@dataclass
class RunConfig:
    problem: str = "approx1d"
    degrees: list[int] = field(default_factory=lambda: [1, 2, 3])
    patches: int = 1               # patches per axis
    sizes: list[int] = field(default_factory=lambda: [16])  # cells per patch per axis
    lr: list[float] = field(default_factory=lambda: list(LEARNING_RATES))
    seed: int = 0
    max_iters: int | None = None   # 0 runs the uniform mesh only
    h_min: float = 1e-6
    out: str = "runs/out"
    record_wall_time: bool = False
    plot: bool = False

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise UsageError(f"unknown problem {self.problem!r}; choose from {', '.join(sorted(PROBLEMS))}")
        if not self.lr:
            raise UsageError("the learning-rate list is empty")
        if not self.degrees or not self.sizes:
            raise UsageError("degrees and sizes must be non-empty")
        if self.patches < 1 or min(self.sizes) < 1 or min(self.degrees) < 0:
            raise UsageError("patches and sizes must be positive, degrees non-negative")


def _parse_value(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise UsageError(f"unknown config key {name!r}")
    kind = kinds[name]
    raw = raw.strip()
    try:
        if kind == "list[int]":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "list[float]":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "int":
            return int(raw)
        if kind == "int | None":
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _parse_value(key, value)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _lr_tag(lr: float) -> str:
    return f"{lr:.0e}".replace("+", "").replace("-0", "-")


def _run_tag(problem: str, degree: int, size: int, lr: float | None = None) -> str:
    tag = f"{problem}_p{degree}_n{size}"
    return tag if lr is None else f"{tag}_lr{_lr_tag(lr)}"


def _knot_header(space) -> list[str]:
    if space.dim == 1 and space.n_patches == 1:
        return [f"x{i}" for i in range(space.dim_knots)]
    return [f"s{s}_t{t}_k{i}" for s, t, sl in space.knot_slices() for i in range(sl.stop - sl.start)]


@dataclass
class JobResult:
    lr: float
    energy: float
    iters: int
    aborted: bool
    reason: str
    wall_s: float
    trace: list
    knots: list
    err_energy: float
    err_l2: float


def _run_job(args) -> JobResult:
    problem_name, degree, size, patches, lr, max_iters, h_min = args
    problem = make_problem(problem_name)
    space = problem.init_space(patches, size, degree)
    form = problem.form()
    history = [(0, space.knot_params())]

    def record(row, xi):
        history.append((row.iter, xi))
    cfg = OptimConfig(lr=lr, max_iters=max_iters, h_min=h_min)
    res = minimise(space, form, cfg, mode=problem.mode, callback=record)
    if res.W is not None:
        err = error_metrics(problem, res.space, res.W)
        e_en, e_l2 = err.energy, err.l2
    else:
        e_en = e_l2 = float("nan")
    return JobResult(lr, res.energy, res.iters, res.aborted, res.reason, res.wall_s,
                     [[getattr(r, c) for c in TRACE_COLUMNS] for r in res.trace],
                     [[it] + list(xi) for it, xi in history], e_en, e_l2)


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def threads_from_env() -> int:
    raw = os.environ.get("FREEKNOT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FREEKNOT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run(config: RunConfig, threads: int = 1, log=sys.stderr) -> int:
    """Run the experiment grid and write CSVs; returns the process exit code."""
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    problem = make_problem(config.problem)
    form = problem.form()
    summary = []
    any_aborted = False
    optimise = config.max_iters is None or config.max_iters > 0
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 and optimise else None
    try:
        for degree in config.degrees:
            for size in config.sizes:
                try:
                    space = problem.init_space(config.patches, size, degree)
                except (ValueError, FreeKnotError) as exc:
                    print(f"skipped {_run_tag(problem.name, degree, size)}: {exc}", file=log)
                    continue
                K0, W0 = optimal_energy(space, form)
                uni = error_metrics(problem, space, W0)
                base = [problem.name, degree, space.n_patches, space.dim_weights, space.n_free_knots]
                gated = None
                if optimise:
                    try:
                        degree_gate(problem, space)
                    except CapabilityError as exc:
                        gated = str(exc)
                        print(f"skipped {_run_tag(problem.name, degree, size)}: {exc}", file=log)
                if not optimise or gated:
                    summary.append(base + [None, 0, K0, uni.energy, None, uni.l2, None, 0.0])
                    continue
                jobs = [(problem.name, degree, size, config.patches, lr, config.max_iters, config.h_min)
                        for lr in config.lr]
                results = list(pool.map(_run_job, jobs)) if pool else [_run_job(j) for j in jobs]
                tag = _run_tag(problem.name, degree, size)
                for jr in results:
                    lt = _run_tag(problem.name, degree, size, jr.lr)
                    _write_rows(out / "traces" / f"{lt}.csv", TRACE_COLUMNS, jr.trace)
                    _write_rows(out / "knots" / f"{lt}.csv", ["iter"] + _knot_header(space), jr.knots)
                    if jr.aborted:
                        any_aborted = True
                        print(f"aborted {lt}: {jr.reason}", file=log)
                ok = [r for r in results if not r.aborted and np.isfinite(r.energy)]
                best = min(ok or results, key=lambda r: r.energy)
                wall = sum(r.wall_s for r in results) if config.record_wall_time else 0.0
                summary.append(base + [best.lr, best.iters, best.energy, uni.energy, best.err_energy,
                                       uni.l2, best.err_l2, wall])
                print(f"{tag}: uniform {uni.energy:.3e} adapted {best.err_energy:.3e} (lr {best.lr:g})",
                      file=log)
    finally:
        if pool is not None:
            pool.shutdown()
    _write_rows(out / "summary.csv", SUMMARY_COLUMNS, summary)
    if config.plot:
        from .plotting import plot_run_dir
        plot_run_dir(out)
    return EXIT_ABORTED if any_aborted else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 keeps meaning 'a run aborted'."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAIL, f"{self.prog}: error: {message}\n")


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freeknot", description="Free-knot B-spline variational approximation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment grid and write CSV files")
    r.add_argument("--config", help="flat key = value file; flags override it")
    r.add_argument("--problem", choices=sorted(PROBLEMS))
    r.add_argument("--degrees", type=_int_list)
    r.add_argument("--patches", type=int, help="patches per axis")
    r.add_argument("--sizes", type=_int_list, help="cells per patch per axis")
    r.add_argument("--lr", type=_float_list, help="learning rates (default: the 8-value sweep)")
    r.add_argument("--seed", type=int)
    r.add_argument("--max-iters", type=int, help="0 evaluates the uniform mesh only")
    r.add_argument("--h-min", type=float)
    r.add_argument("--out")
    r.add_argument("--record-wall-time", action="store_true", default=None)
    r.add_argument("--plot", action="store_true", default=None)

    v = sub.add_parser("verify", help="numerical checks of the B-spline bound lemmas")
    v.add_argument("--lemma", choices=("boundedness", "holder", "interchange", "all"), default="all")
    v.add_argument("--p", type=_int_list, default=[0, 1, 2, 3, 4, 5])
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--h-min", type=float, default=0.05)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--csv", help="also write the report as CSV")

    pl = sub.add_parser("plot", help="render SVG plots for a run directory")
    pl.add_argument("run_dir")

    pt = sub.add_parser("project-test", help="compare the projection with a brute-force QP")
    pt.add_argument("--instances", type=int, default=500)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--max-free", type=int, default=6)
    pt.add_argument("--tol", type=float, default=1e-8)
    return parser


def config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return RunConfig(**values)


def _cmd_verify(args) -> int:
    from .verify import check_boundedness, check_holder, check_interchange, format_table, to_csv
    lemmas = ("boundedness", "holder", "interchange") if args.lemma == "all" else (args.lemma,)
    reports = []
    for p in args.p:
        if "boundedness" in lemmas:
            reports.append(check_boundedness(p, args.samples, args.h_min, args.seed))
        if "holder" in lemmas:
            reports.append(check_holder(p, args.samples, args.h_min, args.seed))
        if "interchange" in lemmas:
            for order in (0, 1):
                if p >= order + 1:
                    reports.append(check_interchange(p, args.samples, args.h_min, order, seed=args.seed))
    print(format_table(reports))
    if args.csv:
        Path(args.csv).write_text(to_csv(reports))
    ok = all(r.passed for r in reports)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_project_test(args) -> int:
    from .qp_oracle import compare_random
    res = compare_random(args.instances, args.seed, args.max_free)
    ok = res["oracle"] <= args.tol and res["idempotence"] <= args.tol and res["slack"] >= -1e-12
    print(f"instances        {res['instances']}")
    print(f"max |P - oracle| {res['oracle']:.3e}")
    print(f"max |P(P) - P|   {res['idempotence']:.3e}")
    print(f"min slack        {res['slack']:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run(config_from_args(args), threads_from_env())
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "plot":
            from .plotting import plot_run_dir
            for path in plot_run_dir(args.run_dir):
                print(path)
            return EXIT_OK
        if args.command == "project-test":
            return _cmd_project_test(args)
    except UsageError as exc:
        print(f"freeknot: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
