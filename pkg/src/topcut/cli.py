"""Batch runner: solve instance files, print a per-set report, optionally write CSV.

    topcut data/p2.2.k.txt --time-limit 600 --csv results.csv
    topcut benchmarks/ --disable clique --disable indep --jobs 1
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .backend import BackendUnavailable, make_backend
from .engine import COMPONENTS, Engine, EngineConfig, parse_disabled
from .instance import accessibility, data_set_of, instance_name, load_instance
from .model import CutKind
from .primal import validate_solution

log = logging.getLogger(__name__)

CSV_COLUMNS = ["name", "n_prime", "m", "L", "UB", "LB", "gap", "cpu_s", "optimal",
               "cuts_gsec", "cuts_clique", "cuts_indep", "cuts_bound", "cuts_mandatory", "error"]

_CUT_GROUPS = {
    "cuts_gsec": (CutKind.GSEC, CutKind.GSEC_GAMMA),
    "cuts_clique": (CutKind.CLIQUE,),
    "cuts_indep": (CutKind.INDEP_SET,),
    "cuts_bound": (CutKind.PROFIT_UB, CutKind.PROFIT_LB, CutKind.COUNT_UB, CutKind.COUNT_LB),
    "cuts_mandatory": (CutKind.MANDATORY,),
}


def gap(ub: float, lb: float) -> float:
    """Percentage gap ``100 (UB - LB) / UB``; zero when UB is not positive."""
    if ub <= 0:
        return 0.0
    return 100.0 * (ub - lb) / ub


@dataclass
class RunRecord:
    name: str
    n_prime: Optional[int] = None
    m: Optional[int] = None
    L: Optional[float] = None
    UB: Optional[int] = None
    LB: Optional[int] = None
    gap: Optional[float] = None
    cpu_s: Optional[float] = None
    optimal: bool = False
    cuts_gsec: int = 0
    cuts_clique: int = 0
    cuts_indep: int = 0
    cuts_bound: int = 0
    cuts_mandatory: int = 0
    error: str = ""

    @property
    def data_set(self) -> str:
        return data_set_of(self.name)

    @property
    def ok(self) -> bool:
        return not self.error


# -- CSV ------------------------------------------------------------------------

_TYPES = {f.name: f.type for f in fields(RunRecord)}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _uncell(name: str, text: str):
    kind = _TYPES[name]
    if kind == "str":
        return text
    if kind == "bool":
        if text not in ("true", "false"):
            raise ValueError(f"column {name}: expected true/false, got {text!r}")
        return text == "true"
    if text == "":
        return None
    if "int" in kind:
        return int(text)
    return float(text)


def emit_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        row = asdict(rec)
        w.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> List[RunRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise ValueError("missing or unexpected CSV header")
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"line {k}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        out.append(RunRecord(**{c: _uncell(c, v) for c, v in zip(CSV_COLUMNS, row)}))
    return out


# -- running ---------------------------------------------------------------------

def run_one(path: Path, config: EngineConfig) -> RunRecord:
    """Solve one file; every failure becomes an error record instead of raising."""
    name = instance_name(path)
    try:
        inst = load_instance(path)
    except (OSError, ValueError) as exc:
        return RunRecord(name, error=f"unreadable: {exc}")
    rec = RunRecord(name, n_prime=len(accessibility(inst).accessible_customers),
                    m=inst.fleet_size, L=inst.length_limit)
    start = time.process_time()
    try:
        res = Engine(inst, config).solve()
    except BackendUnavailable:
        raise
    except Exception as exc:  # one bad instance must not stop a batch
        log.exception("solving %s failed", name)
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.cpu_s = time.process_time() - start
        return rec
    rec.cpu_s = time.process_time() - start
    problems = validate_solution(inst, res.solution)
    if problems:
        rec.error = "invalid solution: " + "; ".join(problems)
        return rec
    rec.UB, rec.LB = res.ub, res.lb
    rec.gap = gap(res.ub, res.lb)
    rec.optimal = res.optimal
    for column, kinds in _CUT_GROUPS.items():
        setattr(rec, column, sum(res.cut_counts.get(k, 0) for k in kinds))
    return rec


def _run_star(args: Tuple[Path, EngineConfig]) -> RunRecord:
    return run_one(*args)


def collect_paths(paths: Sequence[str]) -> List[Path]:
    out: List[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            # benchmark directories also hold generators and notes; take instance files only
            out.extend(sorted(q for q in p.glob("*.txt") if q.is_file() and not q.name.startswith(".")))
        else:
            out.append(p)
    return out


def run(paths: Sequence[str], config: EngineConfig, jobs: int = 1) -> List[RunRecord]:
    files = collect_paths(paths)
    if jobs <= 1 or len(files) <= 1:
        return [run_one(p, config) for p in files]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_star, [(p, config) for p in files]))


# -- reporting -------------------------------------------------------------------

@dataclass
class SetSummary:
    data_set: str
    instances: int
    n_opt: int
    cpu_avg: Optional[float]  # over instances solved to optimality by every compared run
    gap_avg: Optional[float]
    errors: int


def summarize(runs: Dict[str, List[RunRecord]]) -> Dict[str, List[SetSummary]]:
    """Per data set summaries for each labelled batch of records.

    The CPU average only covers instances that every batch solved to
    optimality, so configurations are compared on the same instances.
    """
    common = None
    for records in runs.values():
        solved = {r.name for r in records if r.optimal}
        common = solved if common is None else common & solved
    common = common or set()
    out = {}
    for label, records in runs.items():
        groups: Dict[str, List[RunRecord]] = {}
        for r in records:
            groups.setdefault(r.data_set, []).append(r)
        rows = []
        for ds in sorted(groups, key=_set_key):
            recs = groups[ds]
            good = [r for r in recs if r.ok]
            cpu = [r.cpu_s for r in good if r.name in common]
            gaps = [r.gap for r in good if r.gap is not None]
            rows.append(SetSummary(ds, len(recs), sum(r.optimal for r in recs),
                                   sum(cpu) / len(cpu) if cpu else None,
                                   sum(gaps) / len(gaps) if gaps else None,
                                   len(recs) - len(good)))
        out[label] = rows
    return out


def _set_key(name: str):
    return (0, int(name)) if name.isdigit() else (1, name)


def _fmt(value, digits: int = 2) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def format_table(records: Sequence[RunRecord], summaries: Sequence[SetSummary]) -> str:
    head = ["name", "n'", "m", "L", "UB", "LB", "gap%", "cpu_s", "opt"]
    body = []
    for r in records:
        if r.error:
            body.append([r.name, _fmt(r.n_prime), _fmt(r.m), _fmt(r.L, 1), "error", r.error,
                         "", "", ""])
            continue
        body.append([r.name, _fmt(r.n_prime), _fmt(r.m), _fmt(r.L, 1), _fmt(r.UB), _fmt(r.LB),
                     _fmt(r.gap), _fmt(r.cpu_s), "yes" if r.optimal else "no"])
    lines = _align([head] + body)
    lines.append("")
    shead = ["set", "#inst", "#Opt", "CPU_avg", "gap_avg", "errors"]
    sbody = [[s.data_set, str(s.instances), str(s.n_opt), _fmt(s.cpu_avg), _fmt(s.gap_avg),
              str(s.errors)] for s in summaries]
    lines.extend(_align([shead] + sbody))
    return "\n".join(lines) + "\n"


def _align(rows: List[List[str]]) -> List[str]:
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    return ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topcut", description="Exact cutting-plane solver for the "
                                "Team Orienteering Problem on Chao-format instance files.")
    p.add_argument("paths", nargs="+", help="instance files, or directories whose *.txt files are instances")
    p.add_argument("--time-limit", type=float, default=7200.0, help="seconds per instance")
    p.add_argument("--cut-time-limit", type=float, default=3600.0,
                   help="seconds per instance for the cut-strengthening stages")
    p.add_argument("--tm1", type=float, default=5.0,
                   help="seconds per bound/probe sub-problem")
    p.add_argument("--backend", choices=("builtin", "external"), default="builtin")
    p.add_argument("--external-solver", default=None,
                   help="engine for --backend external (currently: highs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--disable", action="append", default=[], metavar="COMPONENT",
                   help="switch off one component; repeatable. Choices: " + ", ".join(COMPONENTS))
    p.add_argument("--cache-dir", type=Path, default=None,
                   help="directory for incompatibility-graph caches")
    p.add_argument("--csv", type=Path, default=None, help="write per-instance records here")
    p.add_argument("--jobs", type=int, default=1, help="instances solved in parallel")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        disabled = parse_disabled(args.disable)
        make_backend(args.backend, args.external_solver, args.seed)
    except (ValueError, BackendUnavailable) as exc:
        print(f"topcut: {exc}", file=sys.stderr)
        return 2
    config = EngineConfig(time_limit=args.time_limit, cut_time_limit=args.cut_time_limit,
                          tm1=args.tm1, disabled=disabled, backend=args.backend,
                          external_solver=args.external_solver, seed=args.seed,
                          cache_dir=args.cache_dir)
    records = run(args.paths, config, jobs=args.jobs)
    summaries = summarize({"run": records})["run"]
    sys.stdout.write(format_table(records, summaries))
    if args.csv is not None:
        args.csv.write_text(emit_csv(records))
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"topcut: {r.name}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
