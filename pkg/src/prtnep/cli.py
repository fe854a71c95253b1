"""Command-line front end.

    prtnep plan --case garver6 --model dc --security for --trials 10
    prtnep evaluate --case garver6 --model ac --security n-1 --plan 2-3:2,2-6:3,3-5:2,4-6:3
    prtnep validate garver6 --model ac --security n-1

Exit codes: 0 when the reported plan is feasible (zero expected penalty),
3 when the study ends without a feasible plan, 4 for case-file or validation
errors.  argparse keeps 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mabc
from .casefile import CaseFileError, load_case, resolve_case_path
from .network import NetworkCase
from .planner import (
    CrispContext,
    GateConfig,
    PlanReport,
    StudyEvaluator,
    StudySpec,
    probabilistic_evaluate,
    solve_crisp,
    solve_probabilistic,
    verify_plan,
)

REPORT_SCHEMA = "prtnep.report/1"
EXIT_OK = 0
EXIT_INFEASIBLE = 3
EXIT_CASE_ERROR = 4

log = logging.getLogger("prtnep")


@dataclass
class RunConfig:
    case_path: Path
    study: StudySpec
    mabc: mabc.MABCConfig
    crisp_mabc: mabc.MABCConfig
    gates: GateConfig
    stage: str = "full"
    out_dir: Path | None = None
    report: str = "both"
    verify: int = 0
    case_name: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mabc.trials < 1 or self.crisp_mabc.trials < 1:
            raise ValueError("trials must be >= 1")
        if not Path(self.case_path).exists():
            raise FileNotFoundError(self.case_path)


def resolve_case(name: str, model: str) -> Path:
    """``garver6`` + ``ac`` resolves to the bundled ``garver6-ac`` file."""
    p = Path(name)
    if p.exists():
        return p
    try:
        return resolve_case_path(f"{name}-{model}")
    except FileNotFoundError:
        return resolve_case_path(name)


# -- validation -------------------------------------------------------------

def validate_case(case: NetworkCase, spec: StudySpec | None = None) -> list[str]:
    """Invariant and completeness diagnostics; empty when the case is usable."""
    out = []
    th = case.thermal
    pf = sum(g.participation for g in th)
    if th and abs(pf - 1.0) > 1e-4:
        out.append(f"thermal participation factors sum to {pf:.6f}, expected 1")
    for g in case.generators:
        if g.p_min > g.p_max:
            out.append(f"generator {g.id}: p_min > p_max")
        if g.kind == "thermal" and not g.p_min <= g.p_base <= g.p_max:
            out.append(f"generator {g.id}: base dispatch {g.p_base} outside [{g.p_min}, {g.p_max}]")
    for c in case.corridors:
        if c.n_bar < 0:
            out.append(f"corridor {c.id}: negative n_bar")
        if c.n0 < 0:
            out.append(f"corridor {c.id}: negative n0")
        if c.s_max <= 0 or c.x <= 0:
            out.append(f"corridor {c.id}: s_max and x must be positive")
        if not 0.0 <= c.for_rate <= 1.0:
            out.append(f"corridor {c.id}: for_rate outside [0, 1]")
    if sum(b.p_demand for b in case.buses) > sum(g.p_max for g in case.generators) + 1e-9:
        out.append("total demand exceeds total generating capacity")
    if spec is not None:
        if spec.wind and case.wind_generators and not case.wind:
            out.append("wind units present but the [uncertainty] section has no wind rows")
        if spec.load and not case.load_sigma_pct:
            out.append("load uncertainty requested but the [uncertainty] section has no load rows")
        if spec.line_variables and not any(c.for_rate > 0 for c in case.corridors):
            out.append("FOR study requested but no corridor has a forced outage rate")
    return out


# -- report writers ---------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def report_document(config: RunConfig, reports: list[PlanReport]) -> dict:
    final = reports[-1]
    return _clean({
        "schema": REPORT_SCHEMA,
        "case": config.case_name,
        "study": {"model": config.study.model, "security": config.study.security},
        "seed": config.mabc.seed,
        "trials": {"crisp": config.crisp_mabc.trials, "full": config.mabc.trials},
        "gates": config.gates.enabled,
        "stages": [r.to_dict() for r in reports],
        "result": {
            "stage": final.stage,
            "feasible": final.feasible,
            "labels": final.labels,
            "cost": final.v_pr if final.stage == "full" else final.v_cr,
            "new_lines": final.new_line_count,
        },
    })


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_csv(case: NetworkCase, report: PlanReport, elapsed: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["corridor", "additions", "cost_contribution"])
    if report.plan is not None:
        for c, n in zip(case.corridors, report.plan.additions):
            if n:
                w.writerow([c.label, n, repr(float(n * c.cost))])
    cost = report.v_pr if report.stage == "full" else report.v_cr
    w.writerow(["total_lines", report.new_line_count, ""])
    w.writerow(["v_cr", "", "" if report.v_cr is None else repr(float(report.v_cr))])
    w.writerow(["v_pr", "", "" if cost is None else repr(float(cost))])
    w.writerow(["tp", "", f"{elapsed:.3f}"])
    w.writerow(["pf_calls", report.counters.pf_calls, ""])
    for g in sorted(report.counters.gate_rejections):
        w.writerow([f"gate_rejections_{g}", report.counters.gate_rejections[g], ""])
    return buf.getvalue()


def write_artifacts(config: RunConfig, case: NetworkCase, reports: list[PlanReport], timing: dict) -> None:
    out = config.out_dir
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    if config.report in ("json", "both"):
        (out / "report.json").write_text(dump_json(report_document(config, reports)))
        (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    if config.report in ("csv", "both"):
        (out / "report.csv").write_text(report_csv(case, reports[-1], timing.get("total", 0.0)))
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for r in reports:
        for k, text in enumerate(r.traces):
            (traces / f"{r.stage}_trial{k:03d}.csv").write_text(text)


# -- commands ---------------------------------------------------------------

def run_study(config: RunConfig) -> tuple[int, list[PlanReport], dict]:
    case = load_case(config.case_path)
    timing = {}
    t0 = time.perf_counter()
    crisp_spec = StudySpec(config.study.model, config.study.security, wind=False, load=False, outages=False)
    if config.study.security == "for":
        # outages are random in a FOR study; the deterministic stage uses the intact network
        crisp_spec = StudySpec(config.study.model, "none", wind=False, load=False, outages=False)
    crisp = solve_crisp(case, crisp_spec, config.crisp_mabc, log=log.info)
    timing["crisp"] = crisp.elapsed
    reports = [crisp]
    if crisp.plan is None:
        log.error("no feasible crisp plan found")
        timing["total"] = time.perf_counter() - t0
        return EXIT_INFEASIBLE, reports, timing
    log.info("crisp plan %s at %s", crisp.labels, crisp.v_cr)
    if config.stage == "full":
        full = solve_probabilistic(case, config.study, CrispContext(crisp.plan, crisp.v_cr), config.mabc,
                                   config.gates, log=log.info)
        timing["full"] = full.elapsed
        reports.append(full)
    final = reports[-1]
    if config.verify and final.plan is not None:
        spec = config.study if config.stage == "full" else crisp_spec
        final.verification = verify_plan(final.plan, case, spec, config.verify, config.mabc.seed).to_dict()
    timing["total"] = time.perf_counter() - t0
    write_artifacts(config, case, reports, timing)
    return (EXIT_OK if final.feasible else EXIT_INFEASIBLE), reports, timing


def parse_plan(text: str, case: NetworkCase):
    labels = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        label, _, n = item.partition(":")
        labels[label.strip()] = int(n) if n else 1
    return case.plan_from_labels(labels)


def _spec(args) -> StudySpec:
    return StudySpec(args.model, args.security, wind=not args.no_wind, load=not args.no_load)


def _cmd_plan(args) -> int:
    path = resolve_case(args.case, args.model)
    case = load_case(path)
    spec = _spec(args)
    problems = validate_case(case, spec if args.stage == "full" else None)
    if problems:
        for p in problems:
            print(f"{path}: {p}", file=sys.stderr)
        return EXIT_CASE_ERROR
    base = dict(cs_n=args.colony, iter=args.iter, seed=args.seed)
    config = RunConfig(
        case_path=path,
        study=spec,
        mabc=mabc.MABCConfig(trials=args.trials, **base),
        crisp_mabc=mabc.MABCConfig(trials=args.crisp_trials, **base),
        gates=GateConfig(enabled=not args.no_gates),
        stage=args.stage,
        out_dir=Path(args.out) if args.out else None,
        report=args.report,
        verify=args.verify_mcs,
        case_name=case.name,
    )
    code, reports, timing = run_study(config)
    final = reports[-1]
    cost = final.v_pr if final.stage == "full" else final.v_cr
    status = "feasible" if final.feasible else "no feasible plan"
    print(f"{case.name} {spec.label} {final.stage}: {status}; cost {cost}; lines {final.new_line_count}; "
          f"plan {final.labels}; pf calls {final.counters.pf_calls}; tp {timing['total']:.2f} s")
    if not final.feasible and final.best_infeasible:
        print(f"best infeasible candidate: {final.best_infeasible}", file=sys.stderr)
    return code


def _cmd_evaluate(args) -> int:
    path = resolve_case(args.case, args.model)
    case = load_case(path)
    spec = _spec(args)
    plan = parse_plan(args.plan, case)
    if args.crisp:
        e = StudyEvaluator(case, spec).crisp(plan)
    else:
        e = probabilistic_evaluate(plan, case, spec, truncate=False)
    print(json.dumps(_clean({"plan": plan.describe(case), "cost": e.cost, "expected_penalty": e.expected_penalty,
                             "v_aug": e.v_aug, "feasible": e.feasible, "pf_calls": e.pf_calls}),
                     indent=2, sort_keys=True))
    return EXIT_OK if e.feasible else EXIT_INFEASIBLE


def _cmd_validate(args) -> int:
    path = resolve_case(args.case, args.model)
    case = load_case(path)
    spec = _spec(args) if args.security != "none" or not (args.no_wind and args.no_load) else None
    problems = validate_case(case, spec)
    for p in problems:
        print(f"{path}: {p}")
    if not problems:
        print(f"{path}: ok")
    return EXIT_CASE_ERROR if problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prtnep", description="Probabilistic AC/DC transmission expansion planning")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def study_args(p, case_positional=False):
        if case_positional:
            p.add_argument("case")
        else:
            p.add_argument("--case", required=True, help="bundled case name or path to a .case file")
        p.add_argument("--model", choices=("ac", "dc"), default="ac")
        p.add_argument("--security", choices=("none", "for", "n-1"), default="none")
        p.add_argument("--no-wind", action="store_true", help="hold wind at its mean")
        p.add_argument("--no-load", action="store_true", help="hold loads at their means")

    p = sub.add_parser("plan", help="run the crisp stage and, by default, the probabilistic stage")
    study_args(p)
    p.add_argument("--stage", choices=("crisp", "full"), default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1, help="restarts of the probabilistic stage")
    p.add_argument("--crisp-trials", type=int, default=5, help="restarts of the crisp stage")
    p.add_argument("--colony", type=int, default=20)
    p.add_argument("--iter", type=int, default=30)
    p.add_argument("--verify-mcs", type=int, default=0, metavar="N")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--no-gates", action="store_true", help="disable gates and truncation")
    p.add_argument("--report", choices=("json", "csv", "both"), default="both")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("evaluate", help="evaluate one plan without truncation")
    study_args(p)
    p.add_argument("--plan", required=True, help="comma list like 2-6:3,3-5:2")
    p.add_argument("--crisp", action="store_true", help="deterministic check at mean conditions")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("validate", help="check a case file")
    study_args(p, case_positional=True)
    p.set_defaults(func=_cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CaseFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CASE_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CASE_ERROR


if __name__ == "__main__":
    sys.exit(main())
