"""Command line entry point: ``defl plan|simulate|sweep|compare``.

Exit status is 0 on success, 3 for configuration errors, 4 for planner
errors and 5 when a simulation diverges (argparse keeps 2 for usage errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, TextIO

from .config import Baseline, ExperimentConfig, load_config, paper_defaults_path
from .delay_model import (
    LearningParams,
    integer_local_rounds,
    integer_rounds,
    overall_time,
    round_time,
    rounds_to_converge,
)
from .errors import ConfigError, DeflError, PlannerError, SimulationDiverged
from .fl_sim import LogisticTask, QuadraticTask, SimConfig, SyntheticTask, run_defl, time_to_target
from .planner import Plan, PlanInputs, closed_form_plan, gap_ratio, oracle_plan
from .system_model import bottleneck_device

log = logging.getLogger("defl")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_PLANNER = 4
EXIT_DIVERGED = 5

TRACE_HEADER = ("round", "wall_clock_s", "global_loss", "opt_gap")
SWEEP_HEADER = (
    "axis", "value", "b", "theta", "V", "H", "T_cm_s", "T_cp_s", "T_s", "overall_time_s", "sim_opt_gap", "error",
)
CAVEAT = (
    "note: reductions are from the analytic delay model on synthetic settings; "
    "the published CNN training reductions are not reproduced here"
)


def fmt(x: float | int | None) -> str:
    """Serialize a number for CSV output with 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return f"{x:.17g}"


# ----------------------------------------------------------------------- plan


@dataclass
class PlanReport:
    closed_form: Plan
    oracle: Plan
    oracle_pow2: Plan
    bottleneck_index: int
    bottleneck_id: object
    config: dict

    @property
    def gap_ratio(self) -> float:
        return gap_ratio(self.closed_form, self.oracle)

    @property
    def gap_ratio_pow2(self) -> float:
        return (self.closed_form.overall_time_rounded - self.oracle_pow2.overall_time) / self.oracle_pow2.overall_time

    def as_dict(self) -> dict:
        return {
            "closed_form": self.closed_form.as_dict(),
            "oracle": self.oracle.as_dict(),
            "oracle_pow2": self.oracle_pow2.as_dict(),
            "bottleneck_device": {"index": self.bottleneck_index, "id": self.bottleneck_id},
            "gap_ratio": self.gap_ratio,
            "gap_ratio_pow2": self.gap_ratio_pow2,
            "config": self.config,
        }


def cmd_plan(cfg: ExperimentConfig) -> PlanReport:
    inputs = cfg.plan_inputs()
    closed = closed_form_plan(inputs)
    oracle = oracle_plan(inputs, cfg.grid)
    idx, did, _ = bottleneck_device(cfg.fleet)
    return PlanReport(closed, oracle.continuous, oracle.constrained, idx, did, cfg.resolved())


def format_plan(report: PlanReport) -> str:
    lines = [f"bottleneck device: index {report.bottleneck_index} (id {report.bottleneck_id})"]
    cfg = report.config["learning"]
    lines.append(f"learning: epsilon={cfg['epsilon']:g} nu={cfg['nu']:g} c={cfg['c']:g}")
    head = f"{'plan':<12} {'b':>12} {'b_pow2':>7} {'alpha':>12} {'theta':>11} {'H':>12} {'T_cp [s]':>12} {'overall [s]':>13}"
    lines += [head, "-" * len(head)]
    for p in (report.closed_form, report.oracle, report.oracle_pow2):
        lines.append(
            f"{p.source:<12} {p.b_cont:>12.6g} {p.b_rounded:>7d} {p.alpha_star:>12.6g} {p.theta_star:>11.4g} "
            f"{p.H:>12.6g} {p.t_cp_star:>12.6g} {p.overall_time:>13.6g}"
        )
    lines.append(f"closed form at b_pow2: overall {report.closed_form.overall_time_rounded:.6g} s")
    lines.append(f"gap ratio (closed form - oracle) / oracle: {report.gap_ratio:.6g}")
    lines.append(f"gap ratio at power-of-two b: {report.gap_ratio_pow2:.6g}")
    for p in (report.closed_form, report.oracle):
        c = p.certificate
        if c is None:
            continue
        lines.append(
            f"KKT[{p.source}]: scaled stationarity (b, alpha, T_cp) = "
            + ", ".join(f"{r:.3g}" for r in c.scaled_residuals)
            + f"; duals >= 0: {c.duals_nonnegative}; passed: {c.passed()}"
        )
        lines.append(f"KKT[{p.source}]: alpha residual with printed T_cm term = {c.alpha_residual_printed_scaled:.3g} (scaled)")
    return "\n".join(lines)


# ------------------------------------------------------------------ simulation


def make_task(cfg: ExperimentConfig) -> SyntheticTask:
    s = cfg.sim
    weights = [d.samples for d in cfg.fleet.devices]
    if s.task == "quadratic":
        return QuadraticTask.make(
            s.dimension, cfg.M, seed=s.task_seed, noise_sigma_sq=s.noise_sigma_sq, L=s.smoothness,
            mu=s.strong_convexity, identical=s.identical_data, weights=weights, heterogeneity=s.heterogeneity,
        )
    return LogisticTask.make(s.dimension, weights, seed=s.task_seed, identical=s.identical_data)


@dataclass(frozen=True)
class RunChoice:
    label: str
    b: int
    V: int
    H: int


def choose_run(cfg: ExperimentConfig, plan: str = "oracle", rounds: int | None = None,
               local_rounds: int | None = None, batch: int | None = None) -> RunChoice:
    """Integer ``(b, V, H)`` for a simulation from a plan or a baseline name.

    ``H`` comes from the analytic round count (ceiled) unless overridden by
    ``rounds`` or the config, and is capped at ``sim.max_rounds``. The
    config's ``sim.local_rounds`` applies to planned runs only; baselines
    keep their own ``V`` unless ``local_rounds`` is passed.
    """
    inputs = cfg.plan_inputs()
    if plan == "oracle":
        p = oracle_plan(inputs, cfg.grid).constrained
        b, V_real, alpha = p.b_rounded, p.V, p.alpha_star
    elif plan == "closed_form":
        p = closed_form_plan(inputs)
        b, V_real, alpha = p.b_rounded, p.V, p.alpha_star
    else:
        base = {bl.name: bl for bl in cfg.baselines}.get(plan)
        if base is None:
            raise ConfigError(f"unknown plan or baseline {plan!r}")
        b, V_real, alpha = base.b, float(base.V), base.V / cfg.nu
    b = batch or b
    planned_V = cfg.sim.local_rounds if plan in ("oracle", "closed_form") else None
    V = local_rounds or planned_V or integer_local_rounds(V_real)
    if rounds or cfg.sim.rounds:
        H = rounds or cfg.sim.rounds
    else:
        H = integer_rounds(rounds_to_converge(cfg.learning(alpha), b))
    return RunChoice(plan, int(b), int(V), int(min(H, cfg.sim.max_rounds)))


def write_trace_csv(fh: TextIO, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    for r in rows:
        w.writerow([fmt(r.round), fmt(r.wall_clock_s), fmt(r.global_loss), fmt(r.opt_gap)])


def cmd_simulate(cfg: ExperimentConfig, out: TextIO, seed: int | None = None, plan: str = "oracle",
                 rounds: int | None = None, local_rounds: int | None = None, batch: int | None = None,
                 threads: int | None = None):
    """Run one simulation and stream the trace as CSV into ``out``.

    On divergence the rows produced so far stay in the file, followed by an
    ``#error`` marker row, and :class:`SimulationDiverged` is re-raised.
    """
    choice = choose_run(cfg, plan, rounds, local_rounds, batch)
    task = make_task(cfg)
    sim = SimConfig(
        fleet=cfg.fleet, V=choice.V, H=choice.H, b=choice.b, seed=cfg.seed if seed is None else seed,
        eta=cfg.sim.eta, identical_data=cfg.sim.identical_data, threads=threads,
    )
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_HEADER)

    def emit(rec) -> None:
        writer.writerow([fmt(rec.round), fmt(rec.wall_clock_s), fmt(rec.global_loss), fmt(rec.opt_gap)])
        out.flush()

    try:
        trace = run_defl(task, sim, on_round=emit)
    except SimulationDiverged as exc:
        out.write(f"#error,diverged,round={exc.round_index}\n")
        out.flush()
        raise
    out.write(
        f"#summary,plan={choice.label},b={choice.b},V={choice.V},H={choice.H},"
        f"final_opt_gap={fmt(trace.final_gap)},overall_time_s={fmt(trace.overall_time)}\n"
    )
    return trace


# ----------------------------------------------------------------------- sweep


@dataclass
class SweepRow:
    axis: str
    value: float
    b: float | None = None
    theta: float | None = None
    V: float | None = None
    H: float | None = None
    T_cm: float | None = None
    T_cp: float | None = None
    T: float | None = None
    overall_time: float | None = None
    sim_opt_gap: float | None = None
    error: str = ""

    def cells(self) -> list[str]:
        vals = (self.b, self.theta, self.V, self.H, self.T_cm, self.T_cp, self.T, self.overall_time, self.sim_opt_gap)
        return [self.axis, fmt(self.value), *map(fmt, vals), self.error]


def _analytic_row(row: SweepRow, cfg: ExperimentConfig, b: float, alpha: float, epsilon: float) -> SweepRow:
    lp = LearningParams(epsilon=epsilon, M=cfg.M, alpha=alpha, nu=cfg.nu, c=cfg.c)
    t_cm = cfg.plan_inputs().t_cm
    t_cp = b * cfg.plan_inputs().r_max
    H = rounds_to_converge(lp, b)
    T = round_time(t_cm, lp.V, t_cp)
    row.b, row.theta, row.V, row.H = b, lp.theta, lp.V, H
    row.T_cm, row.T_cp, row.T, row.overall_time = t_cm, t_cp, T, overall_time(H, T)
    return row


def cmd_sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float], simulate: bool = False,
              seed: int | None = None) -> list[SweepRow]:
    """Evaluate the delay model along one axis around the closed-form plan.

    ``epsilon`` re-plans at each value; ``b`` keeps the closed-form alpha;
    ``theta`` keeps the closed-form power-of-two batch. A value outside its
    domain produces a row with ``error`` set and the sweep continues.
    """
    if axis not in ("epsilon", "b", "theta"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    base = closed_form_plan(cfg.plan_inputs())
    rows = []
    for v in values:
        row = SweepRow(axis, v)
        try:
            if axis == "epsilon":
                lp = LearningParams(epsilon=v, M=cfg.M, nu=cfg.nu, c=cfg.c)
                p = closed_form_plan(PlanInputs(cfg.plan_inputs().t_cm, cfg.fleet.ratios, lp))
                b, alpha, eps = float(p.b_rounded), p.alpha_star, v
            elif axis == "b":
                if v < 1 or v != int(v):
                    raise ValueError(f"batch size must be an integer >= 1, got {v!r}")
                b, alpha, eps = float(v), base.alpha_star, cfg.epsilon
            else:
                if not 0 < v < 1:
                    raise ValueError(f"theta must lie in (0, 1), got {v!r}")
                b, alpha, eps = float(base.b_rounded), -math.log(v), cfg.epsilon
            _analytic_row(row, cfg, b, alpha, eps)
            if simulate:
                sim = SimConfig(
                    fleet=cfg.fleet, V=integer_local_rounds(row.V), H=min(integer_rounds(row.H), cfg.sim.max_rounds),
                    b=int(b), seed=cfg.seed if seed is None else seed, eta=cfg.sim.eta,
                    identical_data=cfg.sim.identical_data,
                )
                row.sim_opt_gap = run_defl(make_task(cfg), sim).final_gap
        except (DeflError, ValueError) as exc:
            row = SweepRow(axis, v, error=str(exc))
        rows.append(row)
    return rows


def write_sweep_csv(fh: TextIO, rows: Sequence[SweepRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow(r.cells())


# --------------------------------------------------------------------- compare


@dataclass
class ReportRow:
    label: str
    source: str
    b: float
    theta: float
    V: float
    H: float
    T_cm: float
    T_cp: float
    T: float
    overall_time: float
    reductions: dict[str, float] = field(default_factory=dict)
    note: str = ""
    sim_time_to_target: float | None = None
    sim_reached: int | None = None
    sim_runs: int | None = None


def _row(label: str, source: str, b: float, alpha: float, cfg: ExperimentConfig, note: str = "") -> ReportRow:
    lp = cfg.learning(alpha)
    inputs = cfg.plan_inputs()
    t_cp = b * inputs.r_max
    H = rounds_to_converge(lp, b)
    T = round_time(inputs.t_cm, lp.V, t_cp)
    return ReportRow(label, source, b, lp.theta, lp.V, H, inputs.t_cm, t_cp, T, overall_time(H, T), note=note)


def baseline_row(base: Baseline, cfg: ExperimentConfig) -> ReportRow:
    theta, derived = base.resolved_theta(cfg.nu)
    note = f"theta = exp(-V/nu) from V={base.V}" if derived else ""
    row = _row(base.name, "baseline", float(base.b), -math.log(theta), cfg, note)
    if derived:
        row.V = float(base.V)  # exact, avoids log/exp round trip
        row.T = round_time(row.T_cm, row.V, row.T_cp)
        row.overall_time = overall_time(row.H, row.T)
    return row


def cmd_compare(cfg: ExperimentConfig, simulate: bool = False, seed: int | None = None,
                n_seeds: int | None = None) -> list[ReportRow]:
    """Analytic comparison of planned operating points against the baselines.

    With ``simulate`` each row also gets the median simulated wall-clock for
    the global model to reach the target gap, over ``n_seeds`` seeds.
    """
    inputs = cfg.plan_inputs()
    oracle = oracle_plan(inputs, cfg.grid)
    closed = closed_form_plan(inputs)
    rows = [
        _row("DEFL (oracle, pow2 b)", oracle.constrained.source, float(oracle.constrained.b_rounded),
             oracle.constrained.alpha_star, cfg),
        _row("DEFL (oracle, continuous b)", oracle.continuous.source, oracle.continuous.b_cont,
             oracle.continuous.alpha_star, cfg),
        _row("DEFL (closed form)", closed.source, closed.b_cont, closed.alpha_star, cfg),
        _row("DEFL (closed form, pow2 b)", "closed_form_pow2", float(closed.b_rounded), closed.alpha_star, cfg),
    ]
    rows += [baseline_row(b, cfg) for b in cfg.baselines]
    for row in rows:
        for base in rows:
            if base.source == "baseline":
                row.reductions[base.label] = 100.0 * (base.overall_time - row.overall_time) / base.overall_time
    if simulate:
        _simulate_rows(cfg, rows, seed, n_seeds)
    return rows


def _simulate_rows(cfg: ExperimentConfig, rows: list[ReportRow], seed: int | None, n_seeds: int | None) -> None:
    task = make_task(cfg)
    first = cfg.seed if seed is None else seed
    n = n_seeds or cfg.sim.n_seeds
    for row in rows:
        b = int(row.b) if row.b == int(row.b) else int(2 ** round(math.log2(row.b)))
        V = integer_local_rounds(row.V)
        times = []
        for s in range(first, first + n):
            sim = SimConfig(fleet=cfg.fleet, V=V, H=cfg.sim.max_rounds, b=max(1, b), seed=s, eta=cfg.sim.eta,
                            identical_data=cfg.sim.identical_data)
            times.append(time_to_target(task, sim, cfg.target_gap))
        times.sort()
        mid = len(times) // 2
        median = times[mid] if len(times) % 2 else 0.5 * (times[mid - 1] + times[mid])
        row.sim_time_to_target = median
        row.sim_reached = sum(math.isfinite(t) for t in times)
        row.sim_runs = n


def compare_header(rows: Sequence[ReportRow]) -> list[str]:
    bases = [r.label for r in rows if r.source == "baseline"]
    return [
        "label", "source", "b", "theta", "V", "H", "T_cm_s", "T_cp_s", "T_s", "overall_time_s",
        *[f"reduction_vs_{b}_pct" for b in bases],
        "sim_time_to_target_s", "sim_reached", "sim_runs", "note",
    ]


def write_compare_csv(fh: TextIO, rows: Sequence[ReportRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    header = compare_header(rows)
    w.writerow(header)
    bases = [r.label for r in rows if r.source == "baseline"]
    for r in rows:
        w.writerow([
            r.label, r.source, fmt(r.b), fmt(r.theta), fmt(r.V), fmt(r.H), fmt(r.T_cm), fmt(r.T_cp), fmt(r.T),
            fmt(r.overall_time), *[fmt(r.reductions[b]) for b in bases],
            fmt(r.sim_time_to_target), fmt(r.sim_reached), fmt(r.sim_runs), r.note,
        ])


def format_compare(rows: Sequence[ReportRow]) -> str:
    bases = [r.label for r in rows if r.source == "baseline"]
    head = f"{'row':<28} {'b':>9} {'V':>10} {'H':>10} {'T [s]':>10} {'overall [s]':>12}" + "".join(
        f" {'vs ' + b:>14}" for b in bases
    )
    lines = [head, "-" * len(head)]
    for r in rows:
        line = f"{r.label:<28} {r.b:>9.4g} {r.V:>10.4g} {r.H:>10.4g} {r.T:>10.4g} {r.overall_time:>12.5g}"
        line += "".join(f" {r.reductions[b]:>13.1f}%" for b in bases)
        if r.sim_time_to_target is not None:
            line += f"  sim {r.sim_time_to_target:.4g} s ({r.sim_reached}/{r.sim_runs} reached)"
        if r.note:
            line += f"  [{r.note}]"
        lines.append(line)
    lines.append(CAVEAT)
    return "\n".join(lines)


# ------------------------------------------------------------------------ main


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defl", description="Delay-efficient federated learning planner and simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=str(paper_defaults_path()), help="JSON config (default: bundled defaults)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("plan", help="closed-form and oracle plans with KKT certificate")
    common(p)

    p = sub.add_parser("simulate", help="simulate one run and write the per-round CSV trace")
    common(p)
    p.add_argument("--plan", default="oracle", help="oracle, closed_form or a baseline name")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--local-rounds", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)

    p = sub.add_parser("sweep", help="analytic sweep along epsilon, b or theta")
    common(p)
    p.add_argument("--axis", choices=("epsilon", "b", "theta"), required=True)
    p.add_argument("--values", type=_parse_values, required=True, help="comma-separated values")
    p.add_argument("--simulate", action="store_true", help="add the final simulated gap per row")

    p = sub.add_parser("compare", help="planned operating points against baselines")
    common(p)
    p.add_argument("--simulate", action="store_true", help="add simulated time to target gap")
    p.add_argument("--n-seeds", type=int, default=None)
    return parser


def _open_out(path: str | None):
    if path is None:
        return sys.stdout, False
    return open(path, "w", newline=""), True


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.command == "plan":
            report = cmd_plan(cfg)
            print(format_plan(report))
            if args.out:
                Path(args.out).write_text(json.dumps(report.as_dict(), indent=2, default=str) + "\n")
        elif args.command == "simulate":
            fh, close = _open_out(args.out)
            try:
                cmd_simulate(cfg, fh, plan=args.plan, rounds=args.rounds, local_rounds=args.local_rounds,
                             batch=args.batch)
            finally:
                if close:
                    fh.close()
        elif args.command == "sweep":
            rows = cmd_sweep(cfg, args.axis, args.values, simulate=args.simulate)
            fh, close = _open_out(args.out)
            try:
                write_sweep_csv(fh, rows)
            finally:
                if close:
                    fh.close()
        elif args.command == "compare":
            rows = cmd_compare(cfg, simulate=args.simulate, n_seeds=args.n_seeds)
            print(format_compare(rows))
            if args.out:
                with open(args.out, "w", newline="") as fh:
                    write_compare_csv(fh, rows)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"simulation diverged at round {exc.round_index}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PlannerError, DeflError) as exc:
        print(f"planner error ({args.config}): {exc}", file=sys.stderr)
        return EXIT_PLANNER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
