"""Command line driver: ``relmech run|check <scenario>``.

Exit codes: 0 all task assertions hold, 1 an assertion failed, 2 the
scenario did not parse or validate, 3 an evaluation error occurred.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ad import DomainError
from .bundle import ChartError, JetPoint1, JetPoint2, prolong_jet1
from .connections import curvature, gamma_from_xi, relative_velocity, torsion
from .expr import EvaluationError, parse_expression
from .frames import (
    FAILS,
    INCONCLUSIVE_PASS,
    FrameConsistencyError,
    NotQuadraticError,
    adapted_frame_residual,
    coriolis_decomposition,
    covariant_residual,
    frame_connection,
    free_motion_curvature_test,
    geodesic_residual,
    relative_acceleration,
    transform_dynamic_equation,
)
from .integrator import Trajectory, integrate, pushforward_trajectory, trajectory_residual
from .scenario import Scenario, ScenarioError, Task, load_scenario

log = logging.getLogger("relmech")

# base tolerances, multiplied by --tol-scale
TOL_CHAINED = 1e-10
TOL_CURVATURE = 1e-8
TOL_COVARIANCE = 1e-8


class TaskEvaluationError(RuntimeError):
    def __init__(self, task: Task, exc: Exception):
        self.task = task
        super().__init__(f"task {task.name!r} (line {task.line}): {exc}")


def _json_value(x):
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_value(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x) + 0.0  # no negative zeros in reports
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dump(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_json_value(data), indent=2, sort_keys=True) + "\n")


def _point(sc: Scenario, task: Task, velocity: bool = True):
    t = task.get("point_t")
    q = task.get("point_q")
    if t is None or q is None:
        return None
    v = task.get("point_v")
    qv = q.numbers()
    vv = v.numbers() if v is not None else [0.0] * sc.m
    if len(qv) != sc.m or len(vv) != sc.m:
        raise ScenarioError(f"task {task.name!r}: point has wrong dimension", q.line, sc.path)
    return JetPoint1(t.number(), qv, vv)


class Runner:
    def __init__(self, sc: Scenario, out: Path, tol_scale: float = 1.0):
        self.sc = sc
        self.out = out
        self.scale = tol_scale
        self.equations = dict(sc.equations)

    def run(self) -> tuple[int, list[dict]]:
        self.out.mkdir(parents=True, exist_ok=True)
        results = []
        for index, task in enumerate(self.sc.tasks, 1):
            handler = getattr(self, "task_" + task.kind.replace("-", "_"))
            try:
                res = handler(task, index)
            except (EvaluationError, DomainError, ChartError, FrameConsistencyError, NotQuadraticError) as exc:
                raise TaskEvaluationError(task, exc) from exc
            record = {
                "task": task.name,
                "kind": task.kind,
                "line": task.line,
                "inputs": task.echo(),
                **res,
            }
            _dump(self.out / f"{index:02d}_{task.name}.json", record)
            results.append({"task": task.name, "kind": task.kind, "passed": res["passed"]})
            log.info("task %s (%s): %s", task.name, task.kind, "pass" if res["passed"] else "FAIL")
        status = 0 if all(r["passed"] for r in results) else 1
        return status, results

    # -- tasks --------------------------------------------------------------

    def task_transform(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        chart = self.sc.charts[task.get("chart").raw]
        xt = transform_dynamic_equation(xi, chart)
        save = task.get("save_as")
        if save is not None:
            self.equations[save.raw] = xt
        out = {"tolerances": {}, "passed": True}
        p = _point(self.sc, task)
        if p is not None:
            out["value_at_point"] = xt.at(p)
        expects = sorted(k for k in task.params if k.startswith("expect"))
        if expects:
            exprs = [parse_expression(task.get(f"expect{i + 1}").raw, self.sc.m, self.sc.constants)
                     for i in range(self.sc.m)] if len(expects) == self.sc.m else None
            if exprs is None:
                raise ScenarioError(f"task {task.name!r}: need expect1..expect{self.sc.m}", task.line, self.sc.path)
            box = self.sc.box.sample(self.sc.m)
            got = xt.at(box)
            want = np.array([np.broadcast_to(e(box.t, list(box.q), list(box.v)), box.t.shape) for e in exprs])
            dev = float(np.max(np.abs(got - want)))
            tol = TOL_CHAINED * self.scale
            out["max_deviation_from_expected"] = dev
            out["tolerances"]["expected_form"] = tol
            out["passed"] = dev <= tol
        return out

    def task_coriolis(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        frame = self.sc.frames[task.get("frame").raw]
        tol = TOL_CHAINED * self.scale
        box = self.sc.box.sample(self.sc.m)
        worst = coriolis_decomposition(xi, frame, box).max_discrepancy
        out = {"max_discrepancy": worst, "tolerances": {"decomposition": tol}, "points": self.sc.box.n}
        passed = worst <= tol
        p = _point(self.sc, task)
        if p is not None:
            rep = coriolis_decomposition(xi, frame, p)
            out["at_point"] = {
                "a_direct": rep.a_direct,
                "a_decomposed": rep.a_decomposed,
                "centrifugal": rep.centrifugal,
                "coriolis": rep.coriolis,
                "nabla": rep.nabla,
                "rel_v": rep.rel_v,
            }
            exp = task.get("expect_a")
            if exp is not None:
                err = float(np.max(np.abs(rep.a_direct - np.array(exp.numbers()))))
                out["expected_a_error"] = err
                passed = passed and err <= tol
        out["passed"] = passed
        return out

    def task_check_free(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        tol = TOL_CURVATURE * self.scale
        rep = free_motion_curvature_test(xi, self.sc.box, tol)
        out = {"max_curvature": rep.max_curvature, "verdict": rep.verdict, "tolerances": {"curvature": tol}}
        exp = task.get("expect")
        passed = True
        if exp is not None:
            want = {"fails": FAILS, "passes": INCONCLUSIVE_PASS}.get(exp.raw)
            if want is None:
                raise ScenarioError(f"task {task.name!r}: expect must be 'fails' or 'passes'", exp.line, self.sc.path)
            passed = rep.verdict == want
        out["passed"] = passed
        return out

    def task_integrate(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        p0 = JetPoint1(task.get("t0").number(), task.get("q0").numbers(), task.get("v0").numbers())
        t_end = task.get("t_end").number()
        step = task.get("step").number()
        tr = integrate(xi, p0, t_end, step)
        csv_name = f"{index:02d}_{task.name}.csv"
        self._write_csv(self.out / csv_name, tr)
        res = trajectory_residual(xi, tr)
        out = {
            "csv": csv_name,
            "samples": len(tr),
            "step": tr.step,
            "diverged": tr.diverged,
            "final": {"t": tr.t[-1], "q": tr.q[-1], "v": tr.v[-1], "a": tr.a[-1]},
            "residual": res,
            "residual_over_step2": res / tr.step**2,
            "tolerances": {},
        }
        passed = not tr.diverged
        chart_v = task.get("chart")
        if chart_v is not None:
            chart = self.sc.charts[chart_v.raw]
            pushed = pushforward_trajectory(chart, tr)
            direct = integrate(transform_dynamic_equation(xi, chart), prolong_jet1(chart, p0), t_end + chart.time_offset, step)
            gap = float(np.max(np.abs(pushed.q - direct.q)))
            tol = max(TOL_COVARIANCE, 10 * tr.step**2) * self.scale
            pushed_name = f"{index:02d}_{task.name}_{chart.name}.csv"
            self._write_csv(self.out / pushed_name, pushed)
            out["covariance"] = {"chart": chart.name, "csv": pushed_name, "max_position_gap": gap}
            out["tolerances"]["covariance"] = tol
            passed = passed and gap <= tol
        out["passed"] = passed
        return out

    def task_geodesic(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        frame = self.sc.frames[task.get("frame").raw]
        tol = TOL_CHAINED * self.scale
        box = self.sc.box.sample(self.sc.m, with_velocity=False)
        worst = float(np.max(np.abs(geodesic_residual(xi, frame, box.t, list(box.q)))))
        out = {"max_residual": worst, "geodesic": worst <= tol, "tolerances": {"geodesic": tol}}
        p = _point(self.sc, task)
        if p is not None:
            out["residual_at_point"] = geodesic_residual(xi, frame, p.t, list(p.q))
        exp = task.get("expect")
        passed = True
        if exp is not None:
            passed = out["geodesic"] == (exp.raw == "geodesic")
        out["passed"] = passed
        return out

    def task_adapted_check(self, task: Task, index: int) -> dict:
        frame = self.sc.frames[task.get("frame").raw]
        chart = self.sc.charts[task.get("chart").raw]
        tol = TOL_CHAINED * self.scale
        res = adapted_frame_residual(frame, chart, self.sc.box)
        adapted = res <= tol
        exp = task.get("expect")
        want = True if exp is None else exp.raw == "adapted"
        return {"max_residual": res, "adapted": adapted, "tolerances": {"adapted": tol}, "passed": adapted == want}

    def task_report(self, task: Task, index: int) -> dict:
        xi = self.equations[task.get("equation").raw]
        frame = self.sc.frames[task.get("frame").raw]
        p = _point(self.sc, task)
        gamma = gamma_from_xi(xi)
        fc = frame_connection(gamma, frame).at(p)
        a = xi.at(p)
        return {
            "relative_velocity": relative_velocity(frame, p),
            "absolute_acceleration": a,
            "relative_acceleration": relative_acceleration(xi, frame, p),
            "frame_connection": {"g0": fc.g0, "gk": fc.gk},
            "torsion_max": torsion(gamma, p).max_abs,
            "curvature_max": curvature(gamma, p).max_abs,
            "covariant_residual_on_solution": covariant_residual(xi, frame, JetPoint2(p.t, p.q, p.v, a)),
            "tolerances": {},
            "passed": True,
        }

    def _write_csv(self, path: Path, tr: Trajectory) -> None:
        m = tr.m
        header = ["t"] + [f"q{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)] + [f"a{i + 1}" for i in range(m)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(len(tr)):
                row = [tr.t[k], *tr.q[k], *tr.v[k], *tr.a[k]]
                w.writerow([f"{x:.17g}" for x in row])


def run_scenario(path, out_dir, seed: int | None = None, tol_scale: float = 1.0) -> int:
    """Run every task of a scenario and write reports; returns the exit status."""
    out = Path(out_dir)
    try:
        sc = load_scenario(path, seed)
    except ScenarioError as exc:
        log.error("%s", exc)
        return 2
    runner = Runner(sc, out, tol_scale)
    try:
        status, results = runner.run()
    except ScenarioError as exc:
        log.error("%s", exc)
        return 2
    except TaskEvaluationError as exc:
        log.error("evaluation error: %s", exc)
        return 3
    summary = {
        "scenario": sc.name,
        "dim": sc.m,
        "seed": sc.seed,
        "tol_scale": tol_scale,
        "box": {"t": sc.box.t, "q": sc.box.q, "v": sc.box.v, "points": sc.box.n},
        "version": __version__,
        "tasks": results,
        "status": status,
    }
    _dump(out / "summary.json", summary)
    return status


def check_scenario(path) -> int:
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        log.error("%s", exc)
        return 2
    print(f"{sc.name}: dim={sc.m}, {len(sc.equations)} equations, {len(sc.frames)} frames, "
          f"{len(sc.charts)} charts, {len(sc.tasks)} tasks")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="relmech", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run all tasks of a scenario")
    run.add_argument("scenario")
    run.add_argument("--out", default="out", help="report directory (default: ./out)")
    run.add_argument("--seed", type=int, default=None, help="override the sampling seed")
    run.add_argument("--tol-scale", type=float, default=1.0, help="multiply all tolerances")
    chk = sub.add_parser("check", help="parse and validate a scenario only")
    chk.add_argument("scenario")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "check":
        return check_scenario(args.scenario)
    return run_scenario(args.scenario, args.out, args.seed, args.tol_scale)


if __name__ == "__main__":
    sys.exit(main())
