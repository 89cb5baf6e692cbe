"""Scenario files, the runner and the command line.

A scenario is a YAML document validated against ``scenario.schema.json``; see
docs/scenarios.md. Running it yields one :class:`RunRecord` per op outcome,
written as JSON lines (or CSV). The exit status is 0 iff every record passes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import expr
from .circle_bundle import BundleGrid, vertical_fft
from .fieldio import load_field, save_csv, save_field, save_spectrum
from .ops import REGISTRY, Context
from .surface import BaseMetric, DifferentialM, HatMetric, OneForm, TorusChart
from .thermostat import ThermostatTriple
from .transport_weyl import hat_metric_from_beltrami, pqr, transport_u, weyl_compatible_theta

SCENARIO_DIR = Path(__file__).with_name("scenarios")


class ScenarioError(ValueError):
    def __init__(self, message: str, source: str = "<scenario>", line: int | None = None,
                 col: int | None = None):
        where = f"{source}:{line}:{col}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line, self.col = line, col


# -- loading ---------------------------------------------------------------------


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("scenario.schema.json").read_text())


def _mark_for(node: yaml.Node, path) -> yaml.Mark | None:
    """Start mark of the YAML node reached by following a jsonschema error path."""
    mark = node.start_mark
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node, mark = nxt, nxt.start_mark
    return mark


@dataclass
class OpSpec:
    op: str
    tol: float
    compare: str = "below"
    trend: str | None = None
    trend_rtol: float = 0.05
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    grid: dict
    ops: list[OpSpec]
    members: dict = field(default_factory=dict)
    seed: int = 0
    description: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def resolutions(self) -> list[int | None]:
        n = self.grid.get("n")
        return list(n) if isinstance(n, list) else [n]

    def at(self, n: int) -> "Scenario":
        grid = {k: v for k, v in self.grid.items() if k not in ("nx", "ny", "nphi")}
        grid.update(n=int(n), nphi=max(16, int(n)))
        return replace(self, grid=grid)

    def shape(self) -> tuple[int, int, int]:
        g = self.grid
        n = g.get("n")
        n = n[0] if isinstance(n, list) else n
        nx, ny = g.get("nx", n or 32), g.get("ny", n or 32)
        return int(nx), int(ny), int(g.get("nphi", max(16, n or 32)))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        cand = SCENARIO_DIR / f"{path}.yaml"
        if not cand.exists():
            raise ScenarioError(f"no such scenario file or shipped scenario {str(path)!r}")
        path = cand
    text = path.read_text()
    return parse_scenario(text, str(path), path.parent)


def parse_scenario(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark
        raise ScenarioError(exc.problem or str(exc), source, m.line + 1 if m else None,
                            m.column + 1 if m else None) from None
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", source, 1, 1)
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema()).iter_errors(data))
    if err is not None:
        mark = _mark_for(node, err.absolute_path)
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ScenarioError(f"{loc}: {err.message}", source, mark.line + 1 if mark else None,
                            mark.column + 1 if mark else None)
    ops = []
    for i, o in enumerate(data["ops"]):
        if o["op"] not in REGISTRY:
            mark = _mark_for(node, ["ops", i, "op"])
            raise ScenarioError(f"unknown op {o['op']!r}; known: {', '.join(sorted(REGISTRY))}",
                                source, mark.line + 1, mark.column + 1)
        ops.append(OpSpec(o["op"], float(o["tol"]), o.get("compare", "below"), o.get("trend"),
                          float(o.get("trend_rtol", 0.05)), dict(o.get("params", {}))))
    members = data.get("members", {})
    base_dir = Path.cwd() if base_dir is None else base_dir
    _check_members(members, node, source, base_dir)
    return Scenario(data["name"], data["grid"], ops, members, int(data.get("seed", 0)),
                    data.get("description", ""), base_dir)


def _check_members(members: dict, node: yaml.Node, source: str, base_dir: Path) -> None:
    """Parse every expression and check referenced files exist, reporting YAML positions."""
    def walk(obj, path):
        if isinstance(obj, dict):
            if set(obj) == {"file"}:
                if not (base_dir / obj["file"]).exists():
                    m = _mark_for(node, path + ["file"])
                    raise ScenarioError(f"missing data file {obj['file']!r}", source, m.line + 1, m.column + 1)
                return
            for k, v in obj.items():
                walk(v, path + [k])
        elif isinstance(obj, str):
            try:
                expr.parse(obj)
            except expr.ExpressionError as exc:
                m = _mark_for(node, path)
                raise ScenarioError(str(exc), source, m.line + 1, m.column + exc.col) from None
    walk(members, ["members"])


# -- building members ----------------------------------------------------------


def _field(spec, chart: TorusChart, base_dir: Path) -> np.ndarray:
    if isinstance(spec, dict):
        arr, _ = load_field(base_dir / spec["file"])
        if arr.shape != chart.shape:
            raise ScenarioError(f"data file {spec['file']!r} has shape {arr.shape}, grid needs {chart.shape}")
        return arr
    x, y = chart.coords
    return expr.evaluate(spec, x, y)


def _real(a: np.ndarray, what: str) -> np.ndarray:
    if np.iscomplexobj(a):
        if np.any(a.imag):
            raise ScenarioError(f"{what} must be real")
        a = a.real
    return np.asarray(a, dtype=float)


def _form(spec: dict, chart: TorusChart, base_dir: Path) -> OneForm:
    if "exact" in spec:
        h = _real(_field(spec["exact"], chart, base_dir), "exact potential")
        return OneForm.exact(chart, h) * float(spec.get("scale", 1.0))
    return OneForm(chart, _real(_field(spec["cx"], chart, base_dir), "cx"),
                   _real(_field(spec["cy"], chart, base_dir), "cy"))


def build_context(sc: Scenario, seed: int | None = None, op_index: int = 0) -> Context:
    nx, ny, nphi = sc.shape()
    chart = TorusChart(nx, ny, float(sc.grid.get("Lx", 2 * np.pi)), float(sc.grid.get("Ly", 2 * np.pi)))
    m = sc.members
    conf = _real(_field(m.get("metric", 0.0), chart, sc.base_dir), "metric")
    grid = BundleGrid(BaseMetric(chart, conf), nphi)
    built: dict = {}
    if "mu" in m:
        built["mu"] = np.asarray(_field(m["mu"], chart, sc.base_dir), dtype=complex)
    if "h" in m:
        built["h"] = _real(_field(m["h"], chart, sc.base_dir), "h")
    a = m.get("A")
    A = (DifferentialM(chart, np.asarray(_field(a["coeff"], chart, sc.base_dir), dtype=complex),
                       int(a.get("degree", 3))) if a else DifferentialM.zero(chart))
    built["A"] = A
    for name in ("theta", "alpha"):
        spec = m.get(name)
        if spec is None:
            built[name] = OneForm.zero(chart) if name == "theta" else None
        elif spec.get("weyl_compatible"):
            if "mu" not in built:
                raise ScenarioError(f"{name}: weyl_compatible needs member 'mu'")
            built[name] = weyl_compatible_theta(grid, built["mu"], A)
        else:
            built[name] = _form(spec, chart, sc.base_dir)
    gh = m.get("ghat")
    if gh is not None:
        if gh.get("beltrami"):
            if "mu" not in built:
                raise ScenarioError("ghat: beltrami needs member 'mu'")
            built["ghat"] = hat_metric_from_beltrami(grid, built["mu"])
        else:
            built["ghat"] = HatMetric(chart, *(_real(_field(gh[k], chart, sc.base_dir), k)
                                               for k in ("g11", "g12", "g22")))
    triple = ThermostatTriple(grid, A, built["theta"])
    rng = np.random.default_rng([sc.seed if seed is None else seed, op_index])
    return Context(grid, triple, built, rng)


# -- running -----------------------------------------------------------------------


@dataclass
class RunRecord:
    scenario: str
    op: str
    label: str
    grid: tuple[int, int, int]
    seed: int
    value: float
    tol: float
    compare: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def to_json(self) -> str:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return json.dumps(d, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _passes(value: float, spec: OpSpec) -> bool:
    if not math.isfinite(value):
        return False
    return value < spec.tol if spec.compare == "below" else value > spec.tol


def run_at(sc: Scenario, seed: int | None = None) -> list[RunRecord]:
    seed = sc.seed if seed is None else seed
    shape = sc.shape()
    out = []
    for i, spec in enumerate(sc.ops):
        t0 = time.perf_counter()
        ctx = build_context(sc, seed, i)
        outcomes = REGISTRY[spec.op](ctx, spec.params)
        dt = (time.perf_counter() - t0) / max(len(outcomes), 1)
        for o in outcomes:
            v = float(o.value)
            out.append(RunRecord(sc.name, spec.op, o.label, shape, seed, v, spec.tol, spec.compare,
                                 _passes(v, spec), dict(o.details), dt))
    return out


def _apply_trends(sc: Scenario, records: list[RunRecord]) -> None:
    """A trend op fails any resolution at which its value dropped below the previous one."""
    for spec in sc.ops:
        if spec.trend != "non_decreasing":
            continue
        prev: dict[str, float] = {}
        for r in records:
            if r.op != spec.op:
                continue
            if r.label in prev:
                drop = (prev[r.label] - r.value) / abs(prev[r.label])
                r.details["decrease_vs_previous"] = drop
                if drop > spec.trend_rtol:
                    r.passed = False
            prev[r.label] = r.value


def run(sc: Scenario | str | Path, seed: int | None = None) -> list[RunRecord]:
    """Run every op; a scenario whose grid lists several n runs once per n."""
    if not isinstance(sc, Scenario):
        sc = load_scenario(sc)
    res = sc.resolutions
    if len(res) == 1:
        return run_at(sc, seed)
    return sweep(sc, res, seed)


def sweep(sc: Scenario | str | Path, grids: list[int], seed: int | None = None) -> list[RunRecord]:
    if not isinstance(sc, Scenario):
        sc = load_scenario(sc)
    records = []
    for n in grids:
        records += run_at(sc.at(n), seed)
    _apply_trends(sc, records)
    return records


def convergence_table(records: list[RunRecord]) -> str:
    """CSV with one row per (op, label, resolution) and the observed decay order vs. the previous row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["op", "label", "nx", "ny", "nphi", "value", "order", "passed"])
    prev: dict[tuple[str, str], RunRecord] = {}
    for r in records:
        key = (r.op, r.label)
        order = ""
        p = prev.get(key)
        if p is not None and p.value > 0 and r.value > 0 and r.grid[0] != p.grid[0]:
            order = f"{-math.log(r.value / p.value) / math.log(r.grid[0] / p.grid[0]):.3f}"
        w.writerow([r.op, r.label, *r.grid, repr(r.value), order, r.passed])
        prev[key] = r
    return buf.getvalue()


def records_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["scenario", "op", "label", "nx", "ny", "nphi", "seed", "value", "tol", "compare", "passed", "runtime"]
    w.writerow(cols)
    for r in records:
        w.writerow([r.scenario, r.op, r.label, *r.grid, r.seed, repr(r.value), r.tol, r.compare, r.passed,
                    f"{r.runtime:.6f}"])
    return buf.getvalue()


def list_scenarios() -> list[tuple[str, str]]:
    out = []
    for p in sorted(SCENARIO_DIR.glob("*.yaml")):
        d = yaml.safe_load(p.read_text())
        out.append((p.stem, d.get("description", "").strip().splitlines()[0] if d.get("description") else ""))
    return out


# -- fields for dump-field ------------------------------------------------------------

DUMPABLE = ("metric", "A", "theta", "alpha", "mu", "a", "Va", "lam", "theta_sm", "u")


def member_field(sc: Scenario, name: str, seed: int | None = None) -> np.ndarray:
    ctx = build_context(sc, seed)
    t = ctx.triple
    if name == "metric":
        return ctx.grid.metric.conf
    if name == "A":
        return t.A.coeff
    if name in ("theta", "alpha"):
        f = ctx.need(name) if name == "alpha" else t.theta
        return np.stack([f.cx, f.cy])
    if name == "mu":
        return ctx.need("mu")
    if name in ("a", "Va", "lam", "theta_sm"):
        return getattr(t, name)
    if name == "u":
        return transport_u(pqr(ctx.grid, ctx.need("ghat")))
    raise ScenarioError(f"cannot dump {name!r}; choose from {', '.join(DUMPABLE)}")


# -- CLI ---------------------------------------------------------------------------------


def _emit(records: list[RunRecord], fmt: str, out_dir: Path | None, stem: str) -> None:
    text = records_csv(records) if fmt == "csv" else "".join(r.to_json() + "\n" for r in records)
    sys.stdout.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.{'csv' if fmt == 'csv' else 'jsonl'}").write_text(text)


def _run_one(args: tuple[str, int | None]) -> list[RunRecord]:
    return run(args[0], args[1])


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="thermoweyl", description="Run thermostat verification scenarios.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out-dir", type=Path, default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("run", help="run one or more scenarios")
    p.add_argument("scenarios", nargs="+", help="scenario file or shipped scenario name")
    p.add_argument("--jobs", type=int, default=1, help="run scenarios in parallel processes")
    common(p)
    p = sub.add_parser("sweep", help="run a scenario at several resolutions and print a convergence table")
    p.add_argument("scenario")
    p.add_argument("--grids", default="16,32,64")
    common(p)
    sub.add_parser("list-scenarios", help="list shipped scenarios")
    p = sub.add_parser("dump-field", help="write a member or derived field to disk")
    p.add_argument("scenario")
    p.add_argument("member", choices=DUMPABLE)
    p.add_argument("--spectrum", action="store_true", help="also write the vertical spectrum (SM fields)")
    common(p)
    args = ap.parse_args(argv)

    try:
        if args.cmd == "list-scenarios":
            for name, desc in list_scenarios():
                print(f"{name:28s} {desc}")
            return 0
        if args.cmd == "run":
            jobs = [(s, args.seed) for s in args.scenarios]
            if args.jobs > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                    results = list(ex.map(_run_one, jobs))
            else:
                results = [_run_one(j) for j in jobs]
            ok = True
            for (s, _), recs in zip(jobs, results):
                _emit(recs, args.format, args.out_dir, Path(s).stem)
                ok &= all(r.passed for r in recs)
            return 0 if ok else 1
        if args.cmd == "sweep":
            sc = load_scenario(args.scenario)
            grids = [int(g) for g in args.grids.split(",") if g.strip()]
            recs = sweep(sc, grids, args.seed)
            _emit(recs, args.format, args.out_dir, sc.name)
            table = convergence_table(recs)
            sys.stderr.write(table)
            if args.out_dir is not None:
                (args.out_dir / f"{sc.name}_convergence.csv").write_text(table)
            return 0 if all(r.passed for r in recs) else 1
        if args.cmd == "dump-field":
            sc = load_scenario(args.scenario)
            data = member_field(sc, args.member, args.seed)
            out_dir = args.out_dir or Path.cwd()
            out_dir.mkdir(parents=True, exist_ok=True)
            ch = (sc.grid.get("Lx", 2 * np.pi), sc.grid.get("Ly", 2 * np.pi))
            stem = f"{sc.name}_{args.member}"
            path = (save_csv(out_dir / f"{stem}.csv", data) if args.format == "csv"
                    else save_field(out_dir / f"{stem}.thw", data, *ch))
            print(path)
            if args.spectrum and data.ndim == 3 and args.member not in ("theta", "alpha"):
                print(save_spectrum(out_dir / f"{stem}_spectrum", vertical_fft(data), Lx=ch[0], Ly=ch[1]))
            return 0
    except (ScenarioError, expr.ExpressionError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 2


__all__ = ["Scenario", "OpSpec", "RunRecord", "ScenarioError", "load_scenario", "parse_scenario", "run",
           "run_at", "sweep", "convergence_table", "records_csv", "list_scenarios", "build_context",
           "member_field", "main", "schema", "SCENARIO_DIR"]
