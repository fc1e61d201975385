"""``netheat`` command line: run configured experiments and validate graph files."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .barrier import BarrierParams, barrier_check
from .config import ConfigError, ExperimentConfig, Expression, load_config
from .dynamics import (BlowUpError, DualCoefficient, Nonlinearity, duality_gap, evolve,
                       solve_backward_dual, summary_rows)
from .fem import GraphField, GraphGrid, assemble, build_grid, dirichlet_set, kirchhoff_residual
from .graph import (Edge, GraphError, MetricGraph, RegularTreeSpec, RootedMetrics,
                    build_regular_tree, check_H2, exhaust, orient_by_root, validate_graph)
from .io import (csv_text, fmt, format_field, format_matrix, parse_field, read_graph_file,
                 reduced_csv, summary_csv, trajectory_csv)
from .order import (OrderViolation, PreconditionError, StationarySolveError,
                    check_order_conditions, monotone_iterate, solve_stationary)
from .tree import (ReducedField, ReducedGrid, TreeReduction, assemble_weighted,
                   evolve_reduced_and_compare)


@dataclass
class Result:
    kind: str
    records: list = field(default_factory=list)  # (name, value, passed or None)
    files: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def record(self, name, value, passed=None):
        self.records.append((name, value, passed))

    @property
    def passed(self) -> bool:
        return all(p is not False for _, _, p in self.records)

    def summary_text(self) -> str:
        lines = [f"netheat {__version__} experiment: {self.kind}"]
        lines += [f"# {n}" for n in self.notes]
        for name, value, passed in self.records:
            v = fmt(value) if isinstance(value, (float, np.floating)) else str(value)
            status = "" if passed is None else (" pass" if passed else " FAIL")
            lines.append(f"{name} = {v}{status}")
        lines.append(f"verdict {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        rows = [(n, v, "" if p is None else ("pass" if p else "fail"))
                for n, v, p in self.records]
        return csv_text(["quantity", "value", "status"], rows)


@dataclass
class Domain:
    graph: MetricGraph
    oriented: MetricGraph  # edges point away from the root
    metrics: RootedMetrics
    spec: RegularTreeSpec | None = None


def _inline_graph(text: str) -> MetricGraph:
    """``i j length; ...`` or ``id i j length; ...``."""
    edges = []
    for k, part in enumerate(p.strip() for p in text.split(";")):
        if not part:
            continue
        tok = part.split()
        if len(tok) == 3:
            tok = [f"e{k}"] + tok
        if len(tok) != 4:
            raise ConfigError(f"inline edge {part!r}: expected 'i j length' or 'id i j length'")
        try:
            edges.append(Edge(tok[0], tok[1], tok[2], float(tok[3])))
        except ValueError:
            raise ConfigError(f"inline edge {part!r}: bad length") from None
    return MetricGraph(tuple(edges))


def build_domain(cfg: ExperimentConfig) -> Domain:
    spec = None
    if cfg.has("tree") or cfg.has("tree_file"):
        if cfg.has("tree"):
            tok = cfg.str("tree").replace(",", " ").split()
            if len(tok) != 3:
                raise ConfigError("field 'tree' must read 'b r depth'")
            spec = RegularTreeSpec.homogeneous(int(tok[0]), float(tok[1]), int(tok[2]))
        else:
            spec = read_graph_file(cfg.path("tree_file"))
            if not isinstance(spec, RegularTreeSpec):
                raise ConfigError("tree_file does not hold a 'tree v1' spec")
        G = build_regular_tree(spec)
    elif cfg.has("graph_file"):
        G = read_graph_file(cfg.path("graph_file"))
        if isinstance(G, RegularTreeSpec):
            spec, G = G, build_regular_tree(G)
    elif cfg.has("graph"):
        G = _inline_graph(cfg.str("graph"))
    else:
        raise ConfigError("missing required field 'graph' (or 'graph_file', 'tree', 'tree_file')")
    problems = validate_graph(G)
    if problems:
        raise GraphError("invalid graph: " + "; ".join(problems))
    if "root" in cfg.values:
        named = [v for v in G.vertices if str(v) == cfg.values["root"]]
        if not named:
            raise ConfigError(f"field 'root': no vertex named {cfg.values['root']!r}")
        root = named[0]
    else:
        root = G.root if G.root is not None else G.vertices[0]
    oriented, metrics = orient_by_root(G, root)
    return Domain(G, oriented, metrics, spec)


def nonlinearity(cfg: ExperimentConfig) -> Nonlinearity:
    kind = cfg.choice("f", Nonlinearity.KINDS)
    params = cfg.floats("f_params", ())
    try:
        return Nonlinearity(kind, params)
    except ValueError as exc:
        raise ConfigError(f"field 'f_params': {exc}") from None


def make_grid(cfg: ExperimentConfig, dom: Domain) -> GraphGrid:
    bc = cfg.choice("bc", ("neumann", "dirichlet"), "neumann")
    trunc = cfg.choice("truncation", ("flux", "zero"), "flux")
    h = cfg.float("h")
    if h <= 0:
        raise ConfigError("field 'h' must be positive")
    return build_grid(dom.graph, h, dirichlet_set(dom.graph, bc, trunc))


def make_field(cfg: ExperimentConfig, key: str, grid: GraphGrid, dom: Domain,
               rng: np.random.Generator) -> GraphField:
    """Constant, ``random``, ``file:<path>`` or an expression in ``rho`` and ``x``."""
    spec = cfg.str(key)
    if spec == "random":
        lo, hi = cfg.floats(f"{key}_range", (0.0, 1.0))
        return GraphField(grid, rng.uniform(lo, hi, grid.size))
    if spec.startswith("file:"):
        p = Path(spec[5:].strip())
        p = p if p.is_absolute() else cfg.base / p
        try:
            return parse_field(p.read_text(), grid)
        except OSError:
            raise ConfigError(f"file for '{key}' not found: {p}") from None
    expr = Expression(spec)
    g, m = grid.graph, dom.metrics

    def fn(eid, x):
        env = {"x": x}
        if expr.uses("rho"):
            e = g.edge(eid)
            env["rho"] = np.minimum(m.r[e.i] + x, m.r[e.j] + e.length - x)
        return expr(**env)
    return GraphField.from_function(grid, fn)


def _schema_time(cfg: ExperimentConfig):
    dt, T = cfg.float("dt"), cfg.float("T")
    if dt <= 0 or T <= 0:
        raise ConfigError("fields 'dt' and 'T' must be positive")
    return dt, T


def run_evolve(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    u0 = make_field(cfg, "u0", grid, dom, rng)
    dt, T = _schema_time(cfg)
    scheme = cfg.choice("scheme", ("euler", "cn"), "euler")
    ops = assemble(grid, lumped=cfg.bool("lumped"))
    traj = evolve(u0, T, dt, f, ops, scheme, cfg.int("stride", 0) or None,
                  cfg.float("cap", 1e6))
    rows = summary_rows(traj, ops)
    res.files["evolution.csv"] = summary_csv(rows)
    if cfg.bool("write_trajectory", True):
        res.files["trajectory.csv"] = trajectory_csv(traj)
    l2_0, l2_T = rows[0][3], rows[-1][3]
    res.record("dofs", grid.size)
    res.record("steps", int(round(T / dt)))
    res.record("min_u", float(traj.values.min()) if grid.size else 0.0)
    res.record("max_u", float(traj.values.max()) if grid.size else 0.0)
    ratio = l2_T / l2_0 if l2_0 > 0 else 0.0
    res.record("l2_ratio", ratio)
    res.record("finite", True, True)
    if cfg.has("expect_l2_ratio"):
        target = cfg.float("expect_l2_ratio")
        rtol = cfg.float("expect_rtol", 1e-3)
        res.record("l2_ratio_rel_error", abs(ratio - target) / abs(target),
                   abs(ratio - target) <= rtol * abs(target))
    if f.kind == "zero":
        sup0 = float(np.max(np.abs(u0.values))) if grid.size else 0.0
        supT = float(np.max(np.abs(traj.values))) if grid.size else 0.0
        res.record("sup_norm_growth", supT - sup0, supT <= sup0 + cfg.float("tol", 1e-8))
        if not grid.dirichlet:
            m0, mT = rows[0][4], rows[-1][4]
            drift = abs(mT - m0) / abs(m0) if m0 else abs(mT)
            res.record("mass_drift", drift, drift <= 1e-10)


def run_compare(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    lo = make_field(cfg, "u0_lower", grid, dom, rng)
    hi = make_field(cfg, "u0_upper", grid, dom, rng)
    if np.any(lo.values > hi.values):
        raise PreconditionError("u0_lower exceeds u0_upper somewhere")
    dt, T = _schema_time(cfg)
    ops = assemble(grid, lumped=cfg.bool("lumped", True))
    a = evolve(lo, T, dt, f, ops)
    b = evolve(hi, T, dt, f, ops)
    gaps = (b.values - a.values).min(axis=1) if grid.size else np.zeros(len(a.times))
    res.files["compare.csv"] = csv_text(["t", "min_gap"],
                                        [(float(t), float(g)) for t, g in zip(a.times, gaps)])
    tol = cfg.float("tol", 10 * (grid.max_h ** 2 + dt))
    res.record("tolerance", tol)
    res.record("min_gap", float(gaps.min()), float(gaps.min()) >= -tol)


def run_monotone(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    q1 = make_field(cfg, "q_lower", grid, dom, rng)
    q2 = make_field(cfg, "q_upper", grid, dom, rng)
    dt = cfg.float("dt")
    tol = cfg.float("tol") if cfg.has("tol") else None
    out = monotone_iterate(q1, q2, f, dt, cfg.float("eps_stat", 1e-8), cfg.float("t_max", 100.0),
                           cfg.choice("bc", ("neumann", "dirichlet"), "neumann"), tol=tol)
    t1, t2 = out.traj1, out.traj2
    rows = []
    for k, t in enumerate(t1.times):
        u1, u2 = t1.values[k], t2.values[k]
        if u1.size:
            rows.append((float(t), u1.min(), u1.max(), u2.min(), u2.max(), (u2 - u1).min()))
    res.files["monotone.csv"] = csv_text(
        ["t", "min_u1", "max_u1", "min_u2", "max_u2", "gap"],
        [tuple(float(x) for x in r) for r in rows])
    res.files["u1.field"] = format_field(out.u1)
    res.files["u2.field"] = format_field(out.u2)
    res.record("t_final", out.t_final)
    res.record("monotonicity_defect", out.monotonicity_defect, True)
    res.record("sandwich_defect", out.sandwich_defect, True)
    res.record("converged", out.converged, out.converged)
    spread = float(np.max(np.abs(out.u1.values - out.u2.values))) if grid.size else 0.0
    res.record("max_abs_u1_minus_u2", spread)
    if cfg.bool("newton", True):
        q = solve_stationary(out.u1, f)
        agree = float(np.max(np.abs(q.values - out.u1.values))) if grid.size else 0.0
        res.record("newton_agreement", agree, agree <= cfg.float("newton_tol", 1e-6))


def run_stationary(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    u0 = make_field(cfg, "u0", grid, dom, rng)
    ops = assemble(grid, lumped=cfg.bool("lumped", True))
    q = solve_stationary(u0, f, ops, cfg.float("newton_tol", 1e-10), cfg.int("max_iters", 50))
    resid = float(np.max(np.abs(ops.K @ q.values - ops.M @ f(q.values)))) if grid.size else 0.0
    res.files["stationary.field"] = format_field(q)
    res.record("residual", resid, True)
    res.record("min_q", float(q.values.min()) if grid.size else 0.0)
    res.record("max_q", float(q.values.max()) if grid.size else 0.0)
    try:
        res.record("kirchhoff_residual", kirchhoff_residual(q))
    except GraphError:
        res.notes.append("kirchhoff residual skipped: an edge has fewer than 2 cells")


def run_dual(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    lo = make_field(cfg, "u0_lower", grid, dom, rng)
    hi = make_field(cfg, "u0_upper", grid, dom, rng)
    if np.any(lo.values > hi.values):
        raise PreconditionError("u0_lower exceeds u0_upper somewhere")
    dt, T = _schema_time(cfg)
    ops = assemble(grid, lumped=cfg.bool("lumped", True))
    a, b = evolve(lo, T, dt, f, ops), evolve(hi, T, dt, f, ops)
    tau = cfg.float("tau", T)
    w = a.values[a.index_of(tau)] - b.values[b.index_of(tau)]
    rows = []
    report = None
    for name, zeta in (("one", np.ones(grid.size)), ("positive_part", (w > 0).astype(float))):
        report = duality_gap(a, b, GraphField(grid, zeta), tau, f, ops)
        ok = report.gap <= 1e-8 * report.zeta_l1
        rows.append((name, report.gap, report.zeta_l1, "pass" if ok else "fail"))
        res.record(f"gap[{name}]", report.gap, ok)
    res.files["dual.csv"] = csv_text(["zeta", "gap", "zeta_l1", "status"], rows)
    res.record("max_coefficient", report.max_coefficient)
    res.record("lipschitz_bound", report.lipschitz_bound, report.coefficient_bounded)
    if grid.size:
        phi = solve_backward_dual(GraphField.constant(grid, 1.0), tau, report.coefficient, ops, dt)
        res.record("min_phi", float(phi.values.min()), float(phi.values.min()) >= -1e-8)
        lam = report.lipschitz_bound
        phil = solve_backward_dual(GraphField.constant(grid, 1.0), tau, DualCoefficient(lam=lam),
                                   ops, dt)
        bound = np.exp(lam * (phil.times - tau))[:, None]
        slack = float(max(np.max(phil.values - bound), np.max(-phil.values)))
        res.record("lambda_form_excess", slack, slack <= 1e-8)


def run_barrier(cfg, res: Result):
    try:
        p = BarrierParams(cfg.float("beta_exp"), cfg.float("K"), cfg.float("theta"),
                          cfg.float("c0"), cfg.float("R_n0"), cfg.float("tau"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n_r, n_t = cfg.int("r_samples", 100), cfg.int("t_samples", 100)
    r_max = cfg.float("r_max", p.R_n0 + 10.0)
    r = np.linspace(p.R_n0, r_max, n_r)
    t = np.linspace(p.tau / n_t, p.tau, n_t)
    kw = {}
    if cfg.has("tree") or cfg.has("tree_file") or cfg.has("graph") or cfg.has("graph_file"):
        dom = build_domain(cfg)
        if dom.spec is not None:
            radii = dom.spec.radii[1:dom.spec.depth + 1]
        else:
            radii = cfg.floats("radii")
        ex = exhaust(dom.oriented, dom.metrics, radii, p.c0)
        kw = dict(graph=dom.oriented, metrics=dom.metrics, exhaustion=ex, n0=cfg.int("n0", 0))
    rep = barrier_check(p, r, t, cfg.float("step", 1e-4), cfg.bool("scaled_step", True), **kw)
    res.record("r0", p.r0)
    res.record("t0", p.t0)
    res.record("sigma", p.sigma)
    res.record("samples", rep.samples)
    res.record("max_eta_t_plus_eta_rr", rep.max_supersolution_residual, rep.supersolution_ok)
    err = max(rep.max_rel_error_t, rep.max_rel_error_r, rep.max_rel_error_rr)
    res.record("max_derivative_rel_error", err, rep.derivatives_ok)
    if kw:
        res.record("flux_signs", rep.signs_ok, rep.signs_ok)
        res.files["levels.csv"] = csv_text(
            ["level", "R", "in_degree_sum", "weighted_sum"],
            [(n, float(R), d, float(w)) for n, R, d, w in rep.level_bounds])
        ratios = rep.decay_ratios()
        if ratios:
            res.record("max_decay_ratio", max(ratios), max(ratios) < 1.0)


def run_tree_reduce(cfg, res: Result):
    dom = build_domain(cfg)
    f = nonlinearity(cfg)
    h = cfg.float("h")
    spec = dom.spec
    cells = [max(2, int(round((spec.radii[n] - spec.radii[n - 1]) / h)))
             for n in range(1, spec.depth + 1)]
    rg = ReducedGrid(spec, cells, cfg.choice("bc", ("neumann", "dirichlet"), "neumann"),
                     cfg.choice("truncation", ("flux", "zero"), "flux"))
    expr = Expression(cfg.str("u0"))
    if expr.uses("x"):
        raise ConfigError("reduced initial data may depend on rho only")
    env_rho = rg.rho()
    z0 = ReducedField(rg, np.broadcast_to(expr(rho=env_rho), env_rho.shape).astype(float))
    dt, T = _schema_time(cfg)
    cmp = evolve_reduced_and_compare(spec, f, z0, T, dt, lumped=cfg.bool("lumped"))
    red: TreeReduction = cmp.reduction
    tol = cfg.float("tol", 1e-8)
    res.record("reduced_dofs", rg.size)
    res.record("full_dofs", red.full.size)
    res.record("max_deviation", cmp.max_deviation, cmp.max_deviation <= tol)
    defect = max(red.sum_identity_defect(red.lift(GraphField(rg, z)))
                 for z in cmp.reduced.values)
    res.record("sum_identity_defect", defect, defect == 0.0)
    res.files["reduced.csv"] = reduced_csv(ReducedField(rg, cmp.reduced.values[-1]))
    ops = assemble_weighted(rg, cfg.bool("lumped"))
    res.files["evolution.csv"] = summary_csv(summary_rows(cmp.reduced, ops))
    if cfg.bool("write_matrices"):
        res.files["K_weighted.coo"] = format_matrix(ops.K)
        res.files["M_weighted.coo"] = format_matrix(ops.M)


def run_check_h2(cfg, res: Result):
    dom = build_domain(cfg)
    if dom.spec is not None:
        radii = cfg.floats("radii", dom.spec.radii[1:dom.spec.depth + 1])
    else:
        radii = cfg.floats("radii")
    ex = exhaust(dom.oriented, dom.metrics, radii, cfg.float("c0", 2.0))
    rep = check_H2(dom.oriented, ex, cfg.float("C"), cfg.float("theta"), cfg.float("beta_exp"))
    res.record("part_i", rep.part_i, rep.part_i)
    if rep.part_i_witnesses:
        res.notes.append("in-degree exceeds out-degree at: "
                         + ", ".join(map(str, rep.part_i_witnesses[:10])))
    res.record("part_ii", rep.part_ii, rep.part_ii)
    res.record("fitted_theta", rep.fitted_theta)
    res.files["h2_levels.csv"] = csv_text(
        ["level", "R", "in_degree_sum", "bound"],
        [(n, float(R), s, float(b)) for n, (R, s, b) in
         enumerate(zip(radii, rep.level_sums, rep.level_bounds))])


def run_check_order(cfg, res: Result):
    dom = build_domain(cfg)
    grid, f = make_grid(cfg, dom), nonlinearity(cfg)
    rng = np.random.default_rng(cfg.int("seed", 0))
    u = make_field(cfg, "u0", grid, dom, rng)
    kind = cfg.choice("order", ("sub", "super"))
    tol = cfg.float("tol") if cfg.has("tol") else None
    rep = check_order_conditions(u, kind, f, cfg.choice("bc", ("neumann", "dirichlet"),
                                                         "neumann"), stationary=True, tol=tol)
    res.files["order_report.txt"] = rep.to_text()
    res.files["order_report.csv"] = rep.to_csv()
    for c in rep.conditions:
        res.record(c.name, c.worst, c.passed)


RUNNERS = {
    "evolve": run_evolve, "compare": run_compare, "monotone": run_monotone,
    "stationary": run_stationary, "dual": run_dual, "barrier": run_barrier,
    "tree-reduce": run_tree_reduce, "check-h2": run_check_h2, "check-order": run_check_order,
}


def run_experiment(cfg: ExperimentConfig) -> Result:
    res = Result(cfg.kind)
    RUNNERS[cfg.kind](cfg, res)
    return res


def output_dir(cfg: ExperimentConfig) -> Path:
    env = os.environ.get("NETHEAT_OUT")
    if env:
        return Path(env)
    out = Path(cfg.values.get("out", "netheat-out"))
    return out if out.is_absolute() else cfg.base / out


def write_result(res: Result, out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(res.summary_text())
        (out / "summary.csv").write_text(res.summary_csv())
        for name, text in sorted(res.files.items()):
            (out / name).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out}: {exc.strerror}") from None


def cmd_run(path: str) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        res = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PreconditionError, OrderViolation, StationarySolveError, BlowUpError,
            GraphError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out = output_dir(cfg)
    try:
        write_result(res, out)
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    sys.stdout.write(res.summary_text())
    return 0 if res.passed else 1


def cmd_validate(path: str) -> int:
    try:
        obj = read_graph_file(path)
    except OSError as exc:
        print(f"cannot read {path}: {exc.strerror}", file=sys.stderr)
        return 2
    except GraphError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    if isinstance(obj, RegularTreeSpec):
        G = build_regular_tree(obj)
        print(f"tree depth {obj.depth}, {len(G.edges)} edges, {len(G.vertices)} vertices")
        return 0
    problems = validate_graph(obj)
    for p in problems:
        print(f"invalid: {p}", file=sys.stderr)
    if problems:
        return 1
    print(f"graph ok: {len(obj.edges)} edges, {len(obj.vertices)} vertices, "
          f"{len(obj.boundary)} boundary vertices")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="netheat",
                                 description="Semilinear heat flow on metric graphs.")
    ap.add_argument("--version", action="version", version=f"netheat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    v = sub.add_parser("validate", help="check a graph or tree file")
    v.add_argument("graph_file")
    args = ap.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    return cmd_validate(args.graph_file)


if __name__ == "__main__":
    sys.exit(main())
