"""Text formats: graph and tree files, matrix and field dumps, CSV tables.

Floats are written with 17 significant digits so that dumps round-trip.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dynamics import Trajectory
from .fem import PINNED, GraphField, GraphGrid
from .graph import Edge, GraphError, MetricGraph, RegularTreeSpec


def fmt(x) -> str:
    return format(float(x), ".17g")


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _vertex(tok: str):
    return int(tok) if tok.lstrip("-").isdigit() else tok


def parse_graph(text: str) -> MetricGraph:
    """``graph v1`` header, ``edge <id> <i> <j> <length>`` lines, optional ``root <v>``."""
    it = _lines(text)
    head = next(it, None)
    if head is None or head[1] != ["graph", "v1"]:
        raise GraphError("missing 'graph v1' header")
    edges, root = [], None
    for lineno, tok in it:
        if tok[0] == "edge" and len(tok) == 5:
            try:
                length = float(tok[4])
            except ValueError:
                raise GraphError(f"line {lineno}: bad length {tok[4]!r}") from None
            edges.append(Edge(_vertex(tok[1]), _vertex(tok[2]), _vertex(tok[3]), length))
        elif tok[0] == "root" and len(tok) == 2:
            root = _vertex(tok[1])
        else:
            raise GraphError(f"line {lineno}: cannot parse {' '.join(tok)!r}")
    vertices = (root,) if root is not None else ()
    return MetricGraph(tuple(edges), vertices, root=root)


def format_graph(G: MetricGraph) -> str:
    out = ["graph v1"]
    out += [f"edge {e.id} {e.i} {e.j} {fmt(e.length)}" for e in G.edges]
    if G.root is not None:
        out.append(f"root {G.root}")
    return "\n".join(out) + "\n"


def parse_tree(text: str) -> RegularTreeSpec:
    """``tree v1`` header and ``gen <n> <b_n> <rho_n>`` lines for ``n = 0..N``.

    The deepest generation's branching number is unused but required for
    uniform rows.
    """
    it = _lines(text)
    head = next(it, None)
    if head is None or head[1] != ["tree", "v1"]:
        raise GraphError("missing 'tree v1' header")
    rows = {}
    for lineno, tok in it:
        if tok[0] != "gen" or len(tok) != 4:
            raise GraphError(f"line {lineno}: expected 'gen <n> <b_n> <rho_n>'")
        try:
            rows[int(tok[1])] = (int(tok[2]), float(tok[3]))
        except ValueError:
            raise GraphError(f"line {lineno}: bad number") from None
    if sorted(rows) != list(range(len(rows))):
        raise GraphError("generations must be numbered 0..N without gaps")
    b = tuple(rows[n][0] for n in range(len(rows)))
    rho = tuple(rows[n][1] for n in range(len(rows)))
    return RegularTreeSpec(b, rho)


def format_tree(spec: RegularTreeSpec) -> str:
    out = ["tree v1"]
    for n in range(spec.depth + 1):
        b = spec.branching[n] if n < len(spec.branching) else 2
        out.append(f"gen {n} {b} {fmt(spec.radii[n])}")
    return "\n".join(out) + "\n"


def read_graph_file(path) -> MetricGraph | RegularTreeSpec:
    """Parse either format, picking by header."""
    text = Path(path).read_text()
    first = next(_lines(text), (0, []))[1]
    return parse_tree(text) if first[:1] == ["tree"] else parse_graph(text)


def format_matrix(A) -> str:
    """``sym-coo v1 N`` header then ``row col value`` for the upper triangle."""
    A = sp.triu(sp.csr_matrix(A)).tocoo()
    order = np.lexsort((A.col, A.row))
    out = [f"sym-coo v1 {A.shape[0]}"]
    out += [f"{A.row[k]} {A.col[k]} {fmt(A.data[k])}" for k in order]
    return "\n".join(out) + "\n"


def parse_matrix(text: str) -> sp.csr_matrix:
    it = _lines(text)
    head = next(it, None)
    if head is None or head[1][:2] != ["sym-coo", "v1"] or len(head[1]) != 3:
        raise ValueError("missing 'sym-coo v1 <N>' header")
    n = int(head[1][2])
    r, c, v = [], [], []
    for _, tok in it:
        i, j, x = int(tok[0]), int(tok[1]), float(tok[2])
        r.append(i)
        c.append(j)
        v.append(x)
        if i != j:
            r.append(j)
            c.append(i)
            v.append(x)
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def format_field(u: GraphField) -> str:
    out = [f"field v1 {u.grid.size}"]
    out += [f"{k} {fmt(x)}" for k, x in enumerate(u.values)]
    return "\n".join(out) + "\n"


def parse_field(text: str, grid: GraphGrid) -> GraphField:
    it = _lines(text)
    head = next(it, None)
    if head is None or head[1][:2] != ["field", "v1"] or len(head[1]) != 3:
        raise ValueError("missing 'field v1 <N>' header")
    n = int(head[1][2])
    if n != grid.size:
        raise ValueError(f"field has {n} DOFs, grid has {grid.size}")
    vals = np.full(n, np.nan)
    for _, tok in it:
        vals[int(tok[0])] = float(tok[1])
    if np.isnan(vals).any():
        raise ValueError("field file does not cover every DOF")
    return GraphField(grid, vals)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def trajectory_csv(traj: Trajectory) -> str:
    rows = ((t, k, u[k]) for t, u in zip(traj.times, traj.values) for k in range(u.size))
    return csv_text(["t", "dof", "value"], ((float(t), k, float(x)) for t, k, x in rows))


def summary_csv(rows) -> str:
    return csv_text(["t", "min", "max", "l2", "mass"],
                    ([float(x) for x in row] for row in rows))


def reduced_csv(z: GraphField) -> str:
    """``rho,value,beta`` for every node of a reduced grid, pinned nodes included."""
    grid = z.grid
    rows = []
    for rho, k, b in grid.nodes():
        rows.append((float(rho), 0.0 if k == PINNED else float(z.values[k]), float(b)))
    return csv_text(["rho", "value", "beta"], rows)
