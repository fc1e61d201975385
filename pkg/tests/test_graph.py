import math

import networkx as nx
import numpy as np
import pytest

from netheat.graph import (Edge, GraphError, MetricGraph, RegularTreeSpec, branching_function,
                           branching_jump, build_regular_tree, check_H2, distance, exhaust,
                           orient_by_root, tree_vertex, validate_graph, vertex_distances)

from graphs import path_graph, random_graph


class TestValidation:
    def test_single_edge_is_valid(self):
        G = MetricGraph.from_edges([("e", "v1", "v2", 1.0)])
        assert validate_graph(G) == []

    def test_loop_is_reported(self):
        G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("b", 1, 1, 1.0)])
        assert any(m.startswith("loop at edge") and "'b'" in m for m in validate_graph(G))

    def test_disconnected(self):
        G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("b", 2, 3, 1.0)])
        assert "not connected" in validate_graph(G)

    @pytest.mark.parametrize("length", [0.0, -1.0, math.inf, math.nan])
    def test_bad_length(self, length):
        G = MetricGraph.from_edges([("a", 0, 1, length)])
        assert any("length" in m for m in validate_graph(G))

    def test_isolated_vertex(self):
        G = MetricGraph((Edge("a", 0, 1, 1.0),), vertices=(7,))
        assert any("isolated vertex" in m for m in validate_graph(G))

    def test_duplicate_ids(self):
        G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("a", 1, 2, 1.0)])
        assert any("duplicate" in m for m in validate_graph(G))

    def test_empty(self):
        assert validate_graph(MetricGraph(())) != []


def test_degree_split():
    G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("b", 1, 2, 1.0), ("c", 3, 1, 1.0)])
    assert G.in_degree(1) == 2 and G.out_degree(1) == 1
    for v in G.vertices:
        assert G.degree(v) == G.in_degree(v) + G.out_degree(v)
    assert G.boundary == frozenset({0, 2, 3})
    assert G.interior == frozenset({1})


class TestDistance:
    def test_path_sum(self):
        G = path_graph([1.0, 2.0])
        assert distance(G, "v0", "v2") == 3.0

    def test_zero_on_diagonal(self):
        G = path_graph([1.0, 2.0])
        assert distance(G, ("e1", 0.7), ("e1", 0.7)) == 0.0
        assert distance(G, "v1", "v1") == 0.0

    def test_triangle_midpoints(self):
        G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("b", 1, 2, 1.0), ("c", 2, 0, 1.0)])
        assert distance(G, ("a", 0.5), ("b", 0.5)) == pytest.approx(1.0, abs=1e-15)

    def test_same_edge_shortcut_through_vertices(self):
        # two points on a long edge whose ends are joined by a short path
        G = MetricGraph.from_edges([("long", 0, 1, 10.0), ("short", 0, 1, 1.0)])
        assert distance(G, ("long", 0.5), ("long", 9.5)) == pytest.approx(2.0)

    def test_coordinate_outside_edge(self):
        G = path_graph([1.0])
        with pytest.raises(GraphError):
            distance(G, ("e0", 1.5), "v0")
        with pytest.raises(GraphError):
            distance(G, ("e0", -0.1), "v0")

    @pytest.mark.parametrize("seed", range(6))
    def test_against_path_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        G = random_graph(rng, max_edges=8)
        H = nx.MultiGraph()
        for e in G.edges:
            H.add_edge(e.i, e.j, key=e.id, length=e.length)

        def brute(a, b):
            if a == b:
                return 0.0
            best = math.inf
            for path in nx.all_simple_edge_paths(H, a, b):
                best = min(best, sum(H.edges[u, v, k]["length"] for u, v, k in path))
            return best

        # points on edges: the best of the four ways in and out of each edge
        pts = [(e.id, float(rng.uniform(0, e.length))) for e in G.edges[:4]]
        for p in pts:
            for q in pts:
                ep, eq = G.edge(p[0]), G.edge(q[0])
                cands = []
                for vp, dp in ((ep.i, p[1]), (ep.j, ep.length - p[1])):
                    for vq, dq in ((eq.i, q[1]), (eq.j, eq.length - q[1])):
                        cands.append(dp + brute(vp, vq) + dq)
                if p[0] == q[0]:
                    cands.append(abs(p[1] - q[1]))
                assert distance(G, p, q) == pytest.approx(min(cands), rel=1e-12, abs=1e-12)


class TestOrientation:
    def test_path_points_away_from_root(self):
        G = MetricGraph.from_edges([("a", 1, 0, 1.0), ("b", 2, 1, 1.0)])
        H, m = orient_by_root(G, 0)
        assert [(e.i, e.j) for e in H.edges] == [(0, 1), (1, 2)]
        assert m.r == {0: 0.0, 1: 1.0, 2: 2.0}

    def test_single_edge_rooted_at_j_flips(self):
        G = MetricGraph.from_edges([("a", "x", "y", 2.0)])
        H, _ = orient_by_root(G, "y")
        assert (H.edges[0].i, H.edges[0].j) == ("y", "x")

    def test_binary_tree_jump_size(self):
        G = build_regular_tree(RegularTreeSpec.homogeneous(2, 1.0, 3))
        _, m = orient_by_root(G, "O")
        assert m.jump_size == 1.0

    def test_jump_size_uses_metric_not_length(self):
        # the long edge's endpoints are 1 apart through the short edge
        G = MetricGraph.from_edges([("long", 0, 1, 5.0), ("short", 0, 1, 1.0)])
        _, m = orient_by_root(G, 0)
        assert m.jump_size == 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_orientation_invariants(self, seed):
        G = random_graph(np.random.default_rng(seed))
        H, m = orient_by_root(G, G.vertices[0])
        assert m.r[G.vertices[0]] == 0.0
        for e in H.edges:
            assert m.r[e.i] <= m.r[e.j]
            assert m.r[e.j] - m.r[e.i] <= e.length + 1e-12
        assert m.jump_size <= max(e.length for e in G.edges)

    def test_unknown_root(self):
        with pytest.raises(GraphError):
            orient_by_root(path_graph([1.0]), "nope")


class TestExhaustion:
    def test_binary_tree_spheres(self):
        G = build_regular_tree(RegularTreeSpec.homogeneous(2, 1.0, 5))
        H, m = orient_by_root(G, "O")
        ex = exhaust(H, m, [1, 2, 3, 4, 5])
        for n, lvl in enumerate(ex.levels, 1):
            assert len(lvl.sphere) == 2 ** (n - 1)
            assert lvl.sphere == {tree_vertex(n, k) for k in range(2 ** (n - 1))}
            assert lvl.interior_violations == ()

    def test_nested(self):
        G = random_graph(np.random.default_rng(3))
        H, m = orient_by_root(G, G.vertices[0])
        ex = exhaust(H, m, [0.5, 1.0, 1.5, 2.0, 2.5])
        for a, b in zip(ex.levels, ex.levels[1:]):
            assert a.vertices <= b.vertices and a.edges <= b.edges

    def test_radius_beyond_diameter(self):
        G = path_graph([1.0, 1.0])
        H, m = orient_by_root(G, "v0")
        ex = exhaust(H, m, [10.0])
        assert ex[0].vertices == set(G.vertices)
        assert ex[0].sphere == frozenset()

    def test_path_edges_by_level(self):
        G = path_graph([1.0, 1.0, 1.0])
        H, m = orient_by_root(G, "v0")
        ex = exhaust(H, m, [1, 2, 3])
        assert [sorted(l.edges) for l in ex.levels] == [["e0"], ["e0", "e1"], ["e0", "e1", "e2"]]

    def test_spacing_violation_names_pair(self):
        G = path_graph([1.0, 1.0, 1.0])
        H, m = orient_by_root(G, "v0")
        with pytest.raises(GraphError, match="R=1.0 -> R=1.1"):
            exhaust(H, m, [1.0, 1.1], c0=2.0)

    def test_interior_violation_reported(self):
        # vertex 1 sits inside V_1 but its edge to 2 leaves the ball only
        # because the sphere radius is not a vertex radius
        G = MetricGraph.from_edges([("a", 0, 1, 1.0), ("b", 1, 2, 1.0)])
        H, m = orient_by_root(G, 0)
        ex = exhaust(H, m, [1.5])
        assert ex[0].interior_violations == ((1, "b"),)

    def test_subgraph_marks_truncation(self):
        G = build_regular_tree(RegularTreeSpec.homogeneous(2, 1.0, 4))
        H, m = orient_by_root(G, "O")
        ex = exhaust(H, m, [1, 2, 3])
        sub = ex.subgraph(H, 1)
        assert sub.truncation == ex[1].sphere
        assert sub.boundary == {"O"}


class TestH2:
    def test_binary_tree_remark_constants(self):
        G = build_regular_tree(RegularTreeSpec.homogeneous(2, 1.0, 8))
        H, m = orient_by_root(G, "O")
        ex = exhaust(H, m, range(1, 9))
        rep = check_H2(H, ex, 0.5, math.log(2), 1.0)
        assert rep.passed
        assert rep.level_sums == [2 ** (n - 1) for n in range(1, 9)]
        assert rep.fitted_theta == pytest.approx(math.log(2), rel=1e-12)

    def test_path_graph(self):
        G = path_graph([1.0] * 5)
        H, m = orient_by_root(G, "v0")
        ex = exhaust(H, m, [1, 2, 3, 4])
        rep = check_H2(H, ex, 1.0, 0.01, 1.0)
        assert rep.part_i and rep.part_ii
        assert rep.level_sums == [1, 1, 1, 1]

    def test_merge_vertex_is_witness(self):
        G = MetricGraph.from_edges([("a", 0, 2, 1.0), ("b", 1, 2, 1.0), ("c", 2, 3, 1.0)])
        ex = exhaust(G, orient_by_root(G, 0)[1], [1.0])
        rep = check_H2(G, ex, 1.0, 1.0, 1.0)
        assert not rep.part_i
        assert rep.part_i_witnesses == [2]

    @pytest.mark.parametrize("b,r", [(2, 1.0), (3, 1.0), (2, 0.5), (4, 2.0)])
    def test_homogeneous_trees_pass_with_log_b_over_r(self, b, r):
        depth = 5
        G = build_regular_tree(RegularTreeSpec.homogeneous(b, r, depth))
        H, m = orient_by_root(G, "O")
        ex = exhaust(H, m, [n * r for n in range(1, depth + 1)], c0=max(2.0, 1.01 / r, r * 1.01))
        rep = check_H2(H, ex, 1.0 / b, math.log(b) / r, 1.0)
        assert rep.passed
        assert rep.fitted_theta == pytest.approx(math.log(b) / r, rel=1e-12)


class TestRegularTree:
    def test_generation_counts(self):
        spec = RegularTreeSpec((1, 2, 2), (0.0, 1.0, 2.0), depth=2)
        G = build_regular_tree(spec)
        assert len(G.edges) == 3
        gens = [sum(1 for v in G.vertices if str(v).startswith(f"v{n}.")) for n in (1, 2)]
        assert gens == [1, 2]
        assert G.boundary == {"O"}
        assert G.truncation == {"v2.0", "v2.1"}

    def test_edge_lengths_follow_radii(self):
        spec = RegularTreeSpec((1, 2, 3), (0.0, 0.5, 2.0))
        G = build_regular_tree(spec)
        for e in G.edges:
            n = int(str(e.id)[1:].split(".")[0])
            assert e.length == spec.radii[n] - spec.radii[n - 1]

    def test_ternary_generation_three(self):
        spec = RegularTreeSpec.homogeneous(3, 1.0, 3)
        G = build_regular_tree(spec)
        assert sum(1 for v in G.vertices if str(v).startswith("v3.")) == 9

    def test_depth_one(self):
        G = build_regular_tree(RegularTreeSpec.homogeneous(2, 1.0, 1))
        assert len(G.edges) == 1
        assert G.leaves == {"O", "v1.0"}
        assert G.truncation == {"v1.0"}

    @pytest.mark.parametrize("b,rho", [((2, 2), (0, 1)), ((1, 1), (0, 1)), ((1, 2), (1, 2)),
                                       ((1, 2), (0, 0))])
    def test_invalid_specs(self, b, rho):
        with pytest.raises(GraphError):
            RegularTreeSpec(b, rho)

    def test_depth_zero(self):
        with pytest.raises(GraphError):
            RegularTreeSpec((1,), (0.0,))


class TestBranchingFunction:
    spec = RegularTreeSpec.homogeneous(2, 1.0, 4)

    @pytest.mark.parametrize("rho,beta", [(0.5, 1), (1.0, 1), (1.5, 2), (2.5, 4), (4.0, 8)])
    def test_values(self, rho, beta):
        assert branching_function(self.spec, rho) == beta

    @pytest.mark.parametrize("rho", [0.0, 4.01, -1.0])
    def test_out_of_range(self, rho):
        with pytest.raises(GraphError):
            branching_function(self.spec, rho)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_jump(self, n):
        eps = 1e-9
        jump = (branching_function(self.spec, n + eps) - branching_function(self.spec, n))
        assert jump == branching_jump(self.spec, n) == 2 ** (n - 1)

    def test_counts_points(self):
        spec = RegularTreeSpec((1, 3, 2), (0.0, 1.0, 1.5))
        G = build_regular_tree(spec)
        _, m = orient_by_root(G, "O")
        for rho in (0.3, 1.0, 1.2, 1.5):
            count = sum(1 for e in G.edges
                        if m.r[e.i] < rho <= m.r[e.j] + 1e-15)
            assert count == branching_function(spec, rho)


def test_vertex_distances_match_networkx():
    G = random_graph(np.random.default_rng(11))
    H = nx.Graph()
    for e in G.edges:
        w = min(e.length, H.edges[e.i, e.j]["weight"]) if H.has_edge(e.i, e.j) else e.length
        H.add_edge(e.i, e.j, weight=w)
    ref = nx.single_source_dijkstra_path_length(H, G.vertices[0])
    got = vertex_distances(G, G.vertices[0])
    for v in G.vertices:
        assert got[v] == pytest.approx(ref[v], rel=1e-14)
