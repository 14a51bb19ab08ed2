"""Fixed collection of small graphs (n <= 20) shared by the oracle tests."""

import numpy as np

from nibblepack.graphcore import (
    Graph,
    complete_bipartite,
    complete_graph,
    cycle_graph,
    gnp,
    path_graph,
    random_regular,
    sharpness_construction,
)


def petersen() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph.from_edges(10, outer + spokes + inner)


def small_graphs() -> list[tuple[str, Graph]]:
    out = [("empty0", Graph.empty(0)), ("empty7", Graph.empty(7)), ("petersen", petersen())]
    for n in (1, 2, 5, 8, 12):
        out.append((f"K{n}", complete_graph(n)))
    for n in (3, 4, 5, 9, 20):
        out.append((f"C{n}", cycle_graph(n)))
        out.append((f"P{n}", path_graph(n)))
    for a, b in ((1, 1), (3, 3), (4, 7), (10, 10)):
        out.append((f"K{a},{b}", complete_bipartite(a, b)))
    rng = np.random.default_rng(2026)
    for k in range(40):
        n = int(rng.integers(4, 21))
        p = float(rng.choice([0.1, 0.2, 0.3, 0.5, 0.8]))
        out.append((f"gnp{k}", gnp(n, p, rng)))
    for n, d in ((10, 3), (12, 5), (16, 4), (20, 3), (20, 6)):
        out.append((f"reg{n}_{d}", random_regular(n, d, rng)))
    out.append(("sharp12", sharpness_construction(12, 6, 0.5, rng)))
    out.append(("sharp20", sharpness_construction(20, 10, 0.5, rng)))
    return out
