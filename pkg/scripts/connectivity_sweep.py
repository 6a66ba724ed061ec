#!/usr/bin/env python3
"""Empirical check of the connectivity chain lambda_2 <= kappa <= e <= d_min
on random connected undirected graphs, with a histogram of where the chain
is tight.

Example:
    python scripts/connectivity_sweep.py --graphs 500 --max-nodes 12
"""

import argparse
import sys
from collections import Counter

import numpy as np

from resest.graphs import DiGraph, connectivity_report, is_strongly_connected


def random_connected(rng, n):
    while True:
        p = rng.uniform(0.25, 0.7)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < p]
        g = DiGraph.from_edges(n, edges, directed=False)
        if g.edges and is_strongly_connected(g):
            return g


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--graphs", type=int, default=200)
    ap.add_argument("--min-nodes", type=int, default=4)
    ap.add_argument("--max-nodes", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    tight = Counter()
    violations = 0
    for _ in range(args.graphs):
        n = int(rng.integers(args.min_nodes, args.max_nodes + 1))
        g = random_connected(rng, n)
        rep = connectivity_report(g)
        lam2, k, e, d = (rep.algebraic_connectivity, rep.node_connectivity,
                         rep.link_connectivity, rep.min_degree)
        if not (lam2 <= k + 1e-9 and k <= e <= d):
            violations += 1
            print(f"violation: n={n} lambda2={lam2:.3f} kappa={k} e={e} d={d}")
        if k == e:
            tight["kappa = e"] += 1
        if e == d:
            tight["e = d_min"] += 1
        if abs(lam2 - k) < 1e-9:
            tight["lambda2 = kappa"] += 1

    print(f"graphs checked     {args.graphs}")
    print(f"chain violations   {violations}")
    for label, count in sorted(tight.items()):
        print(f"tight {label:<15} {count}")
    return 1 if violations else 0


if __name__ == "__main__":
    sys.exit(main())
