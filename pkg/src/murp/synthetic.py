"""Small generated graphs for tests and desk-scale experiments."""

import numpy as np

from .dataset import KnowledgeGraph


def tree_closure_edges(arity, depth):
    """(ancestor, descendant) pairs of a complete ``arity``-ary tree.

    Node 0 is the root; children of node ``i`` are ``arity*i + 1 .. arity*i + arity``.
    """
    n_nodes = sum(arity ** level for level in range(depth + 1))
    parent = {child: (child - 1) // arity for child in range(1, n_nodes)}
    edges = []
    for node in range(1, n_nodes):
        anc = parent[node]
        while True:
            edges.append((anc, node))
            if anc == 0:
                break
            anc = parent[anc]
    return n_nodes, sorted(edges)


def tree_graph(arity=4, depth=3, relation="ancestor_of"):
    """Closure of one tree as a train-only graph (used for memorisation checks)."""
    n, edges = tree_closure_edges(arity, depth)
    triples = np.array([(a, 0, b) for a, b in edges], dtype=np.int64)
    return KnowledgeGraph([f"n{i}" for i in range(n)], [relation], triples,
                          np.empty((0, 3), np.int64), np.empty((0, 3), np.int64))


def hierarchy_mix_graph(seed, arity=3, depth=4, n_pairs=None, split=(0.9, 0.05, 0.05)):
    """Tree closure (relation 0) mixed with random symmetric pairs (relation 1).

    Symmetric pairs are added in both directions.  Triples are split
    uniformly at random by the given fractions.
    """
    rng = np.random.default_rng(seed)
    n, edges = tree_closure_edges(arity, depth)
    if n_pairs is None:
        n_pairs = len(edges) // 2
    pairs = set()
    while len(pairs) < n_pairs:
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        pairs.add((min(a, b), max(a, b)))
    triples = [(a, 0, b) for a, b in edges]
    for a, b in sorted(pairs):
        triples += [(a, 1, b), (b, 1, a)]
    triples = np.array(triples, dtype=np.int64)[rng.permutation(len(triples))]
    n_valid = int(round(split[1] * len(triples)))
    n_test = int(round(split[2] * len(triples)))
    valid, test = triples[:n_valid], triples[n_valid:n_valid + n_test]
    train = triples[n_valid + n_test:]
    return KnowledgeGraph([f"n{i}" for i in range(n)], ["hierarchy", "symmetric"],
                          train, valid, test)
