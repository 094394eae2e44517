"""Triple files, vocabularies and per-relation hierarchy analytics."""

import math
import os
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SPLITS = ("train", "valid", "test")


class TripleFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass
class KnowledgeGraph:
    entities: list
    relations: list
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    # (split, symbol kind, symbol) for valid/test symbols never seen in train
    unseen: list = field(default_factory=list)

    def __post_init__(self):
        for name in SPLITS:
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 3)
            setattr(self, name, arr)
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)

    def split(self, name):
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_triples(self):
        return np.concatenate([self.train, self.valid, self.test])

    def restrict_relations(self, relation_ids):
        """Same vocabulary, only triples whose relation is in ``relation_ids``."""
        keep = np.asarray(sorted(relation_ids), dtype=np.int64)
        parts = [t[np.isin(t[:, 1], keep)] for t in (self.train, self.valid, self.test)]
        return KnowledgeGraph(list(self.entities), list(self.relations), *parts)

    def decode(self, triples):
        return [(self.entities[s], self.relations[r], self.entities[o]) for s, r, o in triples]

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        for name in SPLITS:
            write_triples(os.path.join(directory, f"{name}.txt"), self.split(name), self)


def write_triples(path, triples, graph):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for s, r, o in graph.decode(triples):
            fh.write(f"{s}\t{r}\t{o}\n")
    os.replace(tmp, path)


def _read_triples(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise TripleFormatError(path, lineno, f"expected 3 tab-separated fields, got {len(fields)}")
            rows.append((lineno, tuple(fields)))
    return rows


def load_graph(train_path, valid_path=None, test_path=None):
    """Read tab-separated triple files into an id-coded graph.

    Ids are assigned in order of first appearance: train, then valid, then
    test.  Duplicate triples within a split are dropped with a warning.
    """
    entities, relations = {}, {}
    splits, unseen = {}, []
    for name, path in zip(SPLITS, (train_path, valid_path, test_path)):
        rows = _read_triples(path) if path is not None else []
        if name == "train" and not rows:
            raise ValueError("empty training set")
        seen, ids, dupes = set(), [], 0
        for _, (s, r, o) in rows:
            if name != "train":
                for kind, sym, table in (("entity", s, entities), ("relation", r, relations),
                                         ("entity", o, entities)):
                    if sym not in table:
                        unseen.append((name, kind, sym))
            triple = (entities.setdefault(s, len(entities)),
                      relations.setdefault(r, len(relations)),
                      entities.setdefault(o, len(entities)))
            if triple in seen:
                dupes += 1
                continue
            seen.add(triple)
            ids.append(triple)
        if dupes:
            warnings.warn(f"{path}: dropped {dupes} duplicate triple(s)", stacklevel=2)
        splits[name] = np.array(ids, dtype=np.int64).reshape(-1, 3)
    overlap = _overlap(splits)
    if overlap:
        warnings.warn(f"{overlap} triple(s) occur in more than one split", stacklevel=2)
    return KnowledgeGraph(list(entities), list(relations), splits["train"], splits["valid"],
                          splits["test"], unseen)


def _overlap(splits):
    sets = [set(map(tuple, splits[n].tolist())) for n in SPLITS]
    return len(sets[0] & sets[1]) + len(sets[0] & sets[2]) + len(sets[1] & sets[2])


def find_split_files(directory):
    """Locate ``train``/``valid``/``test`` files (``.txt`` or ``.tsv``)."""
    paths = {}
    for name in SPLITS:
        for ext in (".txt", ".tsv", ""):
            candidate = os.path.join(directory, name + ext)
            if os.path.isfile(candidate):
                paths[name] = candidate
                break
    if "train" not in paths:
        raise FileNotFoundError(f"no train.txt in {directory}")
    return paths


def load_dataset_dir(directory):
    paths = find_split_files(directory)
    return load_graph(paths["train"], paths.get("valid"), paths.get("test"))


def augment_reciprocal(triples, n_base_relations):
    """Append (o, r + n_base, s) for every (s, r, o)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) and triples[:, 1].max() >= n_base_relations:
        raise ValueError("relation id exceeds n_base_relations")
    recip = triples[:, [2, 1, 0]].copy()
    recip[:, 1] += n_base_relations
    return np.concatenate([triples, recip])


# ---------------------------------------------------------------------------
# hierarchy analytics


def relation_edges(graph, split="train"):
    """Edge arrays (m x 2) per relation id, from one split, pre-reciprocal."""
    triples = graph.split(split)
    out = {}
    for r in range(graph.n_relations):
        out[r] = triples[triples[:, 1] == r][:, [0, 2]]
    return out


def _shortest_paths(edges):
    """BFS from every source: {u: {v: shortest length}} for v != u, length >= 1."""
    adj = defaultdict(list)
    for u, v in edges:
        if u != v:
            adj[u].append(v)
    result = {}
    for src in adj:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            nd = dist[node] + 1
            for nxt in adj.get(node, ()):
                if nxt not in dist:
                    dist[nxt] = nd
                    queue.append(nxt)
        del dist[src]
        result[src] = dist
    return result


def _khs_from_paths(paths):
    reachable = one_way = 0
    for u, targets in paths.items():
        reachable += len(targets)
        for v in targets:
            if u not in paths.get(v, ()):
                one_way += 1
    if reachable == 0:
        return None
    return one_way / reachable


def _stats_from_paths(paths):
    longest, total, count = 0, 0, 0
    for targets in paths.values():
        for length in targets.values():
            total += length
            count += 1
            if length > longest:
                longest = length
    if count == 0:
        return None, None
    return longest, total / count


def khs(edges):
    """Krackhardt hierarchy score of a directed edge list.

    Fraction of reachable ordered pairs (x, y), x != y, for which y does not
    reach x.  ``None`` when nothing is reachable.
    """
    return _khs_from_paths(_shortest_paths(_as_edge_list(edges)))


def path_stats(edges):
    """(max, mean) shortest directed path length over reachable pairs x != y."""
    return _stats_from_paths(_shortest_paths(_as_edge_list(edges)))


def _as_edge_list(edges):
    if isinstance(edges, np.ndarray):
        return [tuple(e) for e in edges.tolist()]
    return list(edges)


@dataclass
class RelationHierarchy:
    relation: str
    relation_id: int
    n_nodes: int
    n_edges: int
    khs: float | None
    max_path: int | None
    avg_path: float | None
    hierarchical: bool
    reason: str = ""


@dataclass
class HierarchyReport:
    rows: list
    khs_threshold: float
    min_max_path: int

    def hierarchical_ids(self):
        return [row.relation_id for row in self.rows if row.hierarchical]

    def non_hierarchical_ids(self):
        return [row.relation_id for row in self.rows if not row.hierarchical]

    def by_name(self, name):
        for row in self.rows:
            if row.relation == name:
                return row
        raise KeyError(name)

    def to_tsv(self):
        lines = ["relation\tkhs\tmax_path\tavg_path\thierarchical\tnodes\tedges\treason"]
        for row in self.rows:
            lines.append("\t".join([
                row.relation,
                "undefined" if row.khs is None else f"{row.khs:.4f}",
                "-" if row.max_path is None else str(row.max_path),
                "-" if row.avg_path is None else f"{row.avg_path:.4f}",
                "1" if row.hierarchical else "0",
                str(row.n_nodes), str(row.n_edges), row.reason,
            ]))
        return "\n".join(lines) + "\n"


def classify_relations(graph, khs_threshold=0.9, min_max_path=2, split="train"):
    """Per-relation Khs and path statistics on the train split.

    A relation is hierarchical iff Khs >= ``khs_threshold`` and its longest
    shortest path is >= ``min_max_path``.
    """
    rows = []
    for r, edges in relation_edges(graph, split).items():
        paths = _shortest_paths(_as_edge_list(edges))
        score = _khs_from_paths(paths)
        longest, mean = _stats_from_paths(paths)
        nodes = len(np.unique(edges)) if len(edges) else 0
        if score is None:
            hier, reason = False, "khs undefined (no reachable pairs)"
        elif score < khs_threshold:
            hier, reason = False, f"khs < {khs_threshold:g}"
        elif longest < min_max_path:
            hier, reason = False, f"max path < {min_max_path}"
        else:
            hier, reason = True, ""
        rows.append(RelationHierarchy(graph.relations[r], r, nodes, len(edges), score,
                                      longest, mean, hier, reason))
    return HierarchyReport(rows, khs_threshold, min_max_path)


def non_hierarchical_count(n_hierarchical, proportion):
    """Non-hierarchical relations to add so that ``proportion`` of the
    relations are hierarchical, rounded to nearest (halves up)."""
    p = Fraction(proportion).limit_denominator(10**6)
    if not 0 < p <= 1:
        raise ValueError(f"proportion must be in (0, 1], got {proportion}")
    exact = n_hierarchical * (1 - p) / p
    return math.floor(exact + Fraction(1, 2))


def build_hier_subsets(graph, report, proportions=(1.0, 0.75, 0.5, 0.25), seed=0):
    """Relation-filtered copies of ``graph`` with a set hierarchical share.

    Every subset keeps all hierarchical relations.  Non-hierarchical ones are
    taken from a single seeded permutation, so smaller subsets nest inside
    larger ones.  Returns ``{proportion: (graph, retained relation ids)}``.
    """
    hier = report.hierarchical_ids()
    pool = report.non_hierarchical_ids()
    if not hier:
        raise ValueError("no hierarchical relations to build subsets from")
    order = np.random.default_rng(seed).permutation(len(pool))
    shuffled = [pool[i] for i in order]
    out = {}
    for p in proportions:
        need = non_hierarchical_count(len(hier), p)
        if need > len(pool):
            best = Fraction(len(hier), len(hier) + len(pool))
            raise ValueError(
                f"proportion {p} needs {need} non-hierarchical relations but only "
                f"{len(pool)} exist; lowest achievable proportion is {float(best):.4f}")
        keep = sorted(hier + shuffled[:need])
        out[p] = (graph.restrict_relations(keep), keep)
    return out


def resplit(graph, valid_size=10000, test_size=10000, seed=0):
    """Pool all splits and draw fresh disjoint valid/test sets.

    Any valid/test triple whose relation would be missing from train is
    moved back to train and replaced by a train triple of a relation that
    keeps at least one other train example.
    """
    pooled = np.unique(graph.all_triples(), axis=0)
    total = len(pooled)
    if valid_size < 0 or test_size < 0 or total <= valid_size + test_size:
        raise ValueError(f"cannot carve {valid_size}+{test_size} held-out triples from {total}")
    rng = np.random.default_rng(seed)
    pooled = pooled[rng.permutation(total)]
    held = pooled[: valid_size + test_size].tolist()
    train = pooled[valid_size + test_size:].tolist()
    counts = defaultdict(int)
    for t in train:
        counts[t[1]] += 1

    for i in range(len(held)):
        if counts[held[i][1]] > 0:
            continue
        # swap the orphan into train, pull a replacement out of train
        counts[held[i][1]] += 1
        train.append(held[i])
        donors = [j for j, t in enumerate(train) if counts[t[1]] > 1]
        if not donors:
            raise ValueError("not enough triples to keep every held-out relation in train")
        j = donors[int(rng.integers(len(donors)))]
        held[i] = train.pop(j)
        counts[held[i][1]] -= 1

    held = np.array(held, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(list(graph.entities), list(graph.relations),
                          np.array(train, dtype=np.int64).reshape(-1, 3),
                          held[:valid_size], held[valid_size:])
