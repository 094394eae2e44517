"""Filtered link-prediction ranking: MRR and hits@k, overall and per relation."""

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .dataset import augment_reciprocal

HITS_AT = (1, 3, 10)
TIE_MODES = ("mid", "optimistic", "pessimistic")


class TruthIndex:
    """Known objects per (subject, relation) over every split, reciprocals included."""

    def __init__(self, triples):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        order = np.lexsort((triples[:, 2], triples[:, 1], triples[:, 0]))
        triples = triples[order]
        self._objects = {}
        if len(triples):
            keys = triples[:, :2]
            starts = np.flatnonzero(np.any(keys[1:] != keys[:-1], axis=1)) + 1
            bounds = np.concatenate([[0], starts, [len(triples)]])
            for a, b in zip(bounds[:-1], bounds[1:]):
                s, r = int(triples[a, 0]), int(triples[a, 1])
                self._objects[(s, r)] = np.unique(triples[a:b, 2])

    @classmethod
    def from_graph(cls, graph):
        return cls(augment_reciprocal(graph.all_triples(), graph.n_relations))

    def objects(self, s, r):
        return self._objects.get((int(s), int(r)), np.empty(0, dtype=np.int64))

    def __contains__(self, triple):
        s, r, o = triple
        objs = self._objects.get((int(s), int(r)))
        if objs is None:
            return False
        i = np.searchsorted(objs, o)
        return i < len(objs) and objs[i] == o

    def __len__(self):
        return sum(len(v) for v in self._objects.values())


def rank_from_scores(scores, target, known=(), ties="mid"):
    """Filtered rank of ``scores[target]`` among ``scores``.

    Entities in ``known`` other than ``target`` are ignored.  Ties with the
    target count half (rounded up) under ``mid``.
    """
    scores = np.asarray(scores)
    mask = np.ones(len(scores), dtype=bool)
    mask[np.asarray(known, dtype=np.int64)] = False
    mask[target] = False
    t = scores[target]
    others = scores[mask]
    higher = int(np.count_nonzero(others > t))
    equal = int(np.count_nonzero(others == t))
    if ties == "mid":
        return 1 + higher + (equal + 1) // 2
    if ties == "optimistic":
        return 1 + higher
    if ties == "pessimistic":
        return 1 + higher + equal
    raise ValueError(f"unknown tie mode {ties!r}")


def score_all(params, subj, rel, entity_block=8192, backend=None):
    """(Q, n_e) score matrix for queries (subj[q], rel[q], ?)."""
    k = backend or kernels
    subj = np.asarray(subj, dtype=np.int64)
    rel = np.asarray(rel, dtype=np.int64)
    n_e = params.n_entities
    geo = params.geometry
    out = np.empty((len(subj), n_e))
    for a in range(0, n_e, entity_block):
        cand = np.arange(a, min(a + entity_block, n_e), dtype=np.int64)
        out[:, a:a + len(cand)] = k.score_candidates(
            *params.kernel_args(), subj, rel, cand, geo.c, geo.is_poincare)
    return out


def rank_triple(params, triple, truth, ties="mid", backend=None):
    s, r, o = (int(x) for x in triple)
    params.check_ids(s, r, o)
    if triple not in truth:
        raise ValueError(f"triple {triple} missing from the truth index")
    scores = score_all(params, [s], [r], backend=backend)[0]
    return rank_from_scores(scores, o, truth.objects(s, r), ties)


@dataclass
class RelationMetrics:
    name: str
    count: int
    mrr: float
    hits: dict


@dataclass
class RankingReport:
    ranks: np.ndarray
    relations: np.ndarray  # base relation id per evaluation query
    relation_names: list = field(default_factory=list)
    ties: str = "mid"

    @property
    def count(self):
        return len(self.ranks)

    @property
    def mrr(self):
        return float(np.mean(1.0 / self.ranks)) if len(self.ranks) else float("nan")

    def hits(self, k):
        return float(np.mean(self.ranks <= k)) if len(self.ranks) else float("nan")

    def summary(self):
        return {"mrr": self.mrr, **{f"hits@{k}": self.hits(k) for k in HITS_AT}}

    def per_relation(self):
        out = []
        for r in np.unique(self.relations):
            ranks = self.ranks[self.relations == r]
            name = self.relation_names[r] if r < len(self.relation_names) else str(r)
            out.append(RelationMetrics(name, len(ranks), float(np.mean(1.0 / ranks)),
                                       {k: float(np.mean(ranks <= k)) for k in HITS_AT}))
        return out

    def to_tsv(self, per_relation=True):
        head = "relation\tcount\tmrr\t" + "\t".join(f"hits@{k}" for k in HITS_AT)
        rows = [("ALL", self.count, self.mrr, [self.hits(k) for k in HITS_AT])]
        if per_relation:
            rows += [(m.name, m.count, m.mrr, [m.hits[k] for k in HITS_AT])
                     for m in self.per_relation()]
        lines = [head]
        for name, count, mrr, hits in rows:
            lines.append(f"{name}\t{count}\t{mrr:.6f}\t" + "\t".join(f"{h:.6f}" for h in hits))
        return "\n".join(lines) + "\n"


def evaluate(params, triples, truth, n_base_relations=None, ties="mid",
             query_block=None, entity_block=8192, backend=None):
    """Rank every test triple in both directions, (s, r, ?) and (o, r^-1, ?)."""
    if ties not in TIE_MODES:
        raise ValueError(f"unknown tie mode {ties!r}")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n_base = params.n_relations // 2 if n_base_relations is None else n_base_relations
    n = len(triples)
    queries = np.empty((2 * n, 3), dtype=np.int64)
    queries[0::2] = triples
    queries[1::2, 0] = triples[:, 2]
    queries[1::2, 1] = triples[:, 1] + n_base
    queries[1::2, 2] = triples[:, 0]
    if query_block is None:
        query_block = max(1, (1 << 22) // max(params.n_entities, 1))
    ranks = np.empty(2 * n, dtype=np.int64)
    for a in range(0, 2 * n, query_block):
        block = queries[a:a + query_block]
        scores = score_all(params, block[:, 0], block[:, 1], entity_block, backend)
        for i, (s, r, o) in enumerate(block):
            ranks[a + i] = rank_from_scores(scores[i], o, truth.objects(s, r), ties)
    names = list(params.relation_names[:n_base]) if params.relation_names else []
    return RankingReport(ranks, np.repeat(triples[:, 1], 2) if n else np.empty(0, np.int64),
                         names, ties)
