"""Mini-batch training with reciprocal relations and uniform negative sampling.

Euclidean parameters follow plain SGD.  Ball parameters (entity embeddings
and relation translations under MuRP) take a Riemannian step: the ambient
gradient is divided by the squared conformal factor and applied through the
exponential map.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from ._backend import kernels
from .dataset import augment_reciprocal
from .evaluator import TruthIndex, evaluate
from .model import Geometry, ModelParams, RECIPROCAL_SUFFIX, _accumulate, softplus

log = logging.getLogger(__name__)

__all__ = [
    "Batch", "TrainConfig", "TrainingError", "TraceRow", "TrainResult",
    "augment_reciprocal", "sample_negatives", "corrupt_objects", "bernoulli_nll",
    "loss", "apply_update", "train",
]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    dim: int = 40
    geometry: Geometry = field(default_factory=lambda: Geometry.poincare(1.0))
    learning_rate: float = 50.0
    batch_size: int = 128
    negatives: int = 50
    epochs: int = 100
    seed: int = 0
    eval_every: int = 5
    init_scale: float = 1e-3
    workers: int = 1
    train_eval_size: int = 1000
    debug: bool = False

    def validate(self, n_train=None):
        for name in ("dim", "batch_size", "negatives", "epochs", "eval_every", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0 or not self.init_scale > 0:
            raise ValueError("learning_rate and init_scale must be positive")
        if n_train is not None and self.batch_size > n_train:
            raise ValueError(f"batch_size {self.batch_size} exceeds {n_train} training triples")


@dataclass
class Batch:
    positives: np.ndarray  # (B, 3)
    negatives: np.ndarray  # (B, k, 3)

    @property
    def triples(self):
        return np.concatenate([self.positives, self.negatives.reshape(-1, 3)])

    @property
    def labels(self):
        n_pos = len(self.positives)
        y = np.zeros(n_pos + self.negatives.shape[0] * self.negatives.shape[1])
        y[:n_pos] = 1.0
        return y


def corrupt_objects(positives, k, n_entities, rng):
    """``k`` object corruptions per positive, uniform over entities != true object.

    Subject corruption is covered by corrupting the object of the
    reciprocal triple.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if n_entities < 2:
        raise ValueError("need at least two entities to corrupt a triple")
    neg = np.repeat(positives[:, None, :], k, axis=1)
    draw = rng.integers(0, n_entities - 1, size=(len(positives), k))
    obj = positives[:, 2:3]
    neg[:, :, 2] = draw + (draw >= obj)
    return neg


def sample_negatives(positive, k, n_entities, rng):
    return corrupt_objects([positive], k, n_entities, rng)[0]


def bernoulli_nll(phi, labels):
    """Mean of -[y log sigma(phi) + (1-y) log(1 - sigma(phi))]."""
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(softplus(phi) - y * phi))


def loss(batch, params, backend=None):
    k = backend or kernels
    t = batch.triples
    geo = params.geometry
    phi = k.score_triples(*params.kernel_args(), t[:, 0], t[:, 1], t[:, 2],
                          geo.c, geo.is_poincare)
    return bernoulli_nll(phi, batch.labels)


def apply_update(params, grads, lr):
    """One SGD / RSGD step in place from an accumulated gradient bundle."""
    ents, rels = grads.entity_ids, grads.relation_ids
    if params.geometry.is_poincare:
        c = params.geometry.c
        for table, ids, g in ((params.entity_emb, ents, grads.entity_grad),
                              (params.rel_trans, rels, grads.rel_trans_grad)):
            x = table[ids]
            step = -lr * geometry.riemannian_scale(g, x, c)
            table[ids] = geometry.project(geometry.exp_map(x, step, c), c)
    else:
        params.entity_emb[ents] -= lr * grads.entity_grad
        params.rel_trans[rels] -= lr * grads.rel_trans_grad
    params.rel_diag[rels] -= lr * grads.rel_diag_grad
    params.bias_subject[ents] -= lr * grads.bias_subject_grad
    params.bias_object[ents] -= lr * grads.bias_object_grad


@dataclass
class TraceRow:
    epoch: int
    split: str
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    mean_loss: float

    def tsv(self):
        return (f"{self.epoch}\t{self.split}\t{self.mrr:.6f}\t{self.hits1:.6f}\t"
                f"{self.hits3:.6f}\t{self.hits10:.6f}\t{self.mean_loss:.6f}")


TRACE_HEADER = "epoch\tsplit\tmrr\thits@1\thits@3\thits@10\tmean_loss"


@dataclass
class TrainResult:
    params: ModelParams  # best-validation checkpoint (last epoch if no valid split)
    last_params: ModelParams
    trace: list
    best_epoch: int
    best_valid_mrr: float | None


def _relation_names(graph):
    base = list(graph.relations)
    return base + [name + RECIPROCAL_SUFFIX for name in base]


def _shard_bounds(n, shards):
    edges = np.linspace(0, n, shards + 1).astype(int)
    return list(zip(edges[:-1], edges[1:]))


def train(graph, config, callbacks=(), backend=None):
    """Train on ``graph.train``; returns the best-validation parameters.

    Every ``eval_every`` epochs (and at the last epoch) the filtered MRR on a
    fixed sample of training triples and on the validation split is recorded
    and passed to each callback as a :class:`TraceRow`.
    """
    k = backend or kernels
    n_base = graph.n_relations
    train_aug = augment_reciprocal(graph.train, n_base)
    config.validate(len(train_aug))
    rng = np.random.default_rng(config.seed)
    params = ModelParams.initialize(
        graph.n_entities, 2 * n_base, config.dim, config.geometry, rng, config.init_scale,
        entity_names=graph.entities, relation_names=_relation_names(graph))
    truth = TruthIndex.from_graph(graph)
    train_eval = graph.train
    if len(train_eval) > config.train_eval_size:
        pick = np.random.default_rng([config.seed, 1]).choice(
            len(train_eval), config.train_eval_size, replace=False)
        train_eval = train_eval[np.sort(pick)]

    geo = config.geometry
    shards = config.workers
    pool = ThreadPoolExecutor(shards) if shards > 1 else None
    trace, best, best_mrr, best_epoch = [], None, None, 0
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_aug))
            streams = [np.random.default_rng([config.seed, epoch, j]) for j in range(shards)]
            loss_sum, n_samples = 0.0, 0
            for b, start in enumerate(range(0, len(order), config.batch_size)):
                pos = train_aug[order[start:start + config.batch_size]]
                parts = []
                for j, (lo, hi) in enumerate(_shard_bounds(len(pos), shards)):
                    batch = Batch(pos[lo:hi], corrupt_objects(pos[lo:hi], config.negatives,
                                                              graph.n_entities, streams[j]))
                    parts.append((batch.triples, batch.labels))

                def run(part):
                    t, y = part
                    return k.forward_backward(*params.kernel_args(), t[:, 0], t[:, 1], t[:, 2],
                                              y, geo.c, geo.is_poincare)

                outs = list(pool.map(run, parts)) if pool else [run(p) for p in parts]
                triples = np.concatenate([p[0] for p in parts])
                fields_ = [np.concatenate([o[i] for o in outs]) for i in range(7)]
                batch_loss = float(np.sum(fields_[0]))
                if not np.isfinite(batch_loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b} "
                                        f"(triples {start}..{start + len(pos) - 1} of the shuffled order)")
                grads = _accumulate(triples[:, 0], triples[:, 1], triples[:, 2],
                                    fields_[2], fields_[3], fields_[4], fields_[5], fields_[6],
                                    batch_loss, len(triples), k)
                apply_update(params, grads, config.learning_rate)
                loss_sum += batch_loss
                n_samples += len(triples)
            mean_loss = loss_sum / n_samples
            if config.debug and params.ball_violation() > (1 - geometry.EPS_BALL) ** 2 * (1 + 1e-12):
                raise TrainingError(f"ball constraint violated after epoch {epoch}")

            if epoch % config.eval_every == 0 or epoch == config.epochs:
                rows = []
                for split, triples_ in (("train", train_eval), ("valid", graph.valid)):
                    if not len(triples_):
                        continue
                    rep = evaluate(params, triples_, truth, n_base, backend=k)
                    row = TraceRow(epoch, split, rep.mrr, rep.hits(1), rep.hits(3),
                                   rep.hits(10), mean_loss)
                    rows.append(row)
                    if split == "valid" and (best_mrr is None or rep.mrr > best_mrr):
                        best_mrr, best, best_epoch = rep.mrr, params.copy(), epoch
                for row in rows:
                    log.info("epoch %d %s mrr=%.4f loss=%.4f", row.epoch, row.split, row.mrr,
                             row.mean_loss)
                    trace.append(row)
                    for cb in callbacks:
                        cb(row)
    finally:
        if pool:
            pool.shutdown()
    if best is None:
        best, best_epoch = params.copy(), config.epochs
    return TrainResult(best, params, trace, best_epoch, best_mrr)
