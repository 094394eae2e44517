"""MuRE / MuRP parameters, score functions and gradients.

Both models score a triple as ``-d(subject', object')^2 + b_s + b_o`` where
the relation stretches the subject by a diagonal matrix and translates the
object.  MuRE uses Euclidean distance; MuRP works in the Poincare ball,
stretching through the tangent space at the origin and translating by
Mobius addition.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from ._backend import kernels
from ._fallback import sigmoid, softplus  # noqa: F401  (re-exported)

MAGIC = b"MKGE"
FORMAT_VERSION = 1
RECIPROCAL_SUFFIX = "_reverse"


@dataclass(frozen=True)
class Geometry:
    """Euclidean (``kind="euclidean"``) or Poincare ball with curvature ``c``."""

    kind: str = "euclidean"
    c: float = 0.0

    def __post_init__(self):
        if self.kind == "poincare":
            geometry.check_curvature(self.c)
        elif self.kind != "euclidean":
            raise ValueError(f"unknown geometry {self.kind!r}")

    @classmethod
    def euclidean(cls):
        return cls("euclidean", 0.0)

    @classmethod
    def poincare(cls, c=1.0):
        return cls("poincare", float(c))

    @property
    def is_poincare(self):
        return self.kind == "poincare"

    @property
    def tag(self):
        return 1 if self.is_poincare else 0

    def __str__(self):
        return f"poincare(c={self.c:g})" if self.is_poincare else "euclidean"


@dataclass
class ModelParams:
    entity_emb: np.ndarray
    rel_diag: np.ndarray
    rel_trans: np.ndarray
    bias_subject: np.ndarray
    bias_object: np.ndarray
    geometry: Geometry
    entity_names: list = field(default_factory=list)
    relation_names: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("entity_emb", "rel_diag", "rel_trans", "bias_subject", "bias_object"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        n_e, d = self.entity_emb.shape
        n_r = self.rel_diag.shape[0]
        if self.rel_diag.shape != (n_r, d) or self.rel_trans.shape != (n_r, d):
            raise ValueError("relation tables must be n_r x d")
        if self.bias_subject.shape != (n_e,) or self.bias_object.shape != (n_e,):
            raise ValueError("bias vectors must have length n_e")

    @classmethod
    def initialize(cls, n_entities, n_relations, dim, geometry, rng, init_scale=1e-3,
                   entity_names=(), relation_names=()):
        """Embeddings ~ U(-init_scale, init_scale), identity relation matrices,
        zero biases."""
        return cls(
            entity_emb=rng.uniform(-init_scale, init_scale, size=(n_entities, dim)),
            rel_diag=np.ones((n_relations, dim)),
            rel_trans=rng.uniform(-init_scale, init_scale, size=(n_relations, dim)),
            bias_subject=np.zeros(n_entities),
            bias_object=np.zeros(n_entities),
            geometry=geometry,
            entity_names=list(entity_names),
            relation_names=list(relation_names),
        )

    @property
    def n_entities(self):
        return self.entity_emb.shape[0]

    @property
    def n_relations(self):
        return self.rel_diag.shape[0]

    @property
    def dim(self):
        return self.entity_emb.shape[1]

    def copy(self):
        return ModelParams(
            self.entity_emb.copy(), self.rel_diag.copy(), self.rel_trans.copy(),
            self.bias_subject.copy(), self.bias_object.copy(), self.geometry,
            list(self.entity_names), list(self.relation_names),
        )

    def kernel_args(self):
        return (self.entity_emb, self.rel_diag, self.rel_trans, self.bias_subject, self.bias_object)

    def check_ids(self, s, r, o):
        if not (0 <= s < self.n_entities and 0 <= o < self.n_entities):
            raise IndexError(f"entity id out of range: ({s}, {o}) with n_e={self.n_entities}")
        if not 0 <= r < self.n_relations:
            raise IndexError(f"relation id {r} out of range with n_r={self.n_relations}")

    def ball_violation(self):
        """Largest c|x|^2 over ball-constrained rows (0.0 under Euclidean)."""
        if not self.geometry.is_poincare:
            return 0.0
        c = self.geometry.c
        return float(c * max(np.max(np.sum(self.entity_emb ** 2, axis=1)),
                             np.max(np.sum(self.rel_trans ** 2, axis=1))))


def score_mure(params, s, r, o):
    """-|R e_s - (e_o + r)|^2 + b_s + b_o."""
    if params.geometry.is_poincare:
        raise ValueError("score_mure needs Euclidean parameters")
    params.check_ids(s, r, o)
    e = params.entity_emb
    diff = params.rel_diag[r] * e[s] - (e[o] + params.rel_trans[r])
    return float(-diff @ diff + params.bias_subject[s] + params.bias_object[o])


def score_murp(params, s, r, o):
    """-d_B(exp_0(R log_0(h_s)), h_o (+) r_h)^2 + b_s + b_o."""
    if not params.geometry.is_poincare:
        raise ValueError("score_murp needs Poincare parameters")
    params.check_ids(s, r, o)
    c = params.geometry.c
    h = params.entity_emb
    subject = geometry.mobius_matvec(params.rel_diag[r], h[s], c)
    obj = geometry.mobius_add(h[o], params.rel_trans[r], c)
    dist = geometry.poincare_distance(subject, obj, c)
    return float(-dist * dist + params.bias_subject[s] + params.bias_object[o])


def score(params, s, r, o):
    if params.geometry.is_poincare:
        return score_murp(params, s, r, o)
    return score_mure(params, s, r, o)


@dataclass
class GradientBundle:
    """Ambient (Euclidean) gradients for the parameter rows a batch touched.

    ``entity_grad[i]``, ``bias_subject_grad[i]`` and ``bias_object_grad[i]``
    belong to entity ``entity_ids[i]``; relation arrays likewise.
    """

    entity_ids: np.ndarray
    entity_grad: np.ndarray
    bias_subject_grad: np.ndarray
    bias_object_grad: np.ndarray
    relation_ids: np.ndarray
    rel_diag_grad: np.ndarray
    rel_trans_grad: np.ndarray
    loss: float = 0.0

    def dense(self, params):
        """Expand to full-size arrays (mainly for tests)."""
        out = {
            "entity_emb": np.zeros_like(params.entity_emb),
            "bias_subject": np.zeros_like(params.bias_subject),
            "bias_object": np.zeros_like(params.bias_object),
            "rel_diag": np.zeros_like(params.rel_diag),
            "rel_trans": np.zeros_like(params.rel_trans),
        }
        out["entity_emb"][self.entity_ids] = self.entity_grad
        out["bias_subject"][self.entity_ids] = self.bias_subject_grad
        out["bias_object"][self.entity_ids] = self.bias_object_grad
        out["rel_diag"][self.relation_ids] = self.rel_diag_grad
        out["rel_trans"][self.relation_ids] = self.rel_trans_grad
        return out


def batch_gradients(params, triples, labels, backend=None):
    """Gradient of the mean Bernoulli NLL over ``triples`` (N x 3 ids)."""
    k = backend or kernels
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    subj, rel, obj = triples[:, 0], triples[:, 1], triples[:, 2]
    geo = params.geometry
    loss, _, g_s, g_o, g_w, g_t, g_b = k.forward_backward(
        *params.kernel_args(), subj, rel, obj, labels, geo.c, geo.is_poincare)
    n = len(triples)
    return _accumulate(subj, rel, obj, g_s, g_o, g_w, g_t, g_b, float(np.sum(loss)), n, k)


def _accumulate(subj, rel, obj, g_s, g_o, g_w, g_t, g_b, loss_sum, n, backend=None):
    k = backend or kernels
    ent_ids, ent_inv = np.unique(np.concatenate([subj, obj]), return_inverse=True)
    m = len(subj)
    ent_grad = np.zeros((len(ent_ids), g_s.shape[1]))
    k.scatter_add(ent_grad, ent_inv[:m], g_s)
    k.scatter_add(ent_grad, ent_inv[m:], g_o)
    bias_grad = np.zeros((len(ent_ids), 2))
    k.scatter_add(bias_grad, ent_inv[:m], np.stack([g_b, np.zeros(m)], axis=1))
    k.scatter_add(bias_grad, ent_inv[m:], np.stack([np.zeros(m), g_b], axis=1))
    rel_ids, rel_inv = np.unique(rel, return_inverse=True)
    rel_grad = np.zeros((len(rel_ids), 2 * g_w.shape[1]))
    k.scatter_add(rel_grad, rel_inv, np.concatenate([g_w, g_t], axis=1))
    d = g_w.shape[1]
    inv_n = 1.0 / n
    return GradientBundle(
        ent_ids, ent_grad * inv_n, bias_grad[:, 0] * inv_n, bias_grad[:, 1] * inv_n,
        rel_ids, rel_grad[:, :d] * inv_n, rel_grad[:, d:] * inv_n, loss_sum * inv_n,
    )


def score_gradients(params, s, r, o, label, backend=None):
    """Gradient bundle of the single-sample loss for triple (s, r, o)."""
    params.check_ids(s, r, o)
    return batch_gradients(params, [[s, r, o]], [float(label)], backend=backend)


def save_checkpoint(params, path):
    """Write the little-endian MKGE binary checkpoint."""
    n_e, d = params.entity_emb.shape
    n_r = params.rel_diag.shape[0]
    entity_names = params.entity_names or [str(i) for i in range(n_e)]
    relation_names = params.relation_names or [str(i) for i in range(n_r)]
    if len(entity_names) != n_e or len(relation_names) != n_r:
        raise ValueError("vocabulary sizes do not match parameter tables")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIdQQQ", FORMAT_VERSION, params.geometry.tag,
                             params.geometry.c, n_e, n_r, d))
        for arr in (params.entity_emb, params.rel_diag, params.rel_trans,
                    params.bias_subject, params.bias_object):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for name in list(entity_names) + list(relation_names):
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an MKGE checkpoint")
    header = struct.Struct("<IIdQQQ")
    version, tag, c, n_e, n_r, d = header.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if tag not in (0, 1):
        raise ValueError(f"{path}: bad geometry tag {tag}")
    offset = 4 + header.size
    arrays = []
    for shape in ((n_e, d), (n_r, d), (n_r, d), (n_e,), (n_e,)):
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += 8 * count
    names = []
    for _ in range(n_e + n_r):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        names.append(data[offset:offset + length].decode("utf-8"))
        offset += length
    geo = Geometry.poincare(c) if tag == 1 else Geometry.euclidean()
    return ModelParams(*arrays, geometry=geo, entity_names=names[:n_e],
                       relation_names=names[n_e:])
