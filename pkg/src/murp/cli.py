"""``murp`` command line: train, eval, analyze, split, project2d, bias-norms.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines (``#``
starts a comment).  Flags given on the command line override the file.
Text outputs start with ``#`` lines echoing the resolved configuration.
"""

import argparse
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__, geometry
from ._backend import get_backend
from .dataset import (
    KnowledgeGraph, build_hier_subsets, classify_relations, load_dataset_dir, resplit,
)
from .evaluator import TIE_MODES, TruthIndex, evaluate
from .model import Geometry, load_checkpoint, save_checkpoint, sigmoid
from .trainer import TRACE_HEADER, TrainConfig, TrainingError, train

log = logging.getLogger("murp")

CHECKPOINT_NAME = "model.mkge"
TRACE_NAME = "trace.tsv"
CONFIG_NAME = "config.txt"


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# option tables: (flag, dest, type, default, help)

_COMMON = [
    ("--backend", "backend", str, "auto", "kernel backend: auto, cython or numpy"),
]

_OPTIONS = {
    "train": [
        ("--data", "data", str, None, "directory with train/valid/test files"),
        ("--out", "out", str, None, "output directory"),
        ("--geometry", "geometry", str, "poincare", "poincare (MuRP) or euclidean (MuRE)"),
        ("--c", "c", float, None, "ball curvature (poincare only, default 1.0)"),
        ("--dim", "dim", int, 40, "embedding dimension"),
        ("--lr", "lr", float, 50.0, "learning rate"),
        ("--batch", "batch", int, 128, "positives per batch"),
        ("--neg", "neg", int, 50, "negatives per positive"),
        ("--epochs", "epochs", int, 100, "training epochs"),
        ("--eval-every", "eval_every", int, 5, "epochs between evaluations"),
        ("--init-scale", "init_scale", float, 1e-3, "half-width of the uniform init"),
        ("--workers", "workers", int, 1, "batch shards computed in parallel"),
        ("--train-eval-size", "train_eval_size", int, 1000, "training triples ranked per eval"),
        ("--seed", "seed", int, None, "RNG seed (drawn from entropy if omitted)"),
        ("--debug", "debug", "flag", False, "check the ball constraint every epoch"),
    ],
    "eval": [
        ("--checkpoint", "checkpoint", str, None, "model file"),
        ("--data", "data", str, None, "dataset directory"),
        ("--split", "split", str, "test", "split to rank: train, valid or test"),
        ("--ties", "ties", str, "mid", "tie handling: mid, optimistic or pessimistic"),
        ("--per-relation", "per_relation", "flag", False, "add one row per base relation"),
        ("--out", "out", str, None, "report path (stdout if omitted)"),
    ],
    "analyze": [
        ("--data", "data", str, None, "dataset directory"),
        ("--khs-threshold", "khs_threshold", float, 0.9, "minimum Khs for a hierarchy"),
        ("--min-max-path", "min_max_path", int, 2, "minimum longest path for a hierarchy"),
        ("--out", "out", str, None, "report path (stdout if omitted)"),
    ],
    "split": [
        ("--data", "data", str, None, "dataset directory"),
        ("--out", "out", str, None, "output directory for the subsets"),
        ("--proportions", "proportions", str, "1,0.75,0.5,0.25", "hierarchical shares"),
        ("--khs-threshold", "khs_threshold", float, 0.9, "minimum Khs for a hierarchy"),
        ("--min-max-path", "min_max_path", int, 2, "minimum longest path for a hierarchy"),
        ("--resplit", "resplit", "flag", False, "redraw valid/test before subsetting"),
        ("--valid-size", "valid_size", int, 10000, "valid triples when resplitting"),
        ("--test-size", "test_size", int, 10000, "test triples when resplitting"),
        ("--seed", "seed", int, None, "RNG seed (drawn from entropy if omitted)"),
    ],
    "project2d": [
        ("--checkpoint", "checkpoint", str, None, "model file"),
        ("--data", "data", str, None, "dataset directory (for true/false labels)"),
        ("--subject", "subject", str, None, "reference subject entity"),
        ("--relation", "relation", str, None, "relation name"),
        ("--objects", "objects", str, None, "comma-separated object entities"),
        ("--sample", "sample", int, None, "sample this many objects instead"),
        ("--seed", "seed", int, None, "sampling seed (drawn from entropy if omitted)"),
        ("--out", "out", str, None, "output path (stdout if omitted)"),
    ],
    "bias-norms": [
        ("--checkpoint", "checkpoint", str, None, "model file"),
        ("--out", "out", str, None, "output path (stdout if omitted)"),
    ],
}

_REQUIRED = {
    "train": ("data", "out"),
    "eval": ("checkpoint", "data"),
    "analyze": ("data",),
    "split": ("data", "out"),
    "project2d": ("checkpoint", "subject", "relation"),
    "bias-norms": ("checkpoint",),
}


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="murp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for flag, dest, kind, default, text in options + _COMMON:
            if kind == "flag":
                p.add_argument(flag, dest=dest, action="store_const", const=True,
                               default=argparse.SUPPRESS, help=text)
            else:
                p.add_argument(flag, dest=dest, type=kind, default=argparse.SUPPRESS,
                               help=f"{text} (default: {default})")
    return parser


def read_config_file(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve_config(command, cli_values, file_values=None):
    """Defaults, then the config file, then explicit flags."""
    table = {dest: (kind, default) for _, dest, kind, default, _ in _OPTIONS[command] + _COMMON}
    resolved = {dest: default for dest, (_, default) in table.items()}
    for key, value in (file_values or {}).items():
        if key not in table:
            raise CliError(f"unknown config key {key!r} for {command}")
        kind = table[key][0]
        try:
            resolved[key] = _parse_bool(value) if kind == "flag" else kind(value)
        except ValueError as exc:
            raise CliError(f"config key {key}: {exc}") from None
    for key, value in cli_values.items():
        if key in table:
            resolved[key] = value
    missing = [k for k in _REQUIRED[command] if resolved.get(k) is None]
    if missing:
        raise CliError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                 for m in missing))
    return resolved


def draw_seed():
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def _ensure_seed(cfg):
    if cfg.get("seed") is None:
        cfg["seed"] = draw_seed()
        print(f"seed: {cfg['seed']}")


def config_header(command, cfg):
    lines = [f"# murp {__version__} {command}"]
    lines += [f"# {key}={'' if value is None else value}" for key, value in sorted(cfg.items())]
    return "\n".join(lines) + "\n"


def config_text(cfg):
    return "".join(f"{k}={v}\n" for k, v in sorted(cfg.items()) if v is not None)


def write_atomic(path, text):
    """Write text to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _backend(cfg):
    name = cfg["backend"]
    if name == "auto":
        return get_backend()
    try:
        return get_backend(name)
    except (KeyError, ValueError):
        raise CliError(f"backend {name!r} unavailable") from None


def _geometry(cfg):
    kind = cfg["geometry"]
    if kind == "euclidean":
        if cfg["c"] is not None:
            raise CliError("--c only applies to --geometry poincare")
        return Geometry.euclidean()
    if kind == "poincare":
        c = 1.0 if cfg["c"] is None else cfg["c"]
        try:
            return Geometry.poincare(c)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    raise CliError(f"unknown geometry {kind!r}")


def _load_data(path):
    try:
        return load_dataset_dir(path)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _load_model(path):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, IndexError) as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc}") from None


def align_graph(params, graph):
    """Re-code ``graph`` with the checkpoint's vocabulary.

    Raises CliError naming the first dataset symbol the checkpoint lacks.
    """
    n_base = params.n_relations // 2
    ent_index = {name: i for i, name in enumerate(params.entity_names)}
    rel_index = {name: i for i, name in enumerate(params.relation_names[:n_base])}
    ent_map = np.empty(graph.n_entities, dtype=np.int64)
    for i, name in enumerate(graph.entities):
        if name not in ent_index:
            raise CliError(f"entity {name!r} is not in the checkpoint vocabulary")
        ent_map[i] = ent_index[name]
    rel_map = np.empty(graph.n_relations, dtype=np.int64)
    for i, name in enumerate(graph.relations):
        if name not in rel_index:
            raise CliError(f"relation {name!r} is not in the checkpoint vocabulary")
        rel_map[i] = rel_index[name]

    def recode(t):
        return np.stack([ent_map[t[:, 0]], rel_map[t[:, 1]], ent_map[t[:, 2]]], axis=1)

    return KnowledgeGraph(list(params.entity_names), list(params.relation_names[:n_base]),
                          recode(graph.train), recode(graph.valid), recode(graph.test))


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(cfg):
    geo = _geometry(cfg)
    _ensure_seed(cfg)
    graph = _load_data(cfg["data"])
    config = TrainConfig(
        dim=cfg["dim"], geometry=geo, learning_rate=cfg["lr"], batch_size=cfg["batch"],
        negatives=cfg["neg"], epochs=cfg["epochs"], seed=cfg["seed"],
        eval_every=cfg["eval_every"], init_scale=cfg["init_scale"], workers=cfg["workers"],
        train_eval_size=cfg["train_eval_size"], debug=cfg["debug"])
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    header = config_header("train", cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    trace_path = os.path.join(out, TRACE_NAME)
    rows = []

    def on_row(row):
        rows.append(row.tsv())
        write_atomic(trace_path, header + TRACE_HEADER + "\n" + "\n".join(rows) + "\n")
        print(f"epoch {row.epoch} {row.split} mrr={row.mrr:.4f} hits@10={row.hits10:.4f} "
              f"loss={row.mean_loss:.4f}", flush=True)

    try:
        result = train(graph, config, callbacks=[on_row], backend=_backend(cfg))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    ckpt = os.path.join(out, CHECKPOINT_NAME)
    tmp = ckpt + ".tmp"
    save_checkpoint(result.params, tmp)
    os.replace(tmp, ckpt)
    write_atomic(os.path.join(out, CONFIG_NAME), header + config_text(cfg))
    if result.best_valid_mrr is None:
        print(f"no validation split; saved epoch {result.best_epoch}")
    else:
        print(f"best valid mrr={result.best_valid_mrr:.6f} at epoch {result.best_epoch}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(cfg):
    if cfg["ties"] not in TIE_MODES:
        raise CliError(f"--ties must be one of {', '.join(TIE_MODES)}")
    params = _load_model(cfg["checkpoint"])
    graph = align_graph(params, _load_data(cfg["data"]))
    try:
        triples = graph.split(cfg["split"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    report = evaluate(params, triples, TruthIndex.from_graph(graph), graph.n_relations,
                      ties=cfg["ties"], backend=_backend(cfg))
    _emit(cfg["out"], config_header("eval", cfg) + report.to_tsv(cfg["per_relation"]))
    return 0


def cmd_analyze(cfg):
    graph = _load_data(cfg["data"])
    report = classify_relations(graph, cfg["khs_threshold"], cfg["min_max_path"])
    _emit(cfg["out"], config_header("analyze", cfg) + report.to_tsv())
    return 0


def _proportions(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"bad --proportions {text!r}") from None
    if not values or any(not 0 < p <= 1 for p in values):
        raise CliError("proportions must lie in (0, 1]")
    return values


def cmd_split(cfg):
    proportions = _proportions(cfg["proportions"])
    _ensure_seed(cfg)
    graph = _load_data(cfg["data"])
    if cfg["resplit"]:
        try:
            graph = resplit(graph, cfg["valid_size"], cfg["test_size"], cfg["seed"])
        except ValueError as exc:
            raise CliError(str(exc)) from None
    report = classify_relations(graph, cfg["khs_threshold"], cfg["min_max_path"])
    try:
        subsets = build_hier_subsets(graph, report, proportions, cfg["seed"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    header = config_header("split", cfg)
    hier = set(report.hierarchical_ids())
    manifest = ["subset\tproportion\trelation\thierarchical"]
    for p, (sub, keep) in subsets.items():
        name = f"h{round(p * 100):d}"
        directory = os.path.join(cfg["out"], name)
        tmp = directory + ".tmp"
        sub.write(tmp)
        if os.path.isdir(directory):
            for f in os.listdir(directory):
                os.unlink(os.path.join(directory, f))
            os.rmdir(directory)
        os.replace(tmp, directory)
        manifest += [f"{name}\t{p:g}\t{graph.relations[r]}\t{int(r in hier)}" for r in keep]
        print(f"{name}: {len(keep)} relations ({len(hier)} hierarchical), "
              f"{len(sub.train)}/{len(sub.valid)}/{len(sub.test)} triples")
    write_atomic(os.path.join(cfg["out"], "manifest.tsv"), header + "\n".join(manifest) + "\n")
    write_atomic(os.path.join(cfg["out"], "hierarchy.tsv"), header + report.to_tsv())
    return 0


def project_rows(reference, points):
    """Coordinates in the plane spanned by ``reference`` and each point.

    x' is the component along ``reference``, y' the norm of the remainder.
    """
    norm = np.linalg.norm(reference)
    if norm < geometry.EPS_ZERO:
        raise CliError("subject embedding has zero norm; projection undefined")
    points = np.atleast_2d(points)
    x = points @ (reference / norm)
    y = np.sqrt(np.maximum(np.sum(points * points, axis=1) - x * x, 0.0))
    return x, y


def _transformed(params, s, r, objects):
    """Subject and object embeddings after the relation acts on them."""
    e = params.entity_emb
    w, t = params.rel_diag[r], params.rel_trans[r]
    geo = params.geometry
    if geo.is_poincare:
        subj = geometry.mobius_matvec(w, e[s], geo.c)
        objs = geometry.mobius_add(e[objects], np.broadcast_to(t, (len(objects), len(t))), geo.c)
        return subj, objs
    return w * e[s], e[objects] + t


def cmd_project2d(cfg):
    params = _load_model(cfg["checkpoint"])
    ent_index = {n: i for i, n in enumerate(params.entity_names)}
    rel_index = {n: i for i, n in enumerate(params.relation_names)}
    if cfg["subject"] not in ent_index:
        raise CliError(f"entity {cfg['subject']!r} is not in the checkpoint vocabulary")
    if cfg["relation"] not in rel_index:
        raise CliError(f"relation {cfg['relation']!r} is not in the checkpoint vocabulary")
    s, r = ent_index[cfg["subject"]], rel_index[cfg["relation"]]
    if cfg["objects"] and cfg["sample"] is not None:
        raise CliError("--objects and --sample are mutually exclusive")
    if cfg["objects"]:
        names = [n.strip() for n in cfg["objects"].split(",") if n.strip()]
        for n in names:
            if n not in ent_index:
                raise CliError(f"entity {n!r} is not in the checkpoint vocabulary")
        objects = np.array([ent_index[n] for n in names], dtype=np.int64)
    else:
        pool = np.array([i for i in range(params.n_entities) if i != s], dtype=np.int64)
        if cfg["sample"] is not None:
            if cfg["sample"] < 1:
                raise CliError("--sample must be positive")
            _ensure_seed(cfg)
            rng = np.random.default_rng(cfg["seed"])
            pool = np.sort(rng.choice(pool, min(cfg["sample"], len(pool)), replace=False))
        objects = pool

    truth = None
    if cfg["data"]:
        truth = TruthIndex.from_graph(align_graph(params, _load_data(cfg["data"])))
    phi = _backend(cfg).score_triples(
        *params.kernel_args(), np.full(len(objects), s), np.full(len(objects), r), objects,
        params.geometry.c, params.geometry.is_poincare)
    prob = sigmoid(phi)

    lines = ["stage\trole\tentity\tx\ty\tscore\tprob\tlabel"]
    subj_t, objs_t = _transformed(params, s, r, objects)
    for stage, ref, pts in (("before", params.entity_emb[s], params.entity_emb[objects]),
                            ("after", subj_t, objs_t)):
        x, y = project_rows(ref, pts)
        sx, _ = project_rows(ref, ref)
        lines.append(f"{stage}\tsubject\t{params.entity_names[s]}\t{sx[0]:.17g}\t0\t-\t-\t-")
        for i, o in enumerate(objects):
            predicted = prob[i] >= 0.5
            if truth is None:
                label = "P" if predicted else "N"
            else:
                actual = (s, r, int(o)) in truth
                label = ("T" if predicted == actual else "F") + ("P" if predicted else "N")
            lines.append(f"{stage}\tobject\t{params.entity_names[o]}\t{x[i]:.17g}\t{y[i]:.17g}\t"
                         f"{phi[i]:.17g}\t{prob[i]:.6f}\t{label}")
    _emit(cfg["out"], config_header("project2d", cfg) + "\n".join(lines) + "\n")
    return 0


def norm_bias_correlation(norms, bias):
    """Pearson correlation, or None when either side is constant."""
    norms = np.asarray(norms, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if len(norms) < 2:
        return None
    dn, db = norms - norms.mean(), bias - bias.mean()
    denom = np.sqrt(np.sum(dn * dn) * np.sum(db * db))
    if not denom > 0:
        return None
    return float(np.sum(dn * db) / denom)


def cmd_bias_norms(cfg):
    params = _load_model(cfg["checkpoint"])
    norms = np.linalg.norm(params.entity_emb, axis=1)
    lines = ["entity\tnorm\tb_s\tb_o"]
    for name, n, bs, bo in zip(params.entity_names, norms, params.bias_subject,
                               params.bias_object):
        lines.append(f"{name}\t{n:.10g}\t{bs:.10g}\t{bo:.10g}")
    for label, bias in (("b_s", params.bias_subject), ("b_o", params.bias_object)):
        corr = norm_bias_correlation(norms, bias)
        lines.append(f"# correlation(norm, {label})\t"
                     + ("undefined" if corr is None else f"{corr:.6f}"))
    _emit(cfg["out"], config_header("bias-norms", cfg) + "\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze, "split": cmd_split,
    "project2d": cmd_project2d, "bias-norms": cmd_bias_norms,
}


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        file_values = read_config_file(args["config"]) if args.get("config") else None
        args.pop("config", None)
        cfg = resolve_config(command, args, file_values)
        return COMMANDS[command](cfg)
    except (CliError, TrainingError, OSError) as exc:
        print(f"murp {command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
