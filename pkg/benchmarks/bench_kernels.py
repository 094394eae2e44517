"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 20000] [--dim 40] [--entities 5000]
"""

import argparse
import time

import numpy as np

from murp._backend import BACKENDS
from murp.model import Geometry, ModelParams


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="triples per call")
    ap.add_argument("--dim", type=int, default=40)
    ap.add_argument("--entities", type=int, default=5000)
    ap.add_argument("--queries", type=int, default=64, help="queries for candidate scoring")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(sorted(BACKENDS))}")
    print(f"{'geometry':<10} {'kernel':<18} " + " ".join(f"{b:>12}" for b in sorted(BACKENDS))
          + "   speedup")
    for geo in (Geometry.euclidean(), Geometry.poincare(1.0)):
        p = ModelParams.initialize(args.entities, 22, args.dim, geo, rng, init_scale=0.05)
        p.rel_diag += rng.normal(0, 0.3, p.rel_diag.shape)
        s = rng.integers(0, args.entities, args.n)
        r = rng.integers(0, 22, args.n)
        o = rng.integers(0, args.entities, args.n)
        y = (rng.random(args.n) < 0.1).astype(float)
        qs, qr = s[:args.queries], r[:args.queries]
        cand = np.arange(args.entities)
        values = (p.entity_emb, p.rel_diag, p.rel_trans, p.bias_subject, p.bias_object)
        index = rng.integers(0, args.entities, args.n)
        rows = rng.normal(size=(args.n, args.dim))

        cases = {
            "score_triples": lambda k: k.score_triples(*values, s, r, o, geo.c, geo.is_poincare),
            "forward_backward": lambda k: k.forward_backward(*values, s, r, o, y, geo.c,
                                                             geo.is_poincare),
            "score_candidates": lambda k: k.score_candidates(*values, qs, qr, cand, geo.c,
                                                             geo.is_poincare),
            "scatter_add": lambda k: k.scatter_add(np.zeros((args.entities, args.dim)),
                                                   index, rows),
        }
        for name, fn in cases.items():
            times = {b: _best_of(lambda: fn(BACKENDS[b]), args.repeat) for b in sorted(BACKENDS)}
            line = f"{geo.kind:<10} {name:<18} " + " ".join(
                f"{1e3 * times[b]:>10.2f}ms" for b in sorted(BACKENDS))
            if "cython" in times:
                line += f"   {times['numpy'] / times['cython']:6.1f}x"
            print(line)


if __name__ == "__main__":
    main()
