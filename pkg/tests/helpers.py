import numpy as np

from murp.model import Geometry, ModelParams


def random_params(rng, n_e, n_r, d, geo, radius=0.6):
    """Random parameters with ball rows well inside radius/sqrt(c)."""
    def ball_rows(n):
        x = rng.normal(size=(n, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        r = rng.uniform(0, radius, size=(n, 1))
        scale = 1 / np.sqrt(geo.c) if geo.is_poincare else 1.0
        return x * r * scale

    return ModelParams(
        entity_emb=ball_rows(n_e),
        rel_diag=rng.uniform(0.5, 1.5, size=(n_r, d)) * rng.choice([-1, 1], size=(n_r, d)),
        rel_trans=ball_rows(n_r),
        bias_subject=rng.normal(size=n_e),
        bias_object=rng.normal(size=n_e),
        geometry=geo,
        entity_names=[f"e{i}" for i in range(n_e)],
        relation_names=[f"r{i}" for i in range(n_r)],
    )


GEOMETRIES = [Geometry.euclidean(), Geometry.poincare(1.0), Geometry.poincare(0.5)]
