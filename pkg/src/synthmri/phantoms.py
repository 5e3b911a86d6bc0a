"""Synthetic head-like label maps for demos, benchmarks and tests.

A phantom is a centered ellipsoid "head" with an extracerebral shell
(label 1) and organic interior regions carved by a Voronoi partition.
Like real anatomy, the interior structures sit at consistent locations
across subjects (a fixed base layout shared by all seeds) with per-subject
jitter in position and shape, so structure identity is stable across a
population of phantoms. Deterministic in the seed.
"""

from __future__ import annotations

import numpy as np

from .volume import Dims, LabelMap


def make_phantom_labels(
    dims: Dims = (64, 64, 64),
    n_labels: int = 6,
    seed: int = 0,
    shell: bool = True,
) -> LabelMap:
    """Label map with background 0, optional shell label 1, interior regions.

    ``n_labels`` counts every label including background. Interior labels are
    contiguous Voronoi cells around the shared base centers, so each region
    is present with substantial volume and keeps its identity across seeds.
    """
    if n_labels < 2:
        raise ValueError("need at least background plus one structure")
    nx, ny, nz = dims
    rng = np.random.default_rng([17, seed])

    grid = np.stack(
        np.meshgrid(
            np.linspace(-1.0, 1.0, nx),
            np.linspace(-1.0, 1.0, ny),
            np.linspace(-1.0, 1.0, nz),
            indexing="ij",
        ),
        axis=-1,
    )
    # Slightly anisotropic, off-center head so nothing is axis-degenerate.
    semi = np.array([0.80, 0.72, 0.76]) + rng.uniform(-0.05, 0.05, 3)
    center = rng.uniform(-0.05, 0.05, 3)
    r2 = (((grid - center) / semi) ** 2).sum(axis=-1)

    head = r2 <= 1.0
    first_interior = 1
    labels = np.zeros(dims, dtype=np.int32)
    if shell:
        brain = r2 <= 0.72
        labels[head & ~brain] = 1
        first_interior = 2
    else:
        brain = head

    n_interior = n_labels - first_interior
    if n_interior < 1:
        raise ValueError("n_labels too small for the requested shell")
    # Population-consistent layout: base centers/shapes from a fixed stream,
    # individual variability from the per-seed stream.
    base = np.random.default_rng([23, n_interior])
    centers = base.uniform(-0.5, 0.5, size=(n_interior, 3))
    scales = base.uniform(0.8, 1.4, size=(n_interior, 3))
    centers = centers + rng.uniform(-0.08, 0.08, size=(n_interior, 3))
    scales = scales * rng.uniform(0.85, 1.15, size=(n_interior, 3))
    d = np.empty((n_interior,) + dims, dtype=np.float32)
    for i in range(n_interior):
        d[i] = (((grid - centers[i]) * scales[i]) ** 2).sum(axis=-1)
    cell = np.argmin(d, axis=0).astype(np.int32)
    labels[brain] = cell[brain] + first_interior
    return LabelMap(labels)


def make_two_region_labels(dims: Dims = (32, 32, 32)) -> LabelMap:
    """Half/half split along x: labels 1 and 2 (no background)."""
    nx = dims[0]
    labels = np.ones(dims, dtype=np.int32)
    labels[nx // 2 :] = 2
    return LabelMap(labels)
