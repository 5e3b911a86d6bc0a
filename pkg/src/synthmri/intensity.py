"""Randomized intensity synthesis: GMM image, blur, bias field, gamma.

The chain turns a label map into an image with arbitrary contrast: each label
draws its own Gaussian intensity distribution, the sampled image is slightly
blurred to correlate neighbors, corrupted by a smooth multiplicative bias
field, then contrast-perturbed and min-max normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .volume import Dims, LabelMap, Volume, _upscale_data


@dataclass(frozen=True)
class GmmParams:
    """Per-label Gaussian mean and standard deviation, keyed by label id."""

    means: Mapping[int, float]
    stds: Mapping[int, float]

    def __post_init__(self):
        means = {int(k): float(v) for k, v in self.means.items()}
        stds = {int(k): float(v) for k, v in self.stds.items()}
        if set(means) != set(stds):
            raise ValueError("means and stds must cover the same labels")
        if any(s < 0 for s in stds.values()):
            raise ValueError("standard deviations must be >= 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(sorted(self.means))

    def lookup_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """(mu, sigma) arrays indexable by label id."""
        top = max(self.means) + 1
        mu = np.zeros(top, dtype=np.float32)
        sig = np.zeros(top, dtype=np.float32)
        for k in self.means:
            mu[k] = self.means[k]
            sig[k] = self.stds[k]
        return mu, sig


@dataclass(frozen=True)
class BiasParams:
    """Coarse log-domain bias grid (c, c, c) and its sampling std."""

    grid: np.ndarray
    sigma_b: float

    def __post_init__(self):
        grid = np.ascontiguousarray(self.grid, dtype=np.float32)
        if grid.ndim != 3 or min(grid.shape) < 2:
            raise ValueError(f"bias grid must be 3-D with >= 2 nodes per axis, got {grid.shape}")
        if not np.isfinite(grid).all():
            raise ValueError("bias grid contains NaN/Inf")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class ContrastHyperprior:
    """Gaussian hyperprior over GMM parameters for one named contrast.

    ``entries`` maps label id -> (mean_mu, std_mu, mean_sigma, std_sigma).
    """

    name: str
    entries: Mapping[int, tuple[float, float, float, float]]

    def __post_init__(self):
        entries = {
            int(k): tuple(float(x) for x in v) for k, v in self.entries.items()
        }
        for k, v in entries.items():
            if len(v) != 4:
                raise ValueError(f"hyperprior entry for label {k} must have 4 values")
            if v[1] < 0 or v[3] < 0:
                raise ValueError(f"hyperprior stds must be >= 0 (label {k})")
        object.__setattr__(self, "entries", entries)


def sample_gmm_params(labels, cfg, rng: np.random.Generator) -> GmmParams:
    """Uniform (mu, sigma) draw per label, background included like any other."""
    if cfg.a_mu > cfg.b_mu or cfg.a_sigma > cfg.b_sigma:
        raise ValueError("inverted range for GMM parameters")
    if cfg.a_sigma < 0:
        raise ValueError("a_sigma must be >= 0")
    means, stds = {}, {}
    for k in sorted(int(k) for k in labels):
        means[k] = float(rng.uniform(cfg.a_mu, cfg.b_mu))
        stds[k] = float(rng.uniform(cfg.a_sigma, cfg.b_sigma))
    return GmmParams(means=means, stds=stds)


def sample_gmm_params_rule(
    priors, rng: np.random.Generator
) -> tuple[str, GmmParams]:
    """Pick a contrast uniformly, then draw (mu, sigma) from its hyperprior."""
    priors = list(priors)
    if not priors:
        raise ValueError("no contrast hyperpriors registered")
    chosen = priors[int(rng.integers(len(priors)))]
    means, stds = {}, {}
    for k in sorted(chosen.entries):
        mean_mu, std_mu, mean_sigma, std_sigma = chosen.entries[k]
        means[k] = float(rng.normal(mean_mu, std_mu))
        stds[k] = max(float(rng.normal(mean_sigma, std_sigma)), 0.0)
    return chosen.name, GmmParams(means=means, stds=stds)


def gmm_image_from_noise(l: LabelMap, g: GmmParams, noise: np.ndarray) -> Volume:
    """Deterministic half of GMM sampling: mu[L] + sigma[L] * noise."""
    missing = set(l.label_set) - set(g.means)
    if missing:
        raise ValueError(f"labels {sorted(missing)} have no GMM parameters")
    mu, sig = g.lookup_tables()
    data = mu[l.labels]
    data += sig[l.labels] * noise.astype(np.float32, copy=False)
    return Volume(data, l.voxel_size)


def sample_gmm_image(l: LabelMap, g: GmmParams, rng: np.random.Generator) -> Volume:
    """Each voxel drawn independently from its label's Gaussian."""
    noise = rng.standard_normal(l.dims, dtype=np.float32)
    return gmm_image_from_noise(l, g, noise)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Discrete Gaussian truncated at ceil(3*sigma) (min radius 1), sum 1."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(v: Volume, sigma_blur: float) -> Volume:
    """Separable Gaussian blur with reflect padding; sigma 0 is the identity."""
    if sigma_blur < 0:
        raise ValueError("sigma_blur must be >= 0")
    if sigma_blur == 0:
        return v
    kernel = gaussian_kernel_1d(sigma_blur).astype(np.float32)
    data = v.data
    for axis in range(3):
        data = ndimage.correlate1d(data, kernel, axis=axis, mode="reflect")
    return Volume(data, v.voxel_size)


def sample_bias_params(cfg, rng: np.random.Generator) -> BiasParams:
    c = int(cfg.c_B)
    grid = rng.standard_normal((c, c, c), dtype=np.float32)
    grid *= np.float32(cfg.sigma_b)
    return BiasParams(grid=grid, sigma_b=float(cfg.sigma_b))


def bias_from_params(params: BiasParams, dims: Dims) -> Volume:
    """Upscale the coarse log-field and exponentiate; strictly positive."""
    return Volume(np.exp(_upscale_data(params.grid, dims)))


def sample_bias(cfg, dims: Dims, rng: np.random.Generator) -> Volume:
    """Smooth multiplicative bias field: exp of an upscaled coarse Gaussian grid."""
    if cfg.sigma_b < 0:
        raise ValueError("sigma_b must be >= 0")
    return bias_from_params(sample_bias_params(cfg, rng), dims)


def apply_bias(v: Volume, b: Volume) -> Volume:
    """Voxelwise product with a strictly positive bias field."""
    if v.dims != b.dims:
        raise ValueError(f"dim mismatch: image {v.dims} vs bias {b.dims}")
    if b.data.min() <= 0:
        raise ValueError("bias field must be strictly positive")
    return Volume(v.data * b.data, v.voxel_size)


def gamma_normalize(v: Volume, gamma: float) -> Volume:
    """Min-max rescale to [0, 1], then raise to the exponent exp(gamma).

    The exponent is e**gamma rather than gamma itself so gamma = 0 is the
    plain normalization and negative draws brighten instead of inverting.
    A constant input maps to all zeros so randomized pipelines never abort.
    """
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        return Volume(np.zeros(v.dims, dtype=np.float32), v.voxel_size)
    t = (v.data - np.float32(lo)) / np.float32(hi - lo)
    np.clip(t, 0.0, 1.0, out=t)
    return Volume(t ** math.exp(gamma), v.voxel_size)


def relabel_to_background(l: LabelMap, labels) -> LabelMap:
    """Replace the given labels with background 0."""
    doomed = [int(k) for k in labels]
    if not doomed:
        return l
    out = np.where(np.isin(l.labels, doomed), np.int32(0), l.labels)
    return LabelMap(out, l.voxel_size)


def strip_extracerebral(
    l: LabelMap, extracerebral, rng: np.random.Generator, p_strip: float = 0.2
) -> LabelMap:
    """With probability p_strip, relabel all extracerebral structures to 0.

    Operates on the label map itself, so a stripped draw affects both the
    synthesized intensities and the training target.
    """
    if not 0.0 <= p_strip <= 1.0:
        raise ValueError("p_strip must be in [0, 1]")
    if rng.uniform() < p_strip:
        return relabel_to_background(l, extracerebral)
    return l
