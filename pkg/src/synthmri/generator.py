"""End-to-end training-pair generation, deterministic in (seed, sample index).

Every pair is a pure function of (label maps, config, sample index): all
randomness flows from per-sample RNG streams keyed by the master seed and the
index, so pairs can be generated in any order, on any number of workers, and
reproduced exactly from their parameter record.
"""

from __future__ import annotations

import itertools
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .config import GenConfig
from .deform import (
    AffineParams,
    SvfParams,
    affine_matrix,
    compose,
    integrate_svf,
    sample_affine,
    sample_svf_params,
    svf_to_field,
    warp_labels,
)
from .intensity import (
    BiasParams,
    GmmParams,
    apply_bias,
    bias_from_params,
    gamma_normalize,
    gaussian_blur,
    gmm_image_from_noise,
    relabel_to_background,
    sample_bias_params,
    sample_gmm_params,
    sample_gmm_params_rule,
)
from .volume import LabelMap, Volume

# Sub-stream tags keep the parameter draws and the dense voxel noise on
# independent RNG streams, both derived from (master seed, sample index).
_PARAM_STREAM = 1
_NOISE_STREAM = 2


def _rng(master_seed: int, stream: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), stream, int(sample_index)])


@dataclass(frozen=True)
class ParameterRecord:
    """Everything drawn for one sample; enough to regenerate it bit-exactly."""

    sample_index: int
    master_seed: int
    map_index: int
    affine: AffineParams
    svf_grid: np.ndarray
    stripped: bool
    gmm: GmmParams
    bias_grid: np.ndarray
    gamma: float
    contrast: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "sample_index": self.sample_index,
            "master_seed": self.master_seed,
            "map_index": self.map_index,
            "rotations": list(self.affine.rotations),
            "scalings": list(self.affine.scalings),
            "shears": list(self.affine.shears),
            "translations": list(self.affine.translations),
            "svf_grid": [float(v) for v in self.svf_grid.ravel()],
            "svf_grid_shape": list(self.svf_grid.shape),
            "stripped": self.stripped,
            "gmm": {str(k): [self.gmm.means[k], self.gmm.stds[k]] for k in self.gmm.labels},
            "bias_grid": [float(v) for v in self.bias_grid.ravel()],
            "bias_grid_shape": list(self.bias_grid.shape),
            "gamma": self.gamma,
            "contrast": self.contrast,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ParameterRecord":
        svf = np.asarray(d["svf_grid"], dtype=np.float32).reshape(d["svf_grid_shape"])
        bias = np.asarray(d["bias_grid"], dtype=np.float32).reshape(d["bias_grid_shape"])
        gmm = GmmParams(
            means={int(k): v[0] for k, v in d["gmm"].items()},
            stds={int(k): v[1] for k, v in d["gmm"].items()},
        )
        return cls(
            sample_index=int(d["sample_index"]),
            master_seed=int(d["master_seed"]),
            map_index=int(d["map_index"]),
            affine=AffineParams(
                rotations=tuple(d["rotations"]),
                scalings=tuple(d["scalings"]),
                shears=tuple(d["shears"]),
                translations=tuple(d["translations"]),
            ),
            svf_grid=svf,
            stripped=bool(d["stripped"]),
            gmm=gmm,
            bias_grid=bias,
            gamma=float(d["gamma"]),
            contrast=d.get("contrast"),
        )


@dataclass(frozen=True)
class TrainingPair:
    """Image in [0, 1] plus the aligned label target and full provenance."""

    image: Volume
    target: LabelMap
    record: ParameterRecord

    def __post_init__(self):
        if self.image.dims != self.target.dims:
            raise ValueError("image and target dims differ")


def label_universe(maps: Sequence[LabelMap]) -> tuple[int, ...]:
    """Sorted union of all maps' labels, background 0 always included."""
    universe = {0}
    for m in maps:
        universe.update(m.label_set)
    return tuple(sorted(universe))


def _check_inputs(maps: Sequence[LabelMap], cfg: GenConfig) -> None:
    if not maps:
        raise ValueError("need at least one input label map")
    cfg.validate()
    for i, m in enumerate(maps):
        if len(m.label_set) < 2:
            raise ValueError(f"input map {i} has fewer than 2 labels")
    if cfg.out_dims is not None:
        for i, m in enumerate(maps):
            if any(o > d for o, d in zip(cfg.out_dims, m.dims)):
                raise ValueError(
                    f"out_dims {cfg.out_dims} exceed map {i} dims {m.dims}"
                )


def draw_parameter_record(
    maps: Sequence[LabelMap], cfg: GenConfig, sample_index: int
) -> ParameterRecord:
    """Draw every sampled parameter for one pair, in a fixed order."""
    _check_inputs(maps, cfg)
    rng = _rng(cfg.seed, _PARAM_STREAM, sample_index)

    map_index = int(rng.integers(len(maps)))
    affine = sample_affine(cfg, rng)
    svf = sample_svf_params(cfg, rng)
    # The strip coin is flipped unconditionally so the stream layout does not
    # depend on p_strip.
    stripped = bool(rng.uniform() < cfg.p_strip)

    contrast = None
    if cfg.mode == "rule":
        contrast, gmm = sample_gmm_params_rule(cfg.hyperpriors, rng)
    else:
        gmm = sample_gmm_params(label_universe(maps), cfg, rng)
    bias = sample_bias_params(cfg, rng)
    gamma = float(rng.uniform(cfg.a_gamma, cfg.b_gamma))

    return ParameterRecord(
        sample_index=int(sample_index),
        master_seed=int(cfg.seed),
        map_index=map_index,
        affine=affine,
        svf_grid=svf.grid,
        stripped=stripped,
        gmm=gmm,
        bias_grid=bias.grid,
        gamma=gamma,
        contrast=contrast,
    )


def _center_crop(arr: np.ndarray, out_dims) -> np.ndarray:
    slices = []
    for n, o in zip(arr.shape[:3], out_dims):
        start = (n - o) // 2
        slices.append(slice(start, start + o))
    return arr[tuple(slices)]


def synthesize_from_record(
    maps: Sequence[LabelMap], cfg: GenConfig, record: ParameterRecord
) -> TrainingPair:
    """Deterministically rebuild the pair described by a parameter record."""
    _check_inputs(maps, cfg)
    source = maps[record.map_index]
    dims = source.dims

    aff = affine_matrix(record.affine, dims)
    svf = svf_to_field(SvfParams(record.svf_grid, float(cfg.sigma_svf)), dims)
    phi = compose(aff, integrate_svf(svf))
    target = warp_labels(source, phi)
    if record.stripped:
        target = relabel_to_background(target, cfg.extracerebral)

    noise = _rng(record.master_seed, _NOISE_STREAM, record.sample_index)
    img = gmm_image_from_noise(
        target, record.gmm, noise.standard_normal(dims, dtype=np.float32)
    )
    img = gaussian_blur(img, cfg.sigma_blur)
    img = apply_bias(img, bias_from_params(BiasParams(record.bias_grid, cfg.sigma_b), dims))
    img = gamma_normalize(img, record.gamma)

    if cfg.out_dims is not None and tuple(cfg.out_dims) != dims:
        img = Volume(_center_crop(img.data, cfg.out_dims), img.voxel_size)
        target = LabelMap(_center_crop(target.labels, cfg.out_dims), target.voxel_size)
    return TrainingPair(image=img, target=target, record=record)


def generate_pair(
    maps: Sequence[LabelMap], cfg: GenConfig, sample_index: int
) -> TrainingPair:
    """Run the full sampling chain for one index: deform, strip, synthesize."""
    record = draw_parameter_record(maps, cfg, sample_index)
    return synthesize_from_record(maps, cfg, record)


def record_parameters(pair: TrainingPair) -> ParameterRecord:
    """The exact parameters a pair was generated with."""
    return pair.record


_WORKER_STATE: dict = {}


def _init_worker(maps, cfg):
    _WORKER_STATE["maps"] = maps
    _WORKER_STATE["cfg"] = cfg


def _worker_generate(sample_index: int) -> TrainingPair:
    return generate_pair(_WORKER_STATE["maps"], _WORKER_STATE["cfg"], sample_index)


def generate_indices(
    maps: Sequence[LabelMap],
    cfg: GenConfig,
    indices: Iterable[int],
    workers: int = 1,
) -> Iterator[TrainingPair]:
    """Generate the given sample indices, in order, on one or more processes."""
    if workers <= 1:
        for n in indices:
            yield generate_pair(maps, cfg, n)
        return
    # Windowed submission so unbounded index streams work and results are
    # yielded in index order while workers run ahead.
    it = iter(indices)
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(list(maps), cfg)
    ) as pool:
        window: deque = deque()
        for n in itertools.islice(it, 2 * workers):
            window.append(pool.submit(_worker_generate, n))
        while window:
            yield window.popleft().result()
            for n in itertools.islice(it, 1):
                window.append(pool.submit(_worker_generate, n))


def generate_stream(
    maps: Sequence[LabelMap],
    cfg: GenConfig,
    count: int | None = None,
    workers: int = 1,
) -> Iterator[TrainingPair]:
    """Lazily yield pairs for indices 0, 1, 2, ...; same seed, same sequence."""
    _check_inputs(maps, cfg)
    indices = range(count) if count is not None else itertools.count()
    return generate_indices(maps, cfg, indices, workers=workers)


def with_seed(cfg: GenConfig, seed: int) -> GenConfig:
    """Copy of the config with a different master seed."""
    return replace(cfg, seed=int(seed))
