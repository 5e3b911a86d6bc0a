"""Generation hyperparameters: defaults, validation, JSON config files.

Field names mirror the sampler ranges: each (a_*, b_*) pair is a closed
uniform range. Angles are degrees, spatial measures voxels, intensity
parameters assume the [0, 255] convention.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .intensity import ContrastHyperprior


class ConfigError(ValueError):
    """Malformed or invalid generation config."""


@dataclass(frozen=True)
class GenConfig:
    a_rot: float = -10.0
    b_rot: float = 10.0
    a_sc: float = 0.9
    b_sc: float = 1.1
    a_sh: float = -0.01
    b_sh: float = 0.01
    a_tr: float = -20.0
    b_tr: float = 20.0
    sigma_svf: float = 3.0
    a_mu: float = 25.0
    b_mu: float = 225.0
    a_sigma: float = 5.0
    b_sigma: float = 25.0
    sigma_blur: float = 0.3
    sigma_b: float = 0.5
    a_gamma: float = -0.3
    b_gamma: float = 0.3
    c_v: int = 10
    c_B: int = 4
    p_strip: float = 0.2
    extracerebral: tuple[int, ...] = ()
    out_dims: tuple[int, int, int] | None = None
    seed: int = 0
    mode: str = "agnostic"
    hyperpriors: tuple[ContrastHyperprior, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "extracerebral", tuple(int(k) for k in self.extracerebral))
        if self.out_dims is not None:
            object.__setattr__(self, "out_dims", tuple(int(n) for n in self.out_dims))
        if self.hyperpriors is not None:
            object.__setattr__(self, "hyperpriors", tuple(self.hyperpriors))
        self.validate()

    def validate(self) -> None:
        for a, b, name in (
            (self.a_rot, self.b_rot, "rot"),
            (self.a_sc, self.b_sc, "sc"),
            (self.a_sh, self.b_sh, "sh"),
            (self.a_tr, self.b_tr, "tr"),
            (self.a_mu, self.b_mu, "mu"),
            (self.a_sigma, self.b_sigma, "sigma"),
            (self.a_gamma, self.b_gamma, "gamma"),
        ):
            if a > b:
                raise ConfigError(f"inverted range for {name}: ({a}, {b})")
        if self.a_sc <= 0:
            raise ConfigError("scalings must be strictly positive")
        if self.a_sigma < 0:
            raise ConfigError("a_sigma must be >= 0")
        if self.sigma_svf < 0 or self.sigma_b < 0 or self.sigma_blur < 0:
            raise ConfigError("sigma_svf, sigma_b and sigma_blur must be >= 0")
        if self.c_v < 2 or self.c_B < 2:
            raise ConfigError("c_v and c_B must be >= 2")
        if not 0.0 <= self.p_strip <= 1.0:
            raise ConfigError("p_strip must be in [0, 1]")
        if any(k < 0 for k in self.extracerebral):
            raise ConfigError("extracerebral labels must be >= 0")
        if self.out_dims is not None and (
            len(self.out_dims) != 3 or min(self.out_dims) < 1
        ):
            raise ConfigError(f"out_dims must be 3 positive ints, got {self.out_dims}")
        if self.mode not in ("agnostic", "rule"):
            raise ConfigError(f"mode must be 'agnostic' or 'rule', got {self.mode!r}")
        if self.mode == "rule" and not self.hyperpriors:
            raise ConfigError("rule mode requires at least one contrast hyperprior")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["extracerebral"] = list(self.extracerebral)
        d["out_dims"] = list(self.out_dims) if self.out_dims is not None else None
        if self.hyperpriors is not None:
            d["hyperpriors"] = {
                h.name: {str(k): list(v) for k, v in h.entries.items()}
                for h in self.hyperpriors
            }
        return d


_FIELD_NAMES = {f.name for f in dataclasses.fields(GenConfig)}


def _parse_hyperpriors(raw) -> tuple[ContrastHyperprior, ...]:
    if not isinstance(raw, dict):
        raise ConfigError("hyperpriors must be a mapping of contrast name -> entries")
    priors = []
    for name, entries in raw.items():
        try:
            parsed = {int(k): tuple(v) for k, v in entries.items()}
            priors.append(ContrastHyperprior(name=name, entries=parsed))
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigError(f"bad hyperprior for contrast {name!r}: {e}") from e
    return tuple(priors)


def config_from_dict(d: dict) -> GenConfig:
    """Build a validated GenConfig; unknown keys are rejected, missing take defaults."""
    unknown = set(d) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(d)
    if kwargs.get("hyperpriors") is not None:
        kwargs["hyperpriors"] = _parse_hyperpriors(kwargs["hyperpriors"])
    try:
        return GenConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path) -> GenConfig:
    """Read a JSON config file; missing keys fall back to the default values."""
    try:
        with open(path) as fp:
            raw = json.load(fp)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    return config_from_dict(raw)


def save_config(cfg: GenConfig, path) -> None:
    with open(path, "w") as fp:
        json.dump(cfg.to_dict(), fp, indent=2)
        fp.write("\n")
