"""Model hyperparameters, chain configuration and data-driven defaults."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError

DEFAULT_TARGET_PRIOR_VARIANCE = 1e-4
LABEL_SORT_MODES = ("paired", "independent", "none")


def _from_mapping(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed constants of the two-stratum HDP mixture.

    ``a_pi, b_pi``: Beta prior of the active fraction. ``a_alpha, b_alpha`` and
    ``a_tau, b_tau``: Gamma (shape, rate) priors of the local and global DP
    concentrations. ``mu10, mu00``: prior locations of active and inactive
    component means. ``a, b``: inverse-gamma prior on component variances.
    ``H`` plate-local clusters and ``K`` global components per stratum.
    ``shape_per_obs``: inverse-gamma shape added per member in the component
    update; 0.5 is the conjugate value, 1.0 reproduces the published listing.
    """

    a_pi: float
    b_pi: float
    mu10: float
    mu00: float
    a: float
    b: float
    a_alpha: float = 10.0
    b_alpha: float = 5.0
    a_tau: float = 10.0
    b_tau: float = 5.0
    H: int = 10
    K: int = 10
    shape_per_obs: float = 0.5

    def __post_init__(self):
        for name in ("a_pi", "b_pi", "a_alpha", "b_alpha", "a_tau", "b_tau", "a", "b", "shape_per_obs"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"hyperparameter {name} must be a positive number, got {v!r}")
        for name in ("mu10", "mu00"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ConfigError(f"hyperparameter {name} must be finite, got {v!r}")
        for name in ("H", "K"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")

    def prior_mean(self, stratum: int) -> float:
        return self.mu10 if stratum == 1 else self.mu00

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        return _from_mapping(cls, data)


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 7000
    burn_in: int = 3500
    thin: int = 1
    seed: int = 0
    record_traces: bool = True
    label_sort: str = "paired"
    init: str = "prior"

    def __post_init__(self):
        for name in ("n_iter", "burn_in", "thin", "seed"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n_iter < 1 or self.burn_in < 0 or self.burn_in >= self.n_iter:
            raise ConfigError(f"need 0 <= burn_in < n_iter, got {self.burn_in}, {self.n_iter}")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.init not in ("data", "prior"):
            raise ConfigError("init must be 'data' or 'prior'")
        if self.label_sort not in LABEL_SORT_MODES:
            raise ConfigError(f"label_sort must be one of {LABEL_SORT_MODES}")

    def kept(self, sweep: int) -> bool:
        """Whether 0-based ``sweep`` contributes to posterior summaries."""
        return sweep >= self.burn_in and (sweep - self.burn_in) % self.thin == 0

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in - 1) // self.thin + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChainConfig":
        return _from_mapping(cls, data)


def derive_variance_hyperparams(v: float, target_prior_variance: float = DEFAULT_TARGET_PRIOR_VARIANCE):
    """Inverse-gamma ``(a, b)`` whose mean is ``v`` and variance is ``target_prior_variance``.

    ``a = v^2 / t + 2`` and ``b = v^3 / t + v``.
    """
    if not (v > 0 and target_prior_variance > 0):
        raise ConfigError("variance and target prior variance must be positive")
    t = target_prior_variance
    return v * v / t + 2.0, v ** 3 / t + v


def default_hyperparameters(z, *, mu_gap: float | None = None,
                            target_prior_variance: float = DEFAULT_TARGET_PRIOR_VARIANCE,
                            H: int = 10, K: int = 10, **overrides) -> Hyperparameters:
    """Hyperparameters computed from compound readouts ``z`` alone.

    ``mu10``/``mu00`` straddle the compound mean by ``mu_gap / 2`` each; the
    gap defaults to one compound standard deviation. ``a_pi = b_pi`` is half
    the number of compounds.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise ConfigError("need at least two compound values")
    mean, v = float(z.mean()), float(z.var(ddof=1))
    if v <= 0:
        raise ConfigError("compound values have zero variance")
    a, b = derive_variance_hyperparams(v, target_prior_variance)
    gap = math.sqrt(v) if mu_gap is None else float(mu_gap)
    params = dict(
        a_pi=0.5 * z.size, b_pi=0.5 * z.size,
        mu10=mean + gap / 2, mu00=mean - gap / 2,
        a=a, b=b, H=H, K=K,
    )
    params.update(overrides)
    return Hyperparameters(**params)
