"""Synthetic screening campaigns: log-normal mixture compounds plus matrix-normal plate noise."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .hyper import Hyperparameters
from .plate import Campaign, Plate, Well, WellType

HIT_MEANS = (0.20, 0.24, 0.28, 0.32)
HIT_VARIANCES = (0.0020, 0.0022, 0.0024, 0.0026)
NONHIT_MEANS = (0.10, 0.12, 0.14, 0.16)
NONHIT_VARIANCES = (0.010, 0.011, 0.012, 0.013)

# Noise sd as a fraction of the non-hit mixture sd. Chosen so that the total
# compound variance of the 40/10/5% benchmark sets lands on 0.0157/0.0154/0.0151.
DEFAULT_NOISE_FRACTION = 0.475


@dataclass
class MixtureSpec:
    means: tuple
    variances: tuple
    weights: tuple | None = None

    def __post_init__(self):
        self.means = tuple(float(m) for m in self.means)
        self.variances = tuple(float(v) for v in self.variances)
        k = len(self.means)
        if k == 0 or len(self.variances) != k:
            raise ConfigError("mixture needs equally many (>0) means and variances")
        if self.weights is None:
            self.weights = tuple([1.0 / k] * k)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != k or any(w < 0 for w in self.weights):
            raise ConfigError("mixture weights must be nonnegative, one per component")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError("mixture weights must sum to 1")

    def moments(self) -> tuple[float, float]:
        """Mean and variance of the mixture, components read as (mean, variance)."""
        w, m, v = (np.array(x) for x in (self.weights, self.means, self.variances))
        mean = float((w * m).sum())
        return mean, float((w * (v + m * m)).sum() - mean * mean)


@dataclass
class PlateNoiseSpec:
    row_scale: np.ndarray
    col_scale: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        self.row_scale = np.asarray(self.row_scale, dtype=float)
        self.col_scale = np.asarray(self.col_scale, dtype=float)
        if self.amplitude < 0:
            raise ConfigError("noise amplitude must be >= 0")
        for name in ("row_scale", "col_scale"):
            a = getattr(self, name)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ConfigError(f"{name} must be square")
            if np.abs(a - a.T).max(initial=0.0) > 1e-12:
                raise ConfigError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(a).min() < -1e-10:
                raise ConfigError(f"{name} is not positive semidefinite")

    def factors(self):
        return _psd_factor(self.row_scale), _psd_factor(self.col_scale)


@dataclass
class CampaignSpec:
    n_plates: int = 1000
    n_rows: int = 8
    n_cols: int = 10
    n_compounds: int = 80000
    active_fraction: float = 0.10
    hit_mixture: MixtureSpec = field(default_factory=lambda: MixtureSpec(HIT_MEANS, HIT_VARIANCES))
    nonhit_mixture: MixtureSpec = field(default_factory=lambda: MixtureSpec(NONHIT_MEANS, NONHIT_VARIANCES))
    noise: PlateNoiseSpec | None = None
    seed: int = 0
    lognormal_params: str = "moments"

    def __post_init__(self):
        for name in ("n_plates", "n_rows", "n_cols", "n_compounds"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_compounds > self.n_plates * self.n_rows * self.n_cols:
            raise ConfigError("more compounds than wells")
        if not 0.0 <= self.active_fraction <= 1.0:
            raise ConfigError("active_fraction must lie in [0, 1]")
        if self.lognormal_params not in ("moments", "logscale"):
            raise ConfigError("lognormal_params must be 'moments' or 'logscale'")
        if self.noise is None:
            self.noise = default_noise(self.n_rows, self.n_cols, self.nonhit_mixture, self.lognormal_params)
        elif self.noise.row_scale.shape[0] != self.n_rows or self.noise.col_scale.shape[0] != self.n_cols:
            raise ConfigError("noise scale matrices do not match plate geometry")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = {
            "row_scale": self.noise.row_scale.tolist(),
            "col_scale": self.noise.col_scale.tolist(),
            "amplitude": self.noise.amplitude,
        }
        return d


def ar1_matrix(n: int, rho: float) -> np.ndarray:
    """AR(1) correlation matrix ``rho ** |i - j|``."""
    if not -1 < rho < 1:
        raise ConfigError("AR(1) correlation must lie in (-1, 1)")
    i = np.arange(n)
    return rho ** np.abs(i[:, None] - i[None, :]).astype(float)


def default_noise(n_rows, n_cols, nonhit: MixtureSpec, params="moments", *,
                  rho_row=0.6, rho_col=0.2, fraction=DEFAULT_NOISE_FRACTION) -> PlateNoiseSpec:
    if params == "moments":
        sd = math.sqrt(nonhit.moments()[1])
    else:
        sd = math.sqrt(_logscale_mixture_variance(nonhit))
    return PlateNoiseSpec(ar1_matrix(n_rows, rho_row), ar1_matrix(n_cols, rho_col), fraction * sd)


def _logscale_mixture_variance(spec: MixtureSpec) -> float:
    w = np.array(spec.weights)
    ml, s2 = np.array(spec.means), np.array(spec.variances)
    m = np.exp(ml + s2 / 2)
    v = (np.exp(s2) - 1) * np.exp(2 * ml + s2)
    mean = (w * m).sum()
    return float((w * (v + m * m)).sum() - mean * mean)


def lognormal_moment_params(mean: float, variance: float) -> tuple[float, float]:
    """(meanlog, sdlog) of the log-normal with the given mean and variance."""
    if not (mean > 0 and variance > 0):
        raise ConfigError("log-normal mean and variance must be positive")
    s2 = math.log1p(variance / (mean * mean))
    return math.log(mean) - s2 / 2, math.sqrt(s2)


def sample_compound_values(spec: MixtureSpec, n: int, rng, params: str = "moments") -> np.ndarray:
    comp = rng.choice(len(spec.means), size=n, p=np.array(spec.weights))
    if params == "moments":
        ml, sl = map(np.array, zip(*(lognormal_moment_params(m, v)
                                     for m, v in zip(spec.means, spec.variances))))
    else:
        ml, sl = np.array(spec.means), np.sqrt(np.array(spec.variances))
    return np.exp(ml[comp] + sl[comp] * rng.standard_normal(n))


def _psd_factor(a: np.ndarray) -> np.ndarray:
    """``F`` with ``F @ F.T == a`` for a symmetric PSD matrix (eigendecomposition)."""
    vals, vecs = np.linalg.eigh(a)
    if vals.min() < -1e-10:
        raise ConfigError("scale matrix is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_plate_noise(spec: PlateNoiseSpec, rng, factors=None) -> np.ndarray:
    """Matrix-normal draw ``amplitude * A X B^T`` with ``A A^T = row_scale``, ``B B^T = col_scale``."""
    a, b = factors if factors is not None else spec.factors()
    x = rng.standard_normal((a.shape[1], b.shape[1]))
    return spec.amplitude * (a @ x @ b.T)


def build_campaign(spec: CampaignSpec):
    """Generate a campaign and its ground truth ``{(plate_id, row, col): 0/1}``."""
    root = np.random.SeedSequence(spec.seed)
    place_ss, value_ss, noise_ss = root.spawn(3)
    place_rng = np.random.default_rng(place_ss)
    value_rng = np.random.default_rng(value_ss)

    per_plate = spec.n_rows * spec.n_cols
    total = spec.n_plates * per_plate
    n_hit = int(round(spec.active_fraction * spec.n_compounds))
    positions = np.sort(place_rng.permutation(total)[: spec.n_compounds])
    labels = np.zeros(spec.n_compounds, dtype=np.int8)
    labels[:n_hit] = 1
    labels = place_rng.permutation(labels)

    values = np.empty(spec.n_compounds)
    hit = labels == 1
    values[hit] = sample_compound_values(spec.hit_mixture, int(hit.sum()), value_rng, spec.lognormal_params)
    values[~hit] = sample_compound_values(spec.nonhit_mixture, int((~hit).sum()), value_rng,
                                          spec.lognormal_params)

    factors = spec.noise.factors()
    plate_of = positions // per_plate
    noise = np.empty(spec.n_compounds)
    for m, ss in enumerate(noise_ss.spawn(spec.n_plates)):
        sel = plate_of == m
        if not sel.any():
            continue
        grid = sample_plate_noise(spec.noise, np.random.default_rng(ss), factors).ravel()
        noise[sel] = grid[positions[sel] - m * per_plate]
    values += noise

    width = len(str(spec.n_plates))
    plates, truth = [], {}
    bounds = np.searchsorted(plate_of, np.arange(spec.n_plates + 1))
    for m in range(spec.n_plates):
        pid = f"P{m + 1:0{width}d}"
        wells = []
        for j in range(bounds[m], bounds[m + 1]):
            r, c = divmod(int(positions[j] - m * per_plate), spec.n_cols)
            wells.append(Well(r, c, WellType.COMPOUND, float(values[j])))
            truth[(pid, r, c)] = int(labels[j])
        plates.append(Plate(pid, spec.n_rows, spec.n_cols, tuple(wells)))
    meta = {"generator": "bhts.synth", "seed": str(spec.seed),
            "active_fraction": repr(spec.active_fraction)}
    return Campaign(tuple(plates), meta), truth


def sample_model_campaign(hp: Hyperparameters, n_plates: int, n_rows: int, n_cols: int,
                          pi: float, seed: int = 0):
    """Draw a campaign from the hierarchical mixture itself (for recovery checks).

    Concentrations are fixed at their prior means; everything else follows
    the generative model with truncations ``hp.H`` and ``hp.K``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    H, K = hp.H, hp.K
    alpha, tau = hp.a_alpha / hp.b_alpha, hp.a_tau / hp.b_tau

    def sticks(conc, shape):
        nu = np.ones(shape)
        nu[..., :-1] = rng.beta(1.0, conc, size=shape[:-1] + (shape[-1] - 1,))
        rem = np.concatenate([np.ones(shape[:-1] + (1,)), np.cumprod(1 - nu[..., :-1], axis=-1)], -1)
        return nu * rem

    w_global = sticks(tau, (2, K))
    sigma2 = hp.b / rng.gamma(hp.a, size=(2, K))
    mu = rng.normal(np.array([[hp.mu00], [hp.mu10]]), np.sqrt(sigma2))
    plates, truth = [], {}
    for m in range(n_plates):
        w_local = sticks(alpha, (2, H))
        comp = np.array([[rng.choice(K, p=w_global[s]) for _ in range(H)] for s in (0, 1)])
        wells = []
        pid = f"M{m + 1:04d}"
        for r in range(n_rows):
            for c in range(n_cols):
                s = int(rng.random() < pi)
                h = rng.choice(H, p=w_local[s])
                k = comp[s, h]
                z = rng.normal(mu[s, k], math.sqrt(sigma2[s, k]))
                wells.append(Well(r, c, WellType.COMPOUND, float(z)))
                truth[(pid, r, c)] = s
        plates.append(Plate(pid, n_rows, n_cols, tuple(wells)))
    return Campaign(tuple(plates), {"generator": "bhts.model"}), truth


def benchmark_campaign_spec(active_fraction: float, n_plates: int = 1000, seed: int = 0, **kw) -> CampaignSpec:
    """Benchmark layout: ``n_plates`` full 8x10 compound plates with the reference mixtures."""
    return CampaignSpec(n_plates=n_plates, n_rows=8, n_cols=10, n_compounds=n_plates * 80,
                        active_fraction=active_fraction, seed=seed, **kw)


def truth_vector(truth: dict, keys) -> np.ndarray:
    return np.array([truth[k] for k in keys], dtype=np.int8)
