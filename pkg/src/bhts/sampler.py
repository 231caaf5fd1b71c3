"""Blocked Gibbs sampler for the two-stratum hierarchical DP Gaussian mixture.

Each compound readout ``z`` on plate ``m`` is drawn from::

    pi * sum_h w1[m, h] N(z; theta1[J1[m, h]]) + (1 - pi) * sum_h w0[m, h] N(z; theta0[J0[m, h]])

Plate-local weights ``w[m, :]`` (``H`` sticks) index plate-local clusters,
each cluster points at one of ``K`` global Normal-inverse-gamma components of
its stratum. Stratum index 1 is "active" (hit), 0 is "inactive"; every
per-stratum array in :class:`ModelState` carries that axis first.

Every update draws its random numbers in a fixed layout from a single
generator; the ``threads`` option only splits deterministic arithmetic across
row blocks, so results are bit-identical for any thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import sort_component_draw
from .errors import NumericalError, ValidationError
from .hyper import ChainConfig, Hyperparameters
from .plate import Campaign, WellType

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
NU_CLAMP = 1.0 - 1e-12
_TINY = np.finfo(float).tiny
_ONE_MINUS = 1.0 - np.finfo(float).epsneg
_PAR_MIN_ROWS = 4096


@dataclass
class CompoundData:
    """Compound wells of a campaign flattened into arrays, grouped by plate."""

    z: np.ndarray
    plate: np.ndarray
    plate_ids: list
    rows: np.ndarray
    cols: np.ndarray

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def n_plates(self) -> int:
        return len(self.plate_ids)

    @classmethod
    def from_campaign(cls, campaign: Campaign) -> "CompoundData":
        z, plate, rows, cols, ids = [], [], [], [], []
        for p in campaign.plates:
            comps = [w for w in p.wells if w.well_type is WellType.COMPOUND]
            if not comps:
                log.warning("plate %s has no compound wells; left out of the model", p.plate_id)
                continue
            m = len(ids)
            ids.append(p.plate_id)
            for w in comps:
                z.append(w.value)
                plate.append(m)
                rows.append(w.row)
                cols.append(w.col)
        if not z:
            raise ValidationError("campaign has no compound wells")
        return cls(np.array(z, float), np.array(plate, np.intp), ids,
                   np.array(rows, np.intp), np.array(cols, np.intp))

    @classmethod
    def from_arrays(cls, z, plate) -> "CompoundData":
        z = np.asarray(z, float)
        plate = np.asarray(plate, np.intp)
        if not np.all(np.isfinite(z)):
            raise ValidationError("non-finite compound values")
        uniq = np.unique(plate)
        if uniq[0] != 0 or uniq[-1] != uniq.size - 1:
            raise ValidationError("plate indices must be 0..M-1 with every plate present")
        return cls(z, plate, [f"P{m}" for m in range(uniq.size)],
                   np.zeros(z.size, np.intp), np.arange(z.size, dtype=np.intp))


@dataclass
class ModelState:
    pi: float
    b: np.ndarray           # (N,) hit indicators
    nu_local: np.ndarray    # (2, M, H)
    w_local: np.ndarray     # (2, M, H)
    nu_global: np.ndarray   # (2, K)
    w_global: np.ndarray    # (2, K)
    mu: np.ndarray          # (2, K)
    sigma2: np.ndarray      # (2, K)
    alpha: np.ndarray       # (2,) local concentrations
    tau: np.ndarray         # (2,) global concentrations
    cluster: np.ndarray     # (2, N) compound -> plate-local cluster
    component: np.ndarray   # (2, M, H) plate-local cluster -> global component
    underflow: int = 0

    def copy(self) -> "ModelState":
        return replace(self, **{f: getattr(self, f).copy() for f in (
            "b", "nu_local", "w_local", "nu_global", "w_global", "mu", "sigma2",
            "alpha", "tau", "cluster", "component")})


# --- building blocks -------------------------------------------------------


def stick_breaking_weights(nu) -> np.ndarray:
    """Weights ``nu_j * prod_{l<j} (1 - nu_l)`` along the last axis; last stick must be 1."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape[-1] < 1:
        raise ValueError("need at least one stick")
    if np.any(~(nu >= 0) | ~(nu <= 1)):
        raise ValueError("stick proportions must lie in [0, 1]")
    if np.any(nu[..., -1] != 1.0):
        raise ValueError("the final stick must equal 1 under truncation")
    remain = np.cumprod(1.0 - nu[..., :-1], axis=-1)
    lead = np.ones(nu.shape[:-1] + (1,))
    return nu * np.concatenate([lead, remain], axis=-1)


def log_normal_pdf(z, mu, sigma2):
    return -0.5 * (LOG_2PI + np.log(sigma2) + (z - mu) ** 2 / sigma2)


def logsumexp_rows(x) -> np.ndarray:
    """Row-wise log-sum-exp; rows that are entirely ``-inf`` give ``-inf``."""
    m = x.max(axis=-1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(x - safe[..., None]).sum(axis=-1))


def draw_categorical(logits, u) -> np.ndarray:
    """Inverse-CDF categorical draw per row of ``logits`` using uniforms ``u``."""
    m = logits.max(axis=1, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    c = np.cumsum(np.exp(logits - m), axis=1)
    target = u * c[:, -1]
    idx = (c <= target[:, None]).sum(axis=1)
    return np.minimum(idx, logits.shape[1] - 1)


def pi_posterior(b, a_pi: float, b_pi: float) -> tuple[float, float]:
    b = np.asarray(b)
    hits = int(b.sum())
    return a_pi + hits, b_pi + (b.size - hits)


def stick_posterior(counts, concentration):
    """Beta parameters ``(1 + p_j, conc + sum_{l>j} p_l)`` along the last axis."""
    counts = np.asarray(counts, dtype=float)
    tail = np.cumsum(counts[..., ::-1], axis=-1)[..., ::-1] - counts
    conc = np.asarray(concentration, dtype=float)
    return 1.0 + counts, conc[..., None] + tail if conc.ndim else conc + tail


def concentration_posterior(nu, shape0: float, rate0: float) -> tuple[float, float]:
    """Gamma (shape, rate) of a DP concentration given its sticks (last stick excluded)."""
    nu = np.asarray(nu, dtype=float)[..., :-1]
    shape = shape0 + nu.size
    rate = rate0 - np.log1p(-np.minimum(nu, NU_CLAMP)).sum()
    if not rate > 0:
        raise NumericalError(f"non-positive gamma rate {rate}")
    return float(shape), float(rate)


def group_moments(values, groups, n_groups: int):
    """Count, mean and centered sum of squares of ``values`` per group id."""
    n = np.bincount(groups, minlength=n_groups).astype(float)
    s = np.bincount(groups, weights=values, minlength=n_groups)
    mean = np.divide(s, n, out=np.zeros(n_groups), where=n > 0)
    ss = np.bincount(groups, weights=(values - mean[groups]) ** 2, minlength=n_groups)
    return n, mean, ss


def nig_posterior(n, zbar, ss, mu0: float, a: float, b: float, shape_per_obs: float = 0.5):
    """Normal-inverse-gamma posterior ``(location, a_hat, b_hat)``; the mean's
    variance is ``sigma2 / (n + 1)``. Vectorized over components.

    ``a_hat = a + shape_per_obs * n``; 0.5 is the exact conjugate update.
    """
    n = np.asarray(n, dtype=float)
    loc = (mu0 + n * zbar) / (n + 1.0)
    a_hat = a + shape_per_obs * n
    b_hat = b + 0.5 * ss + 0.5 * n / (n + 1.0) * (mu0 - zbar) ** 2
    return loc, a_hat, b_hat


def _blocks(n: int, threads: int):
    if threads <= 1 or n < _PAR_MIN_ROWS:
        return [slice(0, n)]
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [slice(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def _map_blocks(fn, n: int, threads: int, pool=None) -> np.ndarray:
    blocks = _blocks(n, threads)
    if len(blocks) == 1 or pool is None:
        return fn(slice(0, n))
    return np.concatenate(list(pool.map(fn, blocks)))


# --- likelihood pieces -----------------------------------------------------


def compound_cluster_logits(state: ModelState, data: CompoundData, stratum: int, idx=None):
    """``log w[m, h] + log N(z; theta[J[m, h]])`` for compounds ``idx`` -> (n, H)."""
    z = data.z if idx is None else data.z[idx]
    p = data.plate if idx is None else data.plate[idx]
    comp = state.component[stratum]
    mu = state.mu[stratum][comp]
    s2 = state.sigma2[stratum][comp]
    with np.errstate(divide="ignore"):
        base = np.log(state.w_local[stratum]) - 0.5 * (LOG_2PI + np.log(s2))
    inv = 0.5 / s2
    with np.errstate(over="ignore"):
        return base[p] - (z[:, None] - mu[p]) ** 2 * inv[p]


def cluster_component_logits(state: ModelState, data: CompoundData, stratum: int):
    """``log w_k + sum_{i in cluster} log N(z_i; theta_k)`` -> (M, H, K)."""
    M, H = state.component.shape[1:]
    members = state.b == stratum
    gid = data.plate[members] * H + state.cluster[stratum, members]
    n, zbar, ss = group_moments(data.z[members], gid, M * H)
    mu, s2 = state.mu[stratum], state.sigma2[stratum]
    with np.errstate(divide="ignore"):
        logw = np.log(state.w_global[stratum])
    ll = (-0.5 * n[:, None] * (LOG_2PI + np.log(s2))[None, :]
          - (ss[:, None] + n[:, None] * (zbar[:, None] - mu[None, :]) ** 2) / (2.0 * s2[None, :]))
    return (logw[None, :] + ll).reshape(M, H, -1)


def _stratum_terms(state: ModelState, data: CompoundData, idx):
    """Cluster logits of both strata, the hit probabilities and the underflow mask for ``idx``."""
    g1 = compound_cluster_logits(state, data, 1, idx)
    g0 = compound_cluster_logits(state, data, 0, idx)
    l1, l0 = logsumexp_rows(g1), logsumexp_rows(g0)
    with np.errstate(invalid="ignore", over="ignore"):
        lo = math.log(state.pi) - math.log1p(-state.pi) + l1 - l0
        p = 1.0 / (1.0 + np.exp(-lo))
    bad = ~np.isfinite(l1) & ~np.isfinite(l0)
    p[bad] = state.pi
    return g1, g0, p, bad


def hit_probabilities(state: ModelState, data: CompoundData, threads: int = 1, pool=None):
    """Posterior hit probability of every compound and the number of underflowed wells.

    A well where both mixture densities are zero even in log space falls back
    to the prior ``pi``.
    """
    def block(sl):
        _, _, p, bad = _stratum_terms(state, data, np.arange(data.n)[sl])
        return np.stack([p, bad], axis=1)

    out = _map_blocks(block, data.n, threads, pool)
    return out[:, 0].copy(), int(out[:, 1].sum())


def hit_probability(z: float, state: ModelState, plate: int) -> float:
    one = CompoundData(np.array([float(z)]), np.array([plate], np.intp), [], np.zeros(1, np.intp),
                       np.zeros(1, np.intp))
    p, _ = hit_probabilities(state, one)
    return float(p[0])


# --- Gibbs updates -----------------------------------------------------------


def update_hit_indicators(state, data, hp, rng, threads=1, pool=None) -> np.ndarray:
    """Draw every ``b_mi`` with cluster labels summed out, then its cluster label
    in the chosen stratum from the conditional given ``b_mi``.

    The joint draw keeps the labels of compounds that switch stratum
    consistent with the parameters used by the following updates.
    Returns the hit probabilities used.
    """
    ub = rng.random(data.n)
    uj = rng.random(data.n)

    def block(sl):
        idx = np.arange(data.n)[sl]
        g1, g0, p, bad = _stratum_terms(state, data, idx)
        b = ub[sl] < p
        j = draw_categorical(np.where(b[:, None], g1, g0), uj[sl])
        keep = state.cluster[np.where(b, 1, 0), idx]
        return np.stack([p, bad, b, np.where(bad, keep, j)], axis=1)

    out = _map_blocks(block, data.n, threads, pool)
    state.underflow += int(out[:, 1].sum())
    state.b = out[:, 2].astype(np.int8)
    active = state.b == 1
    new = out[:, 3].astype(np.intp)
    state.cluster[1, active] = new[active]
    state.cluster[0, ~active] = new[~active]
    return out[:, 0].copy()


def update_mixture_weight(state, data, hp, rng) -> None:
    a, b = pi_posterior(state.b, hp.a_pi, hp.b_pi)
    state.pi = float(np.clip(rng.beta(a, b), _TINY, _ONE_MINUS))


def component_posterior(state, data, hp, stratum):
    """Posterior ``(loc, a_hat, b_hat)`` for every global component of ``stratum``."""
    K = state.mu.shape[1]
    members = state.b == stratum
    comp = state.component[stratum][data.plate[members], state.cluster[stratum, members]]
    n, zbar, ss = group_moments(data.z[members], comp, K)
    return n, nig_posterior(n, zbar, ss, hp.prior_mean(stratum), hp.a, hp.b, hp.shape_per_obs)


def update_component_params(state, data, hp, stratum, rng) -> None:
    n, (loc, a_hat, b_hat) = component_posterior(state, data, hp, stratum)
    if np.any(~(b_hat > 0)):
        raise NumericalError("non-positive inverse-gamma scale in component update")
    sigma2 = b_hat / rng.gamma(a_hat)
    mu = rng.normal(loc, np.sqrt(sigma2 / (n + 1.0)))
    state.sigma2[stratum] = np.maximum(sigma2, _TINY)
    state.mu[stratum] = mu


def _draw_sticks(a, b, rng) -> np.ndarray:
    nu = np.ones(a.shape)
    nu[..., :-1] = rng.beta(a[..., :-1], b[..., :-1])
    return nu


def local_counts(state, data, stratum) -> np.ndarray:
    M, H = state.component.shape[1:]
    members = state.b == stratum
    gid = data.plate[members] * H + state.cluster[stratum, members]
    return np.bincount(gid, minlength=M * H).reshape(M, H)


def update_local_weights(state, data, hp, stratum, rng) -> None:
    a, b = stick_posterior(local_counts(state, data, stratum), state.alpha[stratum])
    nu = _draw_sticks(a, b, rng)
    state.nu_local[stratum] = nu
    state.w_local[stratum] = stick_breaking_weights(nu)


def global_counts(state, stratum) -> np.ndarray:
    return np.bincount(state.component[stratum].ravel(), minlength=state.mu.shape[1])


def update_global_weights(state, data, hp, stratum, rng) -> None:
    a, b = stick_posterior(global_counts(state, stratum), state.tau[stratum])
    nu = _draw_sticks(a, b, rng)
    state.nu_global[stratum] = nu
    state.w_global[stratum] = stick_breaking_weights(nu)


def update_concentration_local(state, data, hp, stratum, rng) -> None:
    shape, rate = concentration_posterior(state.nu_local[stratum], hp.a_alpha, hp.b_alpha)
    state.alpha[stratum] = max(rng.gamma(shape, 1.0 / rate), _TINY)


def update_concentration_global(state, data, hp, stratum, rng) -> None:
    shape, rate = concentration_posterior(state.nu_global[stratum], hp.a_tau, hp.b_tau)
    state.tau[stratum] = max(rng.gamma(shape, 1.0 / rate), _TINY)


def assign_compounds_to_clusters(state, data, hp, stratum, rng, threads=1, pool=None) -> None:
    idx = np.flatnonzero(state.b == stratum)
    u = rng.random(idx.size)
    if idx.size == 0:
        return

    def block(sl):
        return draw_categorical(compound_cluster_logits(state, data, stratum, idx[sl]), u[sl])

    state.cluster[stratum, idx] = _map_blocks(block, idx.size, threads, pool)


def assign_clusters_to_components(state, data, hp, stratum, rng) -> None:
    logits = cluster_component_logits(state, data, stratum)
    M, H, K = logits.shape
    u = rng.random(M * H)
    state.component[stratum] = draw_categorical(logits.reshape(M * H, K), u).reshape(M, H)


def gibbs_step(state: ModelState, data: CompoundData, hp: Hyperparameters, rng,
               threads: int = 1, pool=None) -> np.ndarray:
    """One full sweep; returns the hit probabilities used for the indicator draw.

    Those probabilities are evaluated on the state the sweep started from.
    """
    phat = update_hit_indicators(state, data, hp, rng, threads, pool)
    update_mixture_weight(state, data, hp, rng)
    for s in (1, 0):
        update_component_params(state, data, hp, s, rng)
    for s in (1, 0):
        update_local_weights(state, data, hp, s, rng)
    for s in (1, 0):
        update_global_weights(state, data, hp, s, rng)
    for s in (1, 0):
        update_concentration_local(state, data, hp, s, rng)
    for s in (1, 0):
        update_concentration_global(state, data, hp, s, rng)
    for s in (1, 0):
        assign_compounds_to_clusters(state, data, hp, s, rng, threads, pool)
    for s in (1, 0):
        assign_clusters_to_components(state, data, hp, s, rng)
    return phat


def init_state(data: CompoundData, hp: Hyperparameters, rng, mode: str = "prior") -> ModelState:
    """Starting state; concentrations start at their prior means.

    ``mode="prior"`` draws indicators, sticks and components from the prior.
    ``mode="data"`` instead marks a readout active when it lies nearer to
    ``mu10`` than to ``mu00``, starts ``pi`` at the resulting active share and
    draws component parameters from their conditional posterior under that
    split, so neither stratum starts out covering the other's readouts.
    """
    M, N, H, K = data.n_plates, data.n, hp.H, hp.K
    pi = hp.a_pi / (hp.a_pi + hp.b_pi)
    b = (rng.random(N) < pi).astype(np.int8)
    alpha = np.full(2, hp.a_alpha / hp.b_alpha)
    tau = np.full(2, hp.a_tau / hp.b_tau)
    nu_local = _draw_sticks(np.ones((2, M, H)), np.broadcast_to(alpha[:, None, None], (2, M, H)), rng)
    nu_global = _draw_sticks(np.ones((2, K)), np.broadcast_to(tau[:, None], (2, K)), rng)
    sigma2 = hp.b / rng.gamma(np.full((2, K), hp.a))
    mu0 = np.array([[hp.mu00], [hp.mu10]])
    mu = rng.normal(np.broadcast_to(mu0, (2, K)), np.sqrt(sigma2))
    cluster = rng.integers(0, H, size=(2, N))
    component = rng.integers(0, K, size=(2, M, H))
    state = ModelState(
        pi=float(pi), b=b, nu_local=nu_local, w_local=stick_breaking_weights(nu_local),
        nu_global=nu_global, w_global=stick_breaking_weights(nu_global), mu=mu,
        sigma2=sigma2, alpha=alpha, tau=tau, cluster=cluster.astype(np.intp),
        component=component.astype(np.intp),
    )
    if mode == "data":
        state.b = (np.abs(data.z - hp.mu10) < np.abs(data.z - hp.mu00)).astype(np.int8)
        state.pi = float(np.clip(state.b.mean(), 1.0 / (N + 1), N / (N + 1.0)))
        for s in (1, 0):
            update_component_params(state, data, hp, s, rng)
    elif mode != "prior":
        raise ValidationError(f"unknown init mode {mode!r}")
    return state


def check_state(state: ModelState, data: CompoundData, hp: Hyperparameters, atol=1e-12) -> None:
    """Raise AssertionError when any ModelState invariant is violated."""
    M, N, H, K = data.n_plates, data.n, hp.H, hp.K
    assert 0.0 < state.pi < 1.0, f"pi out of range: {state.pi}"
    assert state.b.shape == (N,) and set(np.unique(state.b)) <= {0, 1}
    for w, shape in ((state.w_local, (2, M, H)), (state.w_global, (2, K))):
        assert w.shape == shape
        assert np.all(w >= 0), "negative stick weight"
        assert np.all(np.abs(w.sum(axis=-1) - 1.0) <= atol), "stick weights do not sum to 1"
    assert np.all(state.nu_local[..., -1] == 1.0) and np.all(state.nu_global[..., -1] == 1.0)
    assert state.mu.shape == (2, K) and np.all(np.isfinite(state.mu))
    assert np.all(state.sigma2 > 0) and np.all(np.isfinite(state.sigma2))
    assert np.all(state.alpha > 0) and np.all(state.tau > 0)
    assert state.cluster.shape == (2, N) and state.cluster.min() >= 0 and state.cluster.max() < H
    assert state.component.shape == (2, M, H)
    assert state.component.min() >= 0 and state.component.max() < K


# --- chain driver ------------------------------------------------------------


@dataclass
class ChainResult:
    hyperparameters: Hyperparameters
    config: ChainConfig
    data: CompoundData
    posterior: np.ndarray               # mean hit probability per compound
    n_kept: int
    means: dict                         # posterior means of global quantities
    traces: dict | None = None          # name -> (n_kept, ...) array
    kept_iterations: np.ndarray | None = None
    underflow: int = 0
    extra: dict = field(default_factory=dict)


_TRACE_KEYS = ("pi", "alpha", "tau", "mu", "sigma2", "weights")


def _snapshot(state: ModelState, mode: str) -> dict:
    mu, s2, w = sort_component_draw(state.mu, state.sigma2, state.w_global, mode)
    return {"pi": state.pi, "alpha": state.alpha.copy(), "tau": state.tau.copy(),
            "mu": mu, "sigma2": s2, "weights": w}


def run_chain(campaign, hp: Hyperparameters, cfg: ChainConfig, threads: int = 1,
              callback=None, state: ModelState | None = None) -> ChainResult:
    """Run ``cfg.n_iter`` sweeps and average hit probabilities over kept sweeps.

    The probability credited to sweep ``t`` is evaluated on the state at the
    end of that sweep (it is the one the next sweep's indicator update uses).
    ``callback(t, state)`` is invoked after every sweep.
    """
    data = campaign if isinstance(campaign, CompoundData) else CompoundData.from_campaign(campaign)
    if not isinstance(cfg, ChainConfig):
        raise ValidationError("cfg must be a ChainConfig")
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    if state is None:
        state = init_state(data, hp, rng, cfg.init)
    n_kept = cfg.n_kept
    post_sum = np.zeros(data.n)
    mean_sum = {k: 0.0 for k in _TRACE_KEYS}
    traces = {k: [] for k in _TRACE_KEYS} if cfg.record_traces else None
    kept_iters = []
    pending = False

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for t in range(cfg.n_iter):
            phat = gibbs_step(state, data, hp, rng, threads, pool)
            if pending:
                post_sum += phat
            pending = cfg.kept(t)
            if pending:
                kept_iters.append(t + 1)
                snap = _snapshot(state, cfg.label_sort if cfg.label_sort != "none" else "paired")
                for k in _TRACE_KEYS:
                    mean_sum[k] = mean_sum[k] + snap[k]
                if traces is not None:
                    rec = _snapshot(state, cfg.label_sort) if cfg.label_sort == "none" else snap
                    for k in _TRACE_KEYS:
                        traces[k].append(rec[k])
            if callback is not None:
                callback(t, state)
        if pending:
            phat, bad = hit_probabilities(state, data, threads, pool)
            state.underflow += bad
            post_sum += phat
    finally:
        if pool is not None:
            pool.shutdown()

    assert len(kept_iters) == n_kept
    means = {k: (np.asarray(v) / n_kept) for k, v in mean_sum.items()}
    means["pi"] = float(means["pi"])
    if traces is not None:
        traces = {k: np.asarray(v) for k, v in traces.items()}
    return ChainResult(hp, cfg, data, post_sum / n_kept, n_kept, means, traces,
                       np.array(kept_iters), state.underflow, {"final_state": state})
