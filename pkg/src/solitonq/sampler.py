"""Metropolis estimates of photon-position and momentum statistics at t = 0.

The target density is |f_nm|^2 = exp[-2 dp^2 (sum z)^2 + (c/b) S(z)] with S the
B-weighted sum of pairwise distances. Each chain owns a PCG64 stream spawned
from the run seed, and chains are merged in index order, so estimates do not
depend on how many worker threads ran them.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
import math
from typing import Optional

import numpy as np

from . import _accel, kernels
from .bethe import PulseCenterState, sign_sums
from .model import SolitonParams, shot_noise_dp

TUNE_BLOCK = 100
CHUNK = 1 << 16
TARGET_ACCEPT = 0.4
ACCEPT_RANGE = (0.15, 0.7)
MIN_ESS = 1000.0


class SamplerError(RuntimeError):
    pass


class SamplerDiagnosticError(SamplerError):
    pass


class InsufficientSamplingError(SamplerError):
    pass


class QConvergenceError(SamplerError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    samples_per_chain: int = 250_000
    burn_in: int = 25_000
    proposal_stddev: Optional[float] = None  # default: W0
    seed: int = 0
    tune: bool = True

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("need at least 2 chains")
        if self.samples_per_chain < 1:
            raise ValueError("samples_per_chain must be positive")
        if self.burn_in < 0.1 * self.samples_per_chain:
            raise ValueError("burn_in must be at least 10% of samples_per_chain")
        if self.proposal_stddev is not None and not self.proposal_stddev > 0:
            raise ValueError("proposal_stddev must be positive")


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    ess: float

    def __iter__(self):
        return iter((self.value, self.se))

    def as_dict(self):
        return {"value": self.value, "se": self.se, "ess": self.ess}


# ---------------------------------------------------------------- diagnostics

def _autocov(x):
    """Per-row autocovariance (biased, lag 0..S-1) via FFT."""
    S = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    nfft = 1 << (2 * S - 1).bit_length()
    F = np.fft.rfft(xc, nfft, axis=-1)
    return np.fft.irfft(F * np.conj(F), nfft, axis=-1)[..., :S] / S


def effective_sample_size(x):
    """Multi-chain ESS with Geyer's initial positive (monotone) sequence.

    x has shape (chains, samples). A constant series returns chains*samples.
    """
    x = np.asarray(x, dtype=np.float64)
    C, S = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * S / (S - 1)
    W = chain_var.mean()
    var_plus = W * (S - 1) / S
    if C > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float(C * S), 0.0
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = math.inf
    for k in range(0, S - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    tau = max(tau, 1.0 / math.log10(C * S) if C * S > 10 else 1.0)
    return float(C * S / tau), float(var_plus)


def estimate_mean(series):
    series = np.asarray(series, dtype=np.float64)
    ess, var = effective_sample_size(series)
    return Estimate(float(series.mean()), math.sqrt(var / ess), ess)


# ---------------------------------------------------------------- chain driver

@dataclass
class ChainSamples:
    samples: np.ndarray  # (chains, samples_per_chain, N)
    acceptance: np.ndarray  # per chain, post burn-in
    scales: np.ndarray  # frozen proposal scale per chain


def _target_args(params, state):
    return params.n, float(params.B), 2.0 * state.dp ** 2, params.c / params.b


def _draw(rng, k, N):
    noise = rng.standard_normal((k, N))
    logu = np.log(rng.random(k))
    return noise, logu


def _tune(scale, accepted, k):
    return scale * math.exp(2.0 * (accepted / k - TARGET_ACCEPT))


def _run_one_chain(seed_seq, params, state, mcmc, scale0, width):
    N = params.N
    targs = _target_args(params, state)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    z = rng.normal(0.0, width, N)
    logp = kernels.log_target(z, *targs)
    scale = scale0
    done = 0
    while done < mcmc.burn_in:
        k = min(TUNE_BLOCK, mcmc.burn_in - done)
        noise, logu = _draw(rng, k, N)
        logp, acc, _ = kernels.rw_block_chain(z, logp, noise, logu, scale, *targs, record=False)
        if mcmc.tune:
            scale = _tune(scale, acc, k)
        done += k
    out = np.empty((mcmc.samples_per_chain, N))
    accepted = 0
    done = 0
    while done < mcmc.samples_per_chain:
        k = min(CHUNK, mcmc.samples_per_chain - done)
        noise, logu = _draw(rng, k, N)
        logp, acc, block = kernels.rw_block_chain(z, logp, noise, logu, scale, *targs, record=True)
        out[done:done + k] = block
        accepted += acc
        done += k
    return out, accepted / mcmc.samples_per_chain, scale


def _run_lockstep(seed_seqs, params, state, mcmc, scale0, width):
    C, N = len(seed_seqs), params.N
    targs = _target_args(params, state)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seed_seqs]
    Z = np.stack([r.normal(0.0, width, N) for r in rngs])
    logp = kernels.log_target(Z, *targs)
    scale = np.full(C, scale0)

    def draws(k):
        pairs = [_draw(r, k, N) for r in rngs]
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])

    done = 0
    while done < mcmc.burn_in:
        k = min(TUNE_BLOCK, mcmc.burn_in - done)
        noise, logu = draws(k)
        logp, acc, _ = kernels.rw_block_lockstep(Z, logp, noise, logu, scale, *targs, record=False)
        if mcmc.tune:
            scale = np.array([_tune(s, a, k) for s, a in zip(scale, acc)])
        done += k
    out = np.empty((C, mcmc.samples_per_chain, N))
    accepted = np.zeros(C)
    done = 0
    while done < mcmc.samples_per_chain:
        k = min(CHUNK, mcmc.samples_per_chain - done)
        noise, logu = draws(k)
        logp, acc, block = kernels.rw_block_lockstep(Z, logp, noise, logu, scale, *targs, record=True)
        out[:, done:done + k] = block
        accepted += acc
        done += k
    return out, accepted / mcmc.samples_per_chain, scale


def run_chains(params: SolitonParams, state: PulseCenterState, mcmc: McmcConfig,
               workers: Optional[int] = None) -> ChainSamples:
    params.require_bound()
    if params.N < 2:
        raise ValueError("sampling needs N >= 2")
    if state.phase_accum != 0:
        raise ValueError("sampling is defined only at t = 0 (phase_accum = 0)")
    if state.N != params.N:
        raise ValueError("state.N does not match params")
    width = abs(2.0 * params.b / (params.N * params.c))
    scale0 = mcmc.proposal_stddev if mcmc.proposal_stddev is not None else width
    seeds = np.random.SeedSequence(mcmc.seed).spawn(mcmc.chains)
    if _accel.use_numba():
        workers = workers or _accel.worker_count()
        args = (params, state, mcmc, scale0, width)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda s: _run_one_chain(s, *args), seeds))
        else:
            results = [_run_one_chain(s, *args) for s in seeds]
        samples = np.stack([r[0] for r in results])
        acceptance = np.array([r[1] for r in results])
        scales = np.array([r[2] for r in results])
    else:
        samples, acceptance, scales = _run_lockstep(seeds, params, state, mcmc, scale0, width)
    return ChainSamples(samples, acceptance, scales)


# ---------------------------------------------------------------- moments

@dataclass
class MomentEstimates:
    mean_abs_distance: Estimate
    mean_sq_distance: Estimate
    q: Estimate
    var_sum: Estimate
    cov_same: Estimate
    cov_cross: Estimate
    pair_cov: np.ndarray  # <z_i z_j>, (N, N)
    pair_cov_se: np.ndarray
    p_minus_var: Optional[Estimate]
    x_plus_y_half_sq: Optional[Estimate]
    x_minus_y_half_sq: Optional[Estimate]
    ess: float
    acceptance_rate: float
    n_samples: int
    dp: float
    exploratory: bool
    identity_gap: float = 0.0  # max |var_sum - N cov_same - N(N-1) cov_cross| per sample

    def scalars(self):
        out = {
            "mean_abs_distance": self.mean_abs_distance,
            "mean_sq_distance": self.mean_sq_distance,
            "q": self.q,
            "var_sum": self.var_sum,
            "cov_same": self.cov_same,
            "cov_cross": self.cov_cross,
        }
        for k in ("p_minus_var", "x_plus_y_half_sq", "x_minus_y_half_sq"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out


def _pairs(N):
    return list(combinations(range(N), 2))


def moments_from_samples(chains: ChainSamples, params: SolitonParams,
                         state: PulseCenterState) -> MomentEstimates:
    Z = chains.samples
    C, S, N = Z.shape
    pairs = _pairs(N)
    pair_w = 2.0 / (N * (N - 1))

    absd = np.zeros((C, S))
    sqd = np.zeros((C, S))
    cross = np.zeros((C, S))
    for i, j in pairs:
        d = Z[..., j] - Z[..., i]
        absd += np.abs(d)
        sqd += d * d
        cross += Z[..., i] * Z[..., j]
    absd *= pair_w
    sqd *= pair_w
    cross *= pair_w
    same = np.mean(Z * Z, axis=-1)
    total = Z.sum(axis=-1)
    vsum = total * total
    identity_gap = float(np.max(np.abs(vsum - N * same - N * (N - 1) * cross)))

    m1 = estimate_mean(absd)
    m2 = estimate_mean(sqd)
    q_val = m2.value / m1.value ** 2
    lin = sqd / m1.value ** 2 - 2.0 * m2.value * absd / m1.value ** 3
    q_lin = estimate_mean(lin)
    q = Estimate(q_val, q_lin.se, q_lin.ess)

    est_vsum = estimate_mean(vsum)
    est_same = estimate_mean(same)
    est_cross = estimate_mean(cross)

    pair_cov = np.zeros((N, N))
    pair_se = np.zeros((N, N))
    for i in range(N):
        for j in range(i, N):
            e = estimate_mean(Z[..., i] * Z[..., j])
            pair_cov[i, j] = pair_cov[j, i] = e.value
            pair_se[i, j] = pair_se[j, i] = e.se

    n, m = params.n, params.m
    pm = xpy = xmy = None
    if n > 0 and m > 0:
        X = Z[..., :n].mean(axis=-1)
        Y = Z[..., n:].mean(axis=-1)
        xpy = estimate_mean(((X + Y) / 2.0) ** 2)
        xmy = estimate_mean(((X - Y) / 2.0) ** 2)
        v = np.concatenate([np.ones(n), -np.ones(m)])
        pm = _momentum_from_samples(Z, params, state, v)

    main = (m1, q, est_vsum, est_same, est_cross)
    ess = min(e.ess for e in main)
    return MomentEstimates(
        mean_abs_distance=m1, mean_sq_distance=m2, q=q, var_sum=est_vsum,
        cov_same=est_same, cov_cross=est_cross, pair_cov=pair_cov, pair_cov_se=pair_se,
        p_minus_var=pm, x_plus_y_half_sq=xpy, x_minus_y_half_sq=xmy, ess=ess,
        acceptance_rate=float(chains.acceptance.mean()), n_samples=C * S, dp=state.dp,
        exploratory=params.B != 1, identity_gap=identity_gap,
    )


def _check_diagnostics(chains: ChainSamples, est: MomentEstimates):
    lo, hi = ACCEPT_RANGE
    bad = [a for a in chains.acceptance if not lo <= a <= hi]
    if bad:
        raise SamplerDiagnosticError(
            f"acceptance {bad[0]:.3f} outside [{lo}, {hi}] after tuning")
    if est.ess < MIN_ESS:
        raise InsufficientSamplingError(f"insufficient sampling: ESS {est.ess:.0f} < {MIN_ESS:.0f}")


def sample_positions(params: SolitonParams, state: PulseCenterState, mcmc: McmcConfig,
                     workers: Optional[int] = None) -> MomentEstimates:
    chains = run_chains(params, state, mcmc, workers)
    est = moments_from_samples(chains, params, state)
    _check_diagnostics(chains, est)
    return est


# ---------------------------------------------------------------- q fixed point

@dataclass
class QEstimate:
    q: Estimate
    dp: float
    trace: list = field(default_factory=list)  # (q, se, dp) per iteration
    moments: Optional[MomentEstimates] = None
    scaling: Optional[dict] = None

    @property
    def value(self):
        return self.q.value

    @property
    def se(self):
        return self.q.se


def estimate_q(params: SolitonParams, mcmc: McmcConfig, tol: float = 1e-3,
               max_iter: int = 10, scaling_pair=None, workers: Optional[int] = None) -> QEstimate:
    """q(N) = <r^2>/<|r|>^2 with dp set self-consistently by the shot-noise condition.

    Starts from q = 2 and stops when successive estimates agree within
    max(tol, 3 combined standard errors). ``scaling_pair`` = (b, c) reruns the
    final iteration at another dispersion/nonlinearity pair with equal N.
    """
    if params.B != 1:
        raise ValueError("q(N) has an exact theory only for B = 1")
    q_prev, se_prev = 2.0, 0.0
    trace = []
    est = None
    for k in range(max_iter):
        dp = shot_noise_dp(params, q_prev)
        state = PulseCenterState(dp, 0.0, params.N)
        est = sample_positions(params, state, replace(mcmc, seed=mcmc.seed + 7919 * k), workers)
        q_new, se_new = est.q.value, est.q.se
        trace.append((q_new, se_new, dp))
        if k > 0 and abs(q_new - q_prev) <= max(tol, 3.0 * math.hypot(se_new, se_prev)):
            result = QEstimate(est.q, dp, trace, est)
            break
        q_prev, se_prev = q_new, se_new
    else:
        raise QConvergenceError(f"q did not converge in {max_iter} iterations", trace)

    if scaling_pair is not None:
        b2, c2 = scaling_pair
        p2 = replace(params, b=b2, c=c2)
        dp2 = shot_noise_dp(p2, result.q.value)
        other = sample_positions(p2, PulseCenterState(dp2, 0.0, p2.N),
                                 replace(mcmc, seed=mcmc.seed + 104729), workers)
        combined = math.hypot(result.q.se, other.q.se)
        result.scaling = {
            "b": b2, "c": c2, "q": other.q.value, "se": other.q.se,
            "agree": abs(other.q.value - result.q.value) <= 3.0 * combined,
        }
    return result


# ---------------------------------------------------------------- momentum

def _momentum_from_samples(Z, params, state, v):
    """<(v.P)^2> = (sum v)^2 dp^2 + (c/2b)^2 E[(v_rel . g)^2] at t = 0.

    The centre-of-mass part is exact; only the relative part is sampled.
    """
    v = np.asarray(v, dtype=np.float64)
    com = float(v.sum()) ** 2 * state.dp ** 2
    v_rel = v - v.mean()
    if not np.any(v_rel):
        return Estimate(com, 0.0, float(Z.shape[0] * Z.shape[1]))
    g = sign_sums(Z, params.n, params.B)
    proj = g @ v_rel
    rel = estimate_mean(proj * proj)
    k = (params.c / (2.0 * params.b)) ** 2
    return Estimate(com + k * rel.value, k * rel.se, rel.ess)


def momentum_quadratics(params: SolitonParams, state: PulseCenterState, mcmc: McmcConfig,
                        direction, workers: Optional[int] = None) -> Estimate:
    """Quadratic momentum moment <(v.P)^2> along ``direction`` via the score identity."""
    v = np.asarray(direction, dtype=np.float64)
    if v.shape != (params.N,):
        raise ValueError(f"direction must have length {params.N}")
    if state.phase_accum != 0:
        raise ValueError("momentum estimator needs a real wavefunction (t = 0)")
    if not np.any(v - v.mean()):
        return Estimate(float(v.sum()) ** 2 * state.dp ** 2, 0.0, math.inf)
    chains = run_chains(params, state, mcmc, workers)
    lo, hi = ACCEPT_RANGE
    if not all(lo <= a <= hi for a in chains.acceptance):
        raise SamplerDiagnosticError("acceptance outside range after tuning")
    return _momentum_from_samples(chains.samples, params, state, v)
