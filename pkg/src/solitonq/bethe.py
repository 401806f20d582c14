"""Bethe-ansatz amplitudes, energies and normalization for the two-mode soliton.

Mode-U photons sit at ``xs`` and mode-V photons at ``ys``; the flattened view
``zs`` lists the xs first. All amplitudes are carried as log-modulus plus
phase so that N of a few dozen does not overflow the (N-1)! in the norm.
"""
from dataclasses import dataclass
import cmath
import math

import numpy as np

from .model import SolitonParams, eigenstate_valid


class NormalizationUnknownError(ValueError):
    pass


@dataclass(frozen=True)
class Configuration:
    xs: tuple
    ys: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(float(x) for x in self.xs))
        object.__setattr__(self, "ys", tuple(float(y) for y in self.ys))

    @classmethod
    def from_flat(cls, zs, n):
        zs = list(zs)
        return cls(zs[:n], zs[n:])

    @property
    def zs(self) -> np.ndarray:
        return np.array(self.xs + self.ys, dtype=np.float64)

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def m(self) -> int:
        return len(self.ys)

    def check(self, params: SolitonParams):
        if self.n != params.n or self.m != params.m:
            raise ValueError(f"configuration has (n, m) = ({self.n}, {self.m}), "
                             f"params expect ({params.n}, {params.m})")


@dataclass(frozen=True)
class AmplitudeValue:
    log_modulus: float
    phase: float
    eigenstate: bool = True

    @property
    def value(self) -> complex:
        if self.log_modulus == -math.inf:
            return 0j
        return cmath.exp(complex(self.log_modulus, self.phase))

    def __abs__(self):
        return math.exp(self.log_modulus)


@dataclass(frozen=True)
class PulseCenterState:
    """Average-momentum spread, accumulated dispersion (integral of b dt) and N."""

    dp: float
    phase_accum: float = 0.0
    N: int = 2

    def __post_init__(self):
        if not self.dp > 0:
            raise ValueError("dp must be positive")

    @property
    def dz2(self) -> float:
        """Variance of sum(z)."""
        return 1.0 / (4.0 * self.dp ** 2) + 4.0 * (self.N * self.dp * self.phase_accum) ** 2

    @property
    def width_factor(self) -> complex:
        # 1 + 4 i b N dp^2 t, with b t replaced by the accumulated phase
        return complex(1.0, 4.0 * self.N * self.dp ** 2 * self.phase_accum)

    def advanced(self, dphase):
        return PulseCenterState(self.dp, self.phase_accum + dphase, self.N)


def coupling_matrix(n, m, B):
    """kappa_ij: 1 within a mode, B across modes, 0 on the diagonal."""
    N = n + m
    mode = np.arange(N) >= n
    K = np.where(mode[:, None] == mode[None, :], 1.0, float(B))
    np.fill_diagonal(K, 0.0)
    return K


def pairwise_potential(config: Configuration, B: float) -> float:
    xs, ys = config.xs, config.ys
    s = 0.0
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            s += abs(xs[j] - xs[i])
    for l in range(len(ys)):
        for k in range(l + 1, len(ys)):
            s += abs(ys[k] - ys[l])
    cross = 0.0
    for x in xs:
        for y in ys:
            cross += abs(x - y)
    return s + B * cross


def _log_scalar_norm(N, ratio):
    # log of [(N-1)! ratio^(N-1) / (2 pi)]^(1/2); an empty mode contributes 1
    if N == 0:
        return 0.0
    if ratio == 0:
        return 0.0 if N == 1 else -math.inf
    return 0.5 * (math.lgamma(N) + (N - 1) * math.log(ratio) - math.log(2.0 * math.pi))


def log_norm_constant(params: SolitonParams) -> float:
    if params.b == 0:
        raise ValueError("b = 0")
    ratio = abs(params.c / params.b)
    if params.B == 1:
        return _log_scalar_norm(params.N, ratio)
    if params.B == 0:
        return _log_scalar_norm(params.n, ratio) + _log_scalar_norm(params.m, ratio)
    raise NormalizationUnknownError(f"normalization unknown for B = {params.B}")


def norm_constant(params: SolitonParams) -> float:
    """C_nm for the Manakov case, and the product of scalar constants for B = 0."""
    return math.exp(log_norm_constant(params))


def energy(params: SolitonParams, p: float = 0.0) -> float:
    if not eigenstate_valid(params.B):
        raise ValueError(f"no energy formula for B = {params.B}: the ansatz is not an eigenstate")
    b, c, B, n, m = params.b, params.c, params.B, params.n, params.m
    bracket = n * (n * n - 1) + m * (m * m - 1) + 3 * B * B * n * m * (n + m)
    return b * params.N * p * p - c * c / (12.0 * b) * bracket


def _log_prefactor(params):
    # Non-eigenstate B has no normalization; report the bare exponential.
    if eigenstate_valid(params.B):
        return log_norm_constant(params)
    return 0.0


def eval_eigenamplitude(config: Configuration, params: SolitonParams, p: float = 0.0) -> AmplitudeValue:
    if params.b == 0:
        raise ValueError("b = 0")
    config.check(params)
    S = pairwise_potential(config, params.B)
    logC = _log_prefactor(params)
    log_mod = logC + params.c / (2.0 * params.b) * S
    phase = p * float(np.sum(config.zs))
    return AmplitudeValue(log_mod, phase, eigenstate_valid(params.B))


def eval_time_amplitude(config: Configuration, params: SolitonParams,
                        state: PulseCenterState) -> AmplitudeValue:
    """Gaussian pulse-center factor times the bound-state exponential."""
    if params.b == 0:
        raise ValueError("b = 0")
    config.check(params)
    a = state.width_factor
    total = float(np.sum(config.zs))
    inv_a = 1.0 / a
    expo = -state.dp ** 2 * inv_a * total ** 2
    S = pairwise_potential(config, params.B)
    log_mod = (_log_prefactor(params) + 0.25 * math.log(8.0 * math.pi)
               + 0.5 * math.log(state.dp) - 0.5 * math.log(abs(a))
               + expo.real + params.c / (2.0 * params.b) * S)
    phase = -0.5 * cmath.phase(a) + expo.imag
    return AmplitudeValue(log_mod, phase, eigenstate_valid(params.B))


def sign_sums(zs, n, B):
    """g_j = sum_i kappa_ij sign(z_j - z_i) for one config or a batch (..., N).

    Exact ties are broken as if the later-indexed coordinate sat one ulp higher.
    """
    Z = np.asarray(zs, dtype=np.float64)
    N = Z.shape[-1]
    K = coupling_matrix(n, N - n, B)
    g = np.zeros(Z.shape)
    for j in range(N):
        for i in range(N):
            if i == j:
                continue
            d = Z[..., j] - Z[..., i]
            s = np.sign(d)
            s = np.where(d == 0, 1.0 if j > i else -1.0, s)
            g[..., j] += K[i, j] * s
    return g


def logdensity_gradient(config: Configuration, params: SolitonParams,
                        state: PulseCenterState) -> np.ndarray:
    """Gradient of log|f|^2 for the time-dependent amplitude."""
    config.check(params)
    zs = config.zs
    w = (1.0 / state.width_factor).real
    gauss = -4.0 * state.dp ** 2 * w * zs.sum()
    return gauss + params.c / params.b * sign_sums(zs, params.n, params.B)
