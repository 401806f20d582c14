"""Hot inner loops: Metropolis blocks and the grid Hamiltonian apply.

Each kernel exists twice, a numba loop and a numpy version, and the public
wrappers dispatch on ``_accel.use_numba()``. Both versions accumulate in the
same order, so they give identical results for identical inputs.
"""
import numpy as np

from . import _accel
from ._accel import jit


# ---------------------------------------------------------------- MCMC target

@jit
def _log_target_nb(z, n, B, two_dp2, c_over_b):
    N = z.shape[0]
    tot = 0.0
    s = 0.0
    for i in range(N):
        tot += z[i]
    for i in range(N):
        for j in range(i + 1, N):
            d = abs(z[j] - z[i])
            if (i < n) == (j < n):
                s += d
            else:
                s += B * d
    return -two_dp2 * tot * tot + c_over_b * s


def _log_target_np(Z, n, B, two_dp2, c_over_b):
    # Z: (..., N); loops over coordinates to keep numba's summation order.
    N = Z.shape[-1]
    tot = np.zeros(Z.shape[:-1])
    s = np.zeros(Z.shape[:-1])
    for i in range(N):
        tot += Z[..., i]
    for i in range(N):
        for j in range(i + 1, N):
            d = np.abs(Z[..., j] - Z[..., i])
            if (i < n) == (j < n):
                s += d
            else:
                s += B * d
    return -two_dp2 * tot * tot + c_over_b * s


def log_target(Z, n, B, two_dp2, c_over_b):
    """log of exp[-2 dp^2 (sum z)^2 + (c/b) S(z)] for one or many configs."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1 and _accel.use_numba():
        return float(_log_target_nb(Z, n, float(B), float(two_dp2), float(c_over_b)))
    return _log_target_np(Z, n, B, two_dp2, c_over_b)


@jit
def _rw_block_nb(z, logp, noise, logu, scale, n, B, two_dp2, c_over_b, out):
    steps, N = noise.shape
    record = out.shape[0] > 0
    prop = np.empty(N)
    accepted = 0
    for t in range(steps):
        for k in range(N):
            prop[k] = z[k] + scale * noise[t, k]
        lp = _log_target_nb(prop, n, B, two_dp2, c_over_b)
        if logu[t] < lp - logp:
            for k in range(N):
                z[k] = prop[k]
            logp = lp
            accepted += 1
        if record:
            for k in range(N):
                out[t, k] = z[k]
    return logp, accepted


def rw_block_chain(z, logp, noise, logu, scale, n, B, two_dp2, c_over_b, record):
    """Advance one chain in place by ``len(noise)`` random-walk Metropolis steps.

    Returns (logp, accepted, samples) where samples is None unless ``record``.
    """
    steps, N = noise.shape
    out = np.empty((steps if record else 0, N))
    logp, acc = _rw_block_nb(z, float(logp), noise, logu, float(scale), n, float(B),
                             float(two_dp2), float(c_over_b), out)
    return logp, int(acc), (out if record else None)


def rw_block_lockstep(Z, logp, noise, logu, scale, n, B, two_dp2, c_over_b, record):
    """Numpy twin of :func:`rw_block_chain`, advancing all chains together.

    Z: (C, N) updated in place; logp: (C,) updated in place; noise: (C, steps, N);
    logu: (C, steps); scale: (C,).
    """
    C, steps, N = noise.shape
    out = np.empty((C, steps, N)) if record else None
    accepted = np.zeros(C, dtype=np.int64)
    sc = scale[:, None]
    for t in range(steps):
        prop = Z + sc * noise[:, t, :]
        lp = _log_target_np(prop, n, B, two_dp2, c_over_b)
        acc = logu[:, t] < lp - logp
        Z[acc] = prop[acc]
        logp[acc] = lp[acc]
        accepted += acc
        if record:
            out[:, t, :] = Z
    return logp, accepted, out


# ------------------------------------------------------------ grid Hamiltonian

@jit(parallel=False)
def _apply_h_nb(f, out, nax, kin, delta):
    # f, out: 3-d arrays; only the first ``nax`` axes are physical.
    M0, M1, M2 = f.shape
    for i in range(M0):
        for j in range(M1):
            for k in range(M2):
                c0 = f[i, j, k]
                lap = -2.0 * c0
                if i < M0 - 1:
                    lap += f[i + 1, j, k]
                if i > 0:
                    lap += f[i - 1, j, k]
                if nax > 1:
                    lap -= 2.0 * c0
                    if j < M1 - 1:
                        lap += f[i, j + 1, k]
                    if j > 0:
                        lap += f[i, j - 1, k]
                if nax > 2:
                    lap -= 2.0 * c0
                    if k < M2 - 1:
                        lap += f[i, j, k + 1]
                    if k > 0:
                        lap += f[i, j, k - 1]
                pot = 0.0
                if nax > 1 and i == j:
                    pot += delta[0, 1]
                if nax > 2:
                    if i == k:
                        pot += delta[0, 2]
                    if j == k:
                        pot += delta[1, 2]
                out[i, j, k] = kin * lap + pot * c0


def _apply_h_np(f, nax, kin, delta):
    lap = np.zeros_like(f)
    for ax in range(nax):
        lap -= 2.0 * f
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lap[tuple(lo)] += f[tuple(hi)]
        lap[tuple(hi)] += f[tuple(lo)]
    out = kin * lap
    pot = np.zeros(f.shape)
    M = f.shape[0]
    idx = np.arange(M)
    for a in range(nax):
        for b in range(a + 1, nax):
            if delta[a, b] == 0.0:
                continue
            sel = [slice(None)] * 3
            sel[a] = idx
            sel[b] = idx
            # advanced indexing on two axes selects their diagonal
            view = pot[tuple(sel)]
            pot[tuple(sel)] = view + delta[a, b]
    return out + pot * f


def apply_hamiltonian(f, nax, kin, delta):
    """Matrix-free H f on a Dirichlet box.

    ``kin`` is -b/dz^2 and ``delta[a, b]`` the on-diagonal coefficient
    2 c kappa_ab / dz for axes a < b. ``f`` has ``nax`` physical axes.
    """
    f = np.asarray(f)
    shape = f.shape
    f3 = f.reshape(shape + (1,) * (3 - f.ndim))
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    if _accel.use_numba():
        out = np.empty_like(f3)
        _apply_h_nb(np.ascontiguousarray(f3), out, nax, float(kin), delta)
    else:
        out = _apply_h_np(f3, nax, float(kin), delta)
    return out.reshape(shape)


# ------------------------------------------------------ split-step nonlinearity

@jit
def _kerr_step_nb(u, v, g, B):
    for i in range(u.shape[0]):
        iu = u[i].real * u[i].real + u[i].imag * u[i].imag
        iv = v[i].real * v[i].real + v[i].imag * v[i].imag
        pu = -g * (iu + B * iv)
        pv = -g * (iv + B * iu)
        u[i] = u[i] * complex(np.cos(pu), np.sin(pu))
        v[i] = v[i] * complex(np.cos(pv), np.sin(pv))


def _kerr_step_np(u, v, g, B):
    iu = u.real * u.real + u.imag * u.imag
    iv = v.real * v.real + v.imag * v.imag
    pu = -g * (iu + B * iv)
    pv = -g * (iv + B * iu)
    u *= np.cos(pu) + 1j * np.sin(pu)
    v *= np.cos(pv) + 1j * np.sin(pv)


def kerr_step(u, v, g, B):
    """In place: u *= exp(-i g (|u|^2 + B|v|^2)), v likewise; g = 2 c dt."""
    if _accel.use_numba():
        _kerr_step_nb(u, v, float(g), float(B))
    else:
        _kerr_step_np(u, v, float(g), float(B))
