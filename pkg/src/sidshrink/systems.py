"""Discrete-time LTI state-space models: random sampling, steady-state
Kalman gain, simulation, and the exact extended-model decomposition used as
ground truth by the benchmark.

Model convention (innovation / process-noise form):

    x[k+1] = A x[k] + B u[k] + w[k],   w ~ N(0, R_w)
    y[k]   = C x[k] + D u[k] + v[k],   v ~ N(0, R_v)

with steady-state innovation covariance Sigma and Kalman gain K so that the
equivalent predictor uses A_K = A - K C.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .linalg import psd_sqrt

__all__ = [
    "StateSpaceModel",
    "SystemSpec",
    "TrueDecomposition",
    "kalman_gain",
    "sample_system",
    "simulate",
    "default_burn_in",
    "true_decomposition",
]


@dataclass(frozen=True)
class StateSpaceModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    k: np.ndarray        # steady-state Kalman gain
    sigma: np.ndarray    # innovation covariance C P C' + R_v
    r_w: np.ndarray
    r_v: np.ndarray

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_i(self) -> int:
        return self.b.shape[1]

    @property
    def n_o(self) -> int:
        return self.c.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.a))))

    def predictor_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.a - self.k @ self.c))))


@dataclass(frozen=True)
class SystemSpec:
    """Random-system sampling protocol for the benchmark."""

    nx_range: tuple[int, int] = (1, 10)
    n_i: int = 1
    n_o: int = 1
    snr_log10_range: tuple[float, float] = (-1.0, 2.0)


@dataclass(frozen=True)
class TrueDecomposition:
    """Exact extended-model matrices for horizons (f, p)."""

    gamma_f: np.ndarray   # (f*n_o, n_x) extended observability matrix
    l_p: np.ndarray       # (n_x, p*(n_i+n_o)) predictor reachability, [input block | output block]
    h_fp: np.ndarray      # gamma_f @ l_p
    h_f: np.ndarray       # lower block-triangular Toeplitz of {D, CB, CAB, ...}
    g_f: np.ndarray       # noise Toeplitz of {I, CK, CAK, ...} times I_f (x) Sigma^(1/2)
    f: int
    p: int


def kalman_gain(a, c, r_w, r_v, tol: float = 1e-12, max_iter: int = 10000):
    """Steady-state Kalman gain by fixed-point Riccati iteration.

    Iterates P <- A P A' - A P C' (C P C' + R_v)^-1 C P A' + R_w until the
    relative Frobenius change is at or below tol. Returns (k, sigma) with
    sigma = C P C' + R_v and k = A P C' sigma^-1.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    r_w = np.atleast_2d(np.asarray(r_w, dtype=float))
    r_v = np.atleast_2d(np.asarray(r_v, dtype=float))
    p = r_w.copy()
    residual = np.inf
    for _ in range(max_iter):
        cpc = c @ p @ c.T + r_v
        apc = a @ p @ c.T
        try:
            gain_t = np.linalg.solve(cpc, apc.T)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"innovation covariance singular: {exc}") from exc
        p_new = a @ p @ a.T - apc @ gain_t + r_w
        p_new = (p_new + p_new.T) / 2.0
        residual = float(np.linalg.norm(p_new - p))
        p = p_new
        if residual <= tol * np.linalg.norm(p_new):
            break
    else:
        raise NumericalError(
            f"Riccati fixed point did not converge: last residual {residual:.3e}"
        )
    sigma = c @ p @ c.T + r_v
    k = np.linalg.solve(sigma, (a @ p @ c.T).T).T
    return k, sigma


def sample_system(spec: SystemSpec, rng: np.random.Generator, max_retries: int = 50):
    """Draw a random stable system plus benchmark sizes.

    Returns (model, snr, n_samples, i_horizon) where snr is the input
    variance (log10 uniform on the configured range), n_samples =
    floor(80 sqrt(n_x)) and i_horizon = floor(n_samples / 10).

    A is a standard normal matrix rescaled so its spectral radius equals a
    Uniform(0,1) draw; B, C are standard normal; D = 0; noise covariances are
    M M' for standard normal half-matrices M. Draws that produce a
    numerically nilpotent A or a failing Riccati solve are resampled.
    """
    lo, hi = spec.nx_range
    for _ in range(max_retries):
        n_x = int(rng.integers(lo, hi + 1))
        a_raw = rng.standard_normal((n_x, n_x))
        lam_a = rng.uniform(0.0, 1.0)
        b = rng.standard_normal((n_x, spec.n_i))
        c = rng.standard_normal((spec.n_o, n_x))
        rv_half = rng.standard_normal((spec.n_o, spec.n_o))
        rw_half = rng.standard_normal((n_x, n_x))
        snr = float(10.0 ** rng.uniform(*spec.snr_log10_range))

        radius = float(np.max(np.abs(np.linalg.eigvals(a_raw))))
        if radius < 1e-8:
            continue
        a = a_raw / radius * lam_a
        r_v = rv_half @ rv_half.T
        r_w = rw_half @ rw_half.T
        if np.linalg.eigvalsh(r_v)[0] <= 1e-12 * max(np.linalg.norm(r_v), 1e-300):
            continue
        try:
            k, sigma = kalman_gain(a, c, r_w, r_v)
        except NumericalError:
            continue
        model = StateSpaceModel(
            a=a, b=b, c=c, d=np.zeros((spec.n_o, spec.n_i)),
            k=k, sigma=sigma, r_w=r_w, r_v=r_v,
        )
        n_samples = int(math.floor(80.0 * math.sqrt(n_x)))
        return model, snr, n_samples, n_samples // 10
    raise NumericalError(f"no valid system after {max_retries} attempts")


def default_burn_in(model: StateSpaceModel, cap: int = 10000) -> int:
    """Burn-in long enough for near-stationarity: 10 ceil(1/(1-rho)),
    capped."""
    rho = model.spectral_radius()
    if rho >= 1.0:
        return cap
    return int(min(cap, 10 * math.ceil(1.0 / (1.0 - rho))))


def simulate(model: StateSpaceModel, inputs, rng: np.random.Generator,
             burn_in: int = 0) -> np.ndarray:
    """Simulate the model from x[0] = 0 over the full input sequence.

    The first burn_in steps are warm-up: the state evolves through them but
    their outputs are dropped, so the returned outputs align with
    inputs[burn_in:]. Noise draws are vectorised up front, which keeps the
    stream consumption independent of the state trajectory.
    """
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    t_total = u.shape[0]
    if not 0 <= burn_in < t_total:
        raise ValueError("burn_in must lie in [0, len(inputs))")
    w_half = psd_sqrt(model.r_w)
    v_half = psd_sqrt(model.r_v)
    w = rng.standard_normal((t_total, model.n_x)) @ w_half.T
    v = rng.standard_normal((t_total, model.n_o)) @ v_half.T
    x = np.zeros(model.n_x)
    y = np.empty((t_total, model.n_o))
    a, b, c, d = model.a, model.b, model.c, model.d
    for t in range(t_total):
        y[t] = c @ x + d @ u[t] + v[t]
        x = a @ x + b @ u[t] + w[t]
    return y[burn_in:]


def _block_toeplitz(blocks: list[np.ndarray], f: int) -> np.ndarray:
    """Lower block-triangular Toeplitz with blocks[m] on block subdiagonal m."""
    r, c = blocks[0].shape
    out = np.zeros((f * r, f * c))
    for row in range(f):
        for col in range(row + 1):
            out[row * r:(row + 1) * r, col * c:(col + 1) * c] = blocks[row - col]
    return out


def true_decomposition(model: StateSpaceModel, f: int, p: int) -> TrueDecomposition:
    """Exact extended-model matrices at horizons (f, p).

    gamma_f stacks C A^r; l_p concatenates the input-driven and
    output-driven predictor reachability blocks (input block first, matching
    a past regressor stacked as [U_p; Y_p]); h_fp is their exact product.
    """
    if f < 1 or p < 1:
        raise ValueError("horizons must be positive")
    n_x = model.n_x
    if f <= n_x or p <= n_x:
        warnings.warn("horizons not larger than the state order; the extended "
                      "model truncation error may dominate", stacklevel=2)
    a, b, c, d, k = model.a, model.b, model.c, model.d, model.k
    a_k = a - k @ c
    b_k1 = b - k @ d
    b_k2 = k.copy()

    # observability blocks C A^r
    obs = np.empty((f * model.n_o, n_x))
    cur = c.copy()
    for r in range(f):
        obs[r * model.n_o:(r + 1) * model.n_o] = cur
        cur = cur @ a

    # predictor reachability: [A_K^(p-1) B, ..., A_K B, B]
    def reach(bmat: np.ndarray) -> np.ndarray:
        cols = [bmat]
        cur = bmat
        for _ in range(p - 1):
            cur = a_k @ cur
            cols.append(cur)
        return np.hstack(cols[::-1])

    l_p = np.hstack([reach(b_k1), reach(b_k2)])

    # Markov parameter Toeplitz blocks
    h_blocks = [d.copy()]
    g_blocks = [np.eye(model.n_o)]
    cur = c.copy()
    for _ in range(f - 1):
        h_blocks.append(cur @ b)
        g_blocks.append(cur @ k)
        cur = cur @ a
    h_f = _block_toeplitz(h_blocks, f)
    g_f = _block_toeplitz(g_blocks, f) @ np.kron(np.eye(f), psd_sqrt(model.sigma))

    return TrueDecomposition(
        gamma_f=obs, l_p=l_p, h_fp=obs @ l_p, h_f=h_f, g_f=g_f, f=f, p=p,
    )
