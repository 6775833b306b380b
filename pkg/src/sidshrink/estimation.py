"""Hankel-data assembly, least-squares estimation of the extended model,
noise estimation, weighting schemes, truncation, and order selection.

Data layout: given input/output samples u[k], y[k] (rows = time), the past
regressor stacks [U_p; Y_p] over the window k-p..k-1 and the future blocks
span k..k+f-1. The estimation target is the past-to-future map h_fp in

    Y_f = h_fp Z_p + h_f U_f + (noise),

fit jointly by least squares on the stacked regressor [Z_p; U_f].

Data ingestion format (shared with the CLI): delimited text, one row per
time step, header row with columns u_1..u_{n_i}, y_1..y_{n_o}. See dataio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DataError, NumericalError
from .linalg import build_hankel, toeplitz_project
from .shrinkage import soft_threshold_level

__all__ = [
    "HankelData",
    "LsEstimate",
    "NoiseEstimate",
    "WeightPair",
    "RankStar",
    "assemble",
    "ls_estimate",
    "residues",
    "estimate_noise",
    "build_weights",
    "noise_level",
    "truncate_estimate",
    "rank_star",
    "order_heuristic_neff",
    "order_midpoint",
]

SCHEMES = ("identity", "cva", "n4sid")

# relative cutoff below which singular values are treated as zero
RCOND = 1e-10

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class HankelData:
    """Past/future block Hankel matrices assembled from one realization."""

    y_f: np.ndarray
    u_f: np.ndarray
    u_p: np.ndarray
    y_p: np.ndarray
    z_p: np.ndarray
    f: int
    p: int
    n_cols: int
    n_i: int
    n_o: int


@dataclass(frozen=True)
class LsEstimate:
    h_fp_hat: np.ndarray
    h_f_hat: np.ndarray
    residues: np.ndarray


@dataclass(frozen=True)
class NoiseEstimate:
    g_hat_sq: np.ndarray   # residue covariance E E' / (j - dof)
    g_f_hat: np.ndarray    # Toeplitz-projected Cholesky factor
    dof: int


@dataclass(frozen=True)
class WeightPair:
    """Row/column weights (w1, w2) for one scheme, with cached inverses.

    The projection complement of the future-input row space is held
    implicitly through zpz_perp = Z_p Pi Z_p' (Pi the orthogonal projector
    onto the complement), never as an N x N matrix. factor1 caches
    lambda_max(w2' zpz_perp^-1 w2) for the noise-level computation; it is
    None when zpz_perp is singular.
    """

    scheme: str
    w1: np.ndarray
    w2: np.ndarray
    w1_inv: np.ndarray
    w2_pinv: np.ndarray
    zpz_perp: np.ndarray
    factor1: float | None = field(default=None, compare=False)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.w1 @ h @ self.w2

    def unapply(self, m: np.ndarray) -> np.ndarray:
        return self.w1_inv @ m @ self.w2_pinv


@dataclass(frozen=True)
class RankStar:
    r_star: int
    g_hat_sq: np.ndarray
    g_f_hat: np.ndarray
    sigma_level: float
    count_above: int
    converged: bool


def assemble(u, y, f: int, p: int) -> HankelData:
    """Build the past/future Hankel blocks from aligned input/output samples.

    U_p spans samples k-p..k-1 and U_f spans k..k+f-1 for k = p, giving
    N = T - f - p + 1 columns.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if u.shape[0] != y.shape[0]:
        raise DataError("inputs and outputs must have equal length")
    t = u.shape[0]
    if f < 1 or p < 1:
        raise ValueError("horizons must be positive")
    n = t - f - p + 1
    if n < 1:
        raise DataError(f"need at least f + p = {f + p} samples, have {t}")
    u_p = build_hankel(u, p, n, 0)
    y_p = build_hankel(y, p, n, 0)
    u_f = build_hankel(u, f, n, p)
    y_f = build_hankel(y, f, n, p)
    return HankelData(
        y_f=y_f, u_f=u_f, u_p=u_p, y_p=y_p, z_p=np.vstack([u_p, y_p]),
        f=f, p=p, n_cols=n, n_i=u.shape[1], n_o=y.shape[1],
    )


def residues(data: HankelData, h_fp_hat: np.ndarray, h_f_hat: np.ndarray) -> np.ndarray:
    return data.y_f - h_fp_hat @ data.z_p - h_f_hat @ data.u_f


def ls_estimate(data: HankelData) -> LsEstimate:
    """Joint least squares of Y_f on the stacked regressor [Z_p; U_f].

    The stacked regressor must have full row rank within tolerance;
    otherwise NumericalError reports the condition number. Singular values
    below RCOND * s_max are treated as zero in the solve.
    """
    reg = np.vstack([data.z_p, data.u_f])
    svals = np.linalg.svd(reg, compute_uv=False)
    if svals[-1] <= RCOND * svals[0]:
        cond = np.inf if svals[-1] == 0 else svals[0] / svals[-1]
        raise NumericalError(
            f"stacked regressor rank deficient (condition number {cond:.3e})"
        )
    coeff, *_ = np.linalg.lstsq(reg.T, data.y_f.T, rcond=RCOND)
    coeff = coeff.T
    n_past = data.z_p.shape[0]
    h_fp_hat = coeff[:, :n_past]
    h_f_hat = coeff[:, n_past:]
    return LsEstimate(
        h_fp_hat=h_fp_hat, h_f_hat=h_f_hat,
        residues=residues(data, h_fp_hat, h_f_hat),
    )


def _chol_psd(m: np.ndarray) -> np.ndarray:
    """Cholesky factor with an escalating jitter fallback for semidefinite
    inputs (noise covariances can be numerically singular on near-noiseless
    data)."""
    a = (m + m.T) / 2.0
    scale = max(float(np.trace(a)) / a.shape[0], np.finfo(float).tiny)
    jitter = 0.0
    for _ in range(8):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-14 if jitter == 0.0 else jitter * 100.0
    raise NumericalError("residue covariance is not positive semidefinite")


def _dof(f: int, n_i: int, n_o: int, rank_used: int | None) -> int:
    if rank_used is None:
        return f * (n_o + 2 * n_i)
    r = rank_used
    full = f * (n_i + n_o)
    return f * n_i + full - (full - (f + n_i + n_o) * r + r * r)


def estimate_noise(data: HankelData, h_fp_hat: np.ndarray, h_f_hat: np.ndarray,
                   rank_used: int | None = None) -> NoiseEstimate:
    """Residue covariance and its Toeplitz-projected Cholesky factor.

    The divisor j - dof uses the full regressor count when rank_used is
    None, otherwise the reduced count for a rank-r truncated estimate.
    """
    dof = _dof(data.f, data.n_i, data.n_o, rank_used)
    j = data.n_cols
    if j <= dof:
        raise DataError(f"too few columns for noise estimation: {j} <= dof {dof}")
    resid = residues(data, h_fp_hat, h_f_hat)
    g_hat_sq = resid @ resid.T / (j - dof)
    g_hat_sq = (g_hat_sq + g_hat_sq.T) / 2.0
    g_f_hat = toeplitz_project(_chol_psd(g_hat_sq))
    return NoiseEstimate(g_hat_sq=g_hat_sq, g_f_hat=g_f_hat, dof=dof)


def _zpz_perp(data: HankelData) -> np.ndarray:
    """Z_p Pi Z_p' with Pi the projector onto the orthogonal complement of
    the U_f row space, computed from an orthonormal basis of U_f' (no N x N
    projector is ever formed)."""
    q = scipy.linalg.orth(data.u_f.T)
    zq = data.z_p @ q
    out = data.z_p @ data.z_p.T - zq @ zq.T
    return (out + out.T) / 2.0


def _max_eig_congruence(zpz: np.ndarray, w2: np.ndarray) -> float | None:
    """lambda_max(w2' zpz^-1 w2) via the small-side Gram form."""
    try:
        chol = np.linalg.cholesky(zpz)
    except np.linalg.LinAlgError:
        return None
    x = scipy.linalg.solve_triangular(chol, w2, lower=True)
    gram = x @ x.T
    return float(np.linalg.eigvalsh((gram + gram.T) / 2.0)[-1])


def build_weights(scheme: str, data: HankelData,
                  g_f_hat: np.ndarray | None = None) -> WeightPair:
    """Weight pair for one scheme.

    identity: w1 = I, w2 = I.
    cva:      w1 = g_f_hat^-1, w2 = (Z_p Pi Z_p')^(1/2).
    n4sid:    w1 = I, w2 = Z_p (shared by reference, not copied).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    n_rows = data.f * data.n_o
    n_past = data.z_p.shape[0]
    zpz = _zpz_perp(data)
    eye_rows = np.eye(n_rows)
    if scheme == "identity":
        w1 = eye_rows
        w1_inv = eye_rows
        w2 = np.eye(n_past)
        w2_pinv = np.eye(n_past)
    elif scheme == "cva":
        if g_f_hat is None:
            raise ValueError("cva weights need g_f_hat")
        if np.min(np.abs(np.diag(g_f_hat))) <= RCOND * np.max(np.abs(np.diag(g_f_hat))):
            raise NumericalError("cva scheme: estimated noise factor is singular")
        w1 = scipy.linalg.solve_triangular(g_f_hat, eye_rows, lower=True)
        w1_inv = np.asarray(g_f_hat, dtype=float)
        evals, evecs = np.linalg.eigh(zpz)
        if evals[0] <= RCOND * max(evals[-1], np.finfo(float).tiny):
            raise NumericalError("cva scheme: Z_p Pi Z_p' is singular")
        w2 = (evecs * np.sqrt(evals)) @ evecs.T
        w2_pinv = (evecs / np.sqrt(evals)) @ evecs.T
    else:  # n4sid
        w1 = eye_rows
        w1_inv = eye_rows
        w2 = data.z_p
        w2_pinv = np.linalg.pinv(data.z_p, rcond=RCOND)
    return WeightPair(
        scheme=scheme, w1=w1, w2=w2, w1_inv=w1_inv, w2_pinv=w2_pinv,
        zpz_perp=zpz, factor1=_max_eig_congruence(zpz, w2),
    )


def noise_level(weights: WeightPair, g_hat_sq: np.ndarray) -> float:
    """Scalar noise level of the weighted estimate:

        sigma^2 = lambda_max(w2' (Z_p Pi Z_p')^-1 w2) * lambda_max(w1 GG' w1')

    floored at SIGMA_FLOOR so thresholds stay finite on noiseless data.
    """
    if weights.factor1 is None:
        raise NumericalError("noise level undefined: Z_p Pi Z_p' is singular")
    m = weights.w1 @ g_hat_sq @ weights.w1.T
    factor2 = float(np.linalg.eigvalsh((m + m.T) / 2.0)[-1])
    if factor2 < 0.0:
        factor2 = 0.0
    return max(math.sqrt(weights.factor1 * factor2), SIGMA_FLOOR)


def truncate_estimate(h_fp_hat: np.ndarray, weights: WeightPair, r: int) -> np.ndarray:
    """Best rank-r approximation in the weighted norm, mapped back to the
    original coordinates (Moore-Penrose unweighting for rectangular w2)."""
    m = weights.apply(h_fp_hat)
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} outside [1, {min(m.shape)}]")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    m_r = (u[:, :r] * s[:r]) @ vt[:r]
    return weights.unapply(m_r)


def rank_star(data: HankelData, ls: LsEstimate, weights: WeightPair) -> RankStar:
    """Self-consistent truncation rank.

    For each candidate rank r the estimate is truncated, the noise factor
    and level are re-estimated from the truncated residues (reduced dof),
    and the soft threshold is recomputed; r* is the smallest r for which the
    number of weighted singular values above the threshold drops below r.
    If no rank satisfies the rule the full rank is returned with
    converged=False.
    """
    m = weights.apply(ls.h_fp_hat)
    s_all = np.linalg.svd(m, compute_uv=False)
    dim_i, dim_j = min(m.shape), max(m.shape)
    r_max = dim_i
    last = None
    for r in range(1, r_max + 1):
        h_trunc = truncate_estimate(ls.h_fp_hat, weights, r)
        noise = estimate_noise(data, h_trunc, ls.h_f_hat, rank_used=r)
        sigma_r = noise_level(weights, noise.g_hat_sq)
        lam_soft = soft_threshold_level(dim_i, dim_j, sigma_r)
        count = int(np.sum(s_all > lam_soft))
        last = RankStar(
            r_star=r, g_hat_sq=noise.g_hat_sq, g_f_hat=noise.g_f_hat,
            sigma_level=sigma_r, count_above=count, converged=True,
        )
        if count < r:
            return last
    assert last is not None
    return RankStar(
        r_star=r_max, g_hat_sq=last.g_hat_sq, g_f_hat=last.g_f_hat,
        sigma_level=last.sigma_level, count_above=last.count_above,
        converged=False,
    )


def order_heuristic_neff(s) -> int:
    """Order estimate from an effective-count tail fit.

    n_eff = (sum s)^2 / sum s^2 is rounded down; a line is fit to
    ln s_l on l = floor(n_eff)+1 .. i (1-based), and the estimate is the
    largest l whose singular value lies strictly above the fitted line.
    Degenerate fits (fewer than 2 usable points) fall back to floor(n_eff).
    """
    s = np.asarray(s, dtype=float)
    if np.sum(s > 0) < 3:
        raise ValueError("need at least 3 positive singular values")
    total = float(np.sum(s))
    n_eff = total * total / float(np.sum(s * s))
    m = int(math.floor(n_eff))
    i = s.shape[0]
    ell = np.arange(m + 1, i + 1)
    tail = s[m:]
    keep = tail > 0
    if np.sum(keep) < 2:
        return max(1, min(m, i))
    slope, intercept = np.polyfit(ell[keep], np.log(tail[keep]), 1)
    fitted = np.exp(slope * np.arange(1, i + 1) + intercept)
    above = np.nonzero(s > fitted)[0]
    if above.size == 0:
        return max(1, min(m, i))
    return int(above[-1] + 1)


def order_midpoint(s) -> int:
    """Order estimate by the log-midpoint rule: the largest l with
    s_l strictly above exp((ln s_1 + ln s_i)/2). A zero trailing value is
    substituted by the smallest positive value times 1e-3."""
    s = np.asarray(s, dtype=float)
    if s.size < 2 or s[0] <= 0:
        return 1
    s_last = s[-1]
    if s_last <= 0:
        positive = s[s > 0]
        s_last = float(positive.min()) * 1e-3
    thr = math.exp((math.log(s[0]) + math.log(s_last)) / 2.0)
    above = np.nonzero(s > thr)[0]
    if above.size == 0:
        return 1
    return int(above[-1] + 1)
