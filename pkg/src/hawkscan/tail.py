"""Gaussian box probabilities ``P(l <= Y <= u)``, ``Y ~ N(0, C)``, by minimax exponential tilting.

Variables are reordered so the most constrained ones come first, ``Y = L Z``
with a unit-diagonal Cholesky factor, and the tilting vector is the saddle
point of the log-likelihood-ratio bound (one ``scipy.optimize.root`` call).
Samples are drawn coordinate by coordinate from tilted truncated normals by
inversion, so the same uniforms give an estimate that moves continuously with
the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import NumericalError

_LOG_2PI_HALF = 0.5 * np.log(2 * np.pi)


def ln_npr(a, b):
    """``log(Phi(b) - Phi(a))`` elementwise, accurate in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape)
    right = a > 0
    left = b < 0
    mid = ~(right | left)
    if right.any():
        pa, pb = special.log_ndtr(-a[right]), special.log_ndtr(-b[right])
        out[right] = pa + np.log1p(-np.exp(pb - pa))
    if left.any():
        pa, pb = special.log_ndtr(a[left]), special.log_ndtr(b[left])
        out[left] = pb + np.log1p(-np.exp(pa - pb))
    if mid.any():
        out[mid] = np.log1p(-special.ndtr(a[mid]) - special.ndtr(-b[mid]))
    return out


def trunc_norm_inv(tl, tu, U):
    """Inverse-CDF draw of ``N(0,1)`` truncated to ``[tl, tu]`` from uniforms ``U``."""
    tl, tu, U = np.broadcast_arrays(np.asarray(tl, float), np.asarray(tu, float), np.asarray(U, float))
    out = np.empty(tl.shape)
    right = tl > 0
    left = tu < 0
    mid = ~(right | left)
    if right.any():
        ql, qu = special.log_ndtr(-tl[right]), special.log_ndtr(-tu[right])
        logp = ql + np.log1p(-U[right] * -np.expm1(qu - ql))
        out[right] = -special.ndtri_exp(logp)
    if left.any():
        ql, qu = special.log_ndtr(tl[left]), special.log_ndtr(tu[left])
        logp = qu + np.log1p(-(1.0 - U[left]) * -np.expm1(ql - qu))
        out[left] = special.ndtri_exp(logp)
    if mid.any():
        pl, pu = special.ndtr(tl[mid]), special.ndtr(tu[mid])
        out[mid] = special.ndtri(pl + U[mid] * (pu - pl))
    return np.clip(out, tl, tu)


def _colperm(C, l, u):
    """Greedy reordering (most restrictive variable first) and Cholesky factor of the permuted ``C``."""
    d = C.shape[0]
    C = C.copy()
    l, u = l.copy(), u.copy()
    perm = np.arange(d)
    Lf = np.zeros((d, d))
    z = np.zeros(d)
    for j in range(d):
        rest = np.arange(j, d)
        s = C[rest, rest] - np.sum(Lf[rest, :j] ** 2, axis=1)
        s = np.sqrt(np.maximum(s, 0.0))
        if np.any(s <= 0):
            s = np.where(s > 0, s, np.finfo(float).tiny)
        shift = Lf[rest, :j] @ z[:j]
        tl, tu = (l[rest] - shift) / s, (u[rest] - shift) / s
        k = j + int(np.argmin(ln_npr(tl, tu)))
        for arr in (l, u, perm):
            arr[[j, k]] = arr[[k, j]]
        C[[j, k], :] = C[[k, j], :]
        C[:, [j, k]] = C[:, [k, j]]
        Lf[[j, k], :] = Lf[[k, j], :]
        piv = C[j, j] - Lf[j, :j] @ Lf[j, :j]
        if piv <= 1e-14 * max(1.0, C[j, j]):
            raise NumericalError(f"covariance is singular along variable {perm[j]} (pivot {piv:.3g})")
        Lf[j, j] = np.sqrt(piv)
        Lf[j + 1:, j] = (C[j + 1:, j] - Lf[j + 1:, :j] @ Lf[j, :j]) / Lf[j, j]
        tl = (l[j] - Lf[j, :j] @ z[:j]) / Lf[j, j]
        tu = (u[j] - Lf[j, :j] @ z[:j]) / Lf[j, j]
        w = ln_npr(tl, tu)
        z[j] = (np.exp(-0.5 * tl**2 - w) - np.exp(-0.5 * tu**2 - w)) / np.sqrt(2 * np.pi)
    return Lf, l, u, perm


def _gradpsi(y, L, l, u):
    d = u.size
    x = np.zeros(d)
    mu = np.zeros(d)
    x[: d - 1] = y[: d - 1]
    mu[: d - 1] = y[d - 1:]
    c = L @ x
    lt, ut = l - mu - c, u - mu - c
    w = ln_npr(lt, ut)
    pl = np.exp(-0.5 * lt**2 - w - _LOG_2PI_HALF)
    pu = np.exp(-0.5 * ut**2 - w - _LOG_2PI_HALF)
    P = pl - pu
    dfdx = -mu[: d - 1] + P @ L[:, : d - 1]
    dfdm = mu - x + P
    lt_f = np.where(np.isinf(lt), 0.0, lt)
    ut_f = np.where(np.isinf(ut), 0.0, ut)
    dP = -P**2 + lt_f * pl - ut_f * pu
    DL = dP[:, None] * L
    mx = (-np.eye(d) + DL)[: d - 1, : d - 1]
    xx = (L.T @ DL)[: d - 1, : d - 1]
    jac = np.block([[xx, mx.T], [mx, np.diag(1.0 + dP[: d - 1])]])
    return np.concatenate([dfdx, dfdm[: d - 1]]), jac


@dataclass(frozen=True)
class TiltedSampler:
    """Precomputed factor and tilting for one box probability."""

    L: np.ndarray  # strictly lower triangular after scaling
    l: np.ndarray
    u: np.ndarray
    mu: np.ndarray

    @classmethod
    def build(cls, C: np.ndarray, l: np.ndarray, u: np.ndarray) -> "TiltedSampler":
        Lf, l, u, _ = _colperm(np.asarray(C, float), np.asarray(l, float), np.asarray(u, float))
        D = np.diag(Lf)
        Ls = Lf / D[:, None] - np.eye(D.size)
        l, u = l / D, u / D
        d = D.size
        mu = np.zeros(d)
        if d > 1:
            sol = optimize.root(_gradpsi, np.zeros(2 * (d - 1)), args=(Ls, l, u), jac=True, method="hybr")
            m = sol.x[d - 1:]
            # any finite tilt keeps the estimator unbiased; a failed solve falls back to none
            if sol.success and np.all(np.isfinite(m)):
                mu[: d - 1] = m
        return cls(Ls, l, u, mu)

    def log_weights(self, U: np.ndarray) -> np.ndarray:
        """Log importance weights for uniforms ``U`` of shape ``(d, n)``."""
        d, n = U.shape
        Z = np.zeros((d, n))
        logw = np.zeros(n)
        for k in range(d):
            shift = self.L[k, :k] @ Z[:k] if k else 0.0
            tl = self.l[k] - self.mu[k] - shift
            tu = self.u[k] - self.mu[k] - shift
            Z[k] = self.mu[k] + trunc_norm_inv(tl, tu, U[k])
            logw += ln_npr(tl, tu) + 0.5 * self.mu[k] ** 2 - self.mu[k] * Z[k]
        return logw


def box_probability(C, l, u, U: np.ndarray) -> tuple[float, float]:
    """Estimate and standard error of ``P(l <= Y <= u)`` using uniforms ``U`` (d, n)."""
    C = np.atleast_2d(np.asarray(C, float))
    l, u = np.asarray(l, float), np.asarray(u, float)
    if C.shape[0] == 1:
        return float(np.exp(ln_npr(l / np.sqrt(C[0, 0]), u / np.sqrt(C[0, 0])))[0]), 0.0
    w = np.exp(TiltedSampler.build(C, l, u).log_weights(U))
    return float(w.mean()), float(w.std(ddof=1) / np.sqrt(w.size))
