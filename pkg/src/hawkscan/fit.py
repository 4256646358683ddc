"""Maximum-likelihood fitting of ``(mu, A)`` with the decay held fixed.

The log-likelihood splits into independent concave problems, one per target
node m, in ``theta = (mu_m, A[:, m])``:

    l_m(theta) = sum_{k: u_k = m} log(x_k . theta) - c . theta

with ``x_k = (1, D(t_k))`` and ``c = (T, G)``, ``G_p = sum_{u_k = p} (1 - exp(-beta (T - t_k))) / beta``.
Each is solved by projected Newton with Armijo backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .model import EventStream, HawkesModel, log_likelihood


@dataclass(frozen=True)
class FitOptions:
    eps_mu: float = 1e-6
    tol: float = 1e-6
    max_iter: int = 500
    armijo: float = 1e-4


@dataclass(frozen=True, eq=False)
class FitResult:
    model: HawkesModel
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    loglik_trace: tuple = ()


def _projected_grad(theta, g, lb):
    pg = g.copy()
    at_bound = theta <= lb
    pg[at_bound] = np.maximum(g[at_bound], 0.0)
    return pg


def _solve_target(X, c, theta, lb, opts):
    """Maximize ``sum log(X theta) - c theta`` over ``theta >= lb``."""

    def objective(th):
        return float(np.sum(np.log(X @ th)) - c @ th)

    f = objective(theta)
    trace = [f]
    it = 0
    for it in range(opts.max_iter + 1):
        lam = X @ theta
        g = X.T @ (1.0 / lam) - c
        pg = _projected_grad(theta, g, lb)
        if np.max(np.abs(pg)) < opts.tol or it == opts.max_iter:
            break
        free = ~((theta <= lb) & (g < 0))
        d = np.zeros_like(theta)
        if free.any():
            Xf = X[:, free] / lam[:, None]
            H = Xf.T @ Xf
            H[np.diag_indices_from(H)] += 1e-12 * max(1.0, np.trace(H))
            try:
                d[free] = np.linalg.solve(H, g[free])
            except np.linalg.LinAlgError:
                d[free] = np.linalg.lstsq(H, g[free], rcond=None)[0]
        step = 1.0
        accepted = False
        while step > 1e-14:
            cand = np.maximum(theta + step * d, lb)
            f_new = objective(cand)
            if f_new >= f + opts.armijo * g @ (cand - theta):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Newton direction failed; fall back to a projected gradient step
            step = 1.0 / max(1.0, np.max(np.abs(g)))
            while step > 1e-16:
                cand = np.maximum(theta + step * g, lb)
                f_new = objective(cand)
                if f_new >= f + opts.armijo * g @ (cand - theta):
                    accepted = True
                    break
                step *= 0.5
        if not accepted:
            break
        theta, f = cand, f_new
        trace.append(f)
    return theta, float(np.max(np.abs(pg))), it, trace


def fit_mle(stream: EventStream, beta: float, init: HawkesModel, opts: FitOptions | None = None) -> FitResult:
    """Projected-Newton MLE of ``(mu, A)`` for fixed ``beta``.

    Non-convergence within ``opts.max_iter`` is reported through
    ``converged=False`` rather than raised.
    """
    opts = opts or FitOptions()
    if not beta > 0:
        raise ConfigurationError("beta must be > 0")
    if init.n_nodes != stream.n_nodes:
        raise ConfigurationError("init and stream disagree on the number of nodes")
    M, T = stream.n_nodes, stream.horizon
    D = _kernels.decayed_sources(stream.times, stream.nodes, M, beta, -np.inf)
    counts_weight = -np.expm1(-beta * (T - stream.times)) / beta
    G = np.bincount(stream.nodes, weights=counts_weight, minlength=M)
    c = np.concatenate([[T], G])
    lb = np.zeros(M + 1)
    lb[0] = opts.eps_mu

    mu = np.maximum(np.array(init.mu, dtype=float), opts.eps_mu)
    A = np.array(init.A, dtype=float)
    grad_norm = 0.0
    max_it = 0
    traces = []
    for m in range(M):
        rows = stream.nodes == m
        X = np.hstack([np.ones((rows.sum(), 1)), D[rows]])
        theta0 = np.concatenate([[mu[m]], A[:, m]])
        theta, gn, it, trace = _solve_target(X, c, theta0, lb, opts)
        mu[m], A[:, m] = theta[0], theta[1:]
        grad_norm = max(grad_norm, gn)
        max_it = max(max_it, it)
        traces.append(trace)
    # per-target traces are summed position-wise into one monotone trace
    depth = max(len(t) for t in traces)
    total = np.zeros(depth)
    for t in traces:
        total += np.concatenate([t, np.full(depth - len(t), t[-1])])
    model = HawkesModel(mu, A, beta)
    return FitResult(
        model=model,
        loglik=log_likelihood(model, stream),
        grad_norm=grad_norm,
        iterations=max_it,
        converged=grad_norm < opts.tol,
        loglik_trace=tuple(float(v) for v in total),
    )
