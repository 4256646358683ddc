"""Compiled inner loops.

Everything here works on plain arrays so the public modules can keep
their dataclasses.  State arrays passed in are mutated in place.
"""

import numpy as np
from numba import njit

INTENSITY_FLOOR = 1e-12


@njit(cache=True)
def decayed_sources(times, nodes, n_nodes, beta, t0):
    """Row k holds sum_{t_i < t_k, u_i = p} exp(-beta (t_k - t_i)) for each node p.

    Only events at or after ``t0`` contribute (``t0 = -inf`` keeps the whole history).
    """
    K = times.shape[0]
    out = np.zeros((K, n_nodes))
    D = np.zeros(n_nodes)
    t_ref = t0
    started = False
    for k in range(K):
        t = times[k]
        if started:
            D *= np.exp(-beta * (t - t_ref))
        out[k, :] = D
        D[nodes[k]] += 1.0
        t_ref = t
        started = True
    return out


@njit(cache=True)
def event_intensities(times, nodes, mu, A, beta):
    """Conditional intensity of each event's own node just before the event."""
    K = times.shape[0]
    M = mu.shape[0]
    exc = np.zeros(M)
    lam = np.empty(K)
    t_ref = 0.0
    for k in range(K):
        t = times[k]
        if k > 0:
            exc *= np.exp(-beta * (t - t_ref))
        q = nodes[k]
        lam[k] = mu[q] + exc[q]
        for m in range(M):
            exc[m] += A[q, m]
        t_ref = t
    return lam


@njit(cache=True)
def thin(rng, t, horizon, mu, A, beta, D, exc, out_t, out_n):
    """Ogata thinning from time ``t`` until ``horizon`` or until ``out_t`` is full.

    ``D`` (decayed per-source counts) and ``exc`` (per-target excitation,
    ``exc = A^T D``) describe the state at time ``t`` and are advanced in place.
    Returns ``(n_written, t_reached)``; ``t_reached == horizon`` means done.
    """
    M = mu.shape[0]
    mu_total = 0.0
    for m in range(M):
        mu_total += mu[m]
    cap = out_t.shape[0]
    n = 0
    while n < cap:
        exc_total = 0.0
        for m in range(M):
            exc_total += exc[m]
        lam_bar = mu_total + exc_total
        s = t + rng.exponential(1.0 / lam_bar)
        if s > horizon:
            decay = np.exp(-beta * (horizon - t))
            for m in range(M):
                exc[m] *= decay
                D[m] *= decay
            return n, horizon
        decay = np.exp(-beta * (s - t))
        for m in range(M):
            exc[m] *= decay
            D[m] *= decay
        t = s
        lam_s = mu_total + exc_total * decay
        u = rng.random() * lam_bar
        if u <= lam_s:
            # pick the node proportionally to its intensity
            acc = 0.0
            node = M - 1
            for m in range(M):
                acc += mu[m] + exc[m]
                if u <= acc:
                    node = m
                    break
            out_t[n] = s
            out_n[n] = node
            n += 1
            D[node] += 1.0
            for m in range(M):
                exc[m] += A[node, m]
    return n, t


@njit(cache=True)
def score_advance(
    times, nodes, until,
    mu, A, beta, has_exc,
    edge_src, tgt_ptr, tgt_edges,
    D, N, jump, fisher, do_fisher, clock, floor_hits,
    delta, ring, ckpt_next,
    weights, window_steps, gam_out, gam_pos, threshold, two_sided, stop_on_alarm,
):
    """Ingest time-ordered events and emit checkpoints at multiples of ``delta``.

    ``clock[0]`` is the time the state refers to; ``ckpt_next[0]`` the index of
    the next checkpoint to emit (checkpoint n sits at n*delta and excludes events
    at exactly that time).  ``ring`` keeps the last ``ring.shape[0]`` cumulative
    score snapshots.  When ``weights`` has rows, each checkpoint n >= window_steps
    also writes the cluster statistics of the window ending there into
    ``gam_out[gam_pos[0]]``.

    Returns ``(consumed, status)`` where status is 0 = all events consumed and
    clock advanced to ``until``; 1 = alarm (stopped right after the alarming
    checkpoint); 2 = ``gam_out`` is full.
    """
    M = mu.shape[0]
    E = edge_src.shape[0]
    L = weights.shape[0]
    R = ring.shape[0]
    K = times.shape[0]
    use_ckpt = delta > 0.0
    for k in range(K + 1):
        if k < K:
            t_evt = times[k]
        else:
            t_evt = until
        # emit every checkpoint c <= t_evt (events at exactly c are excluded from S_c)
        while use_ckpt:
            c = ckpt_next[0] * delta
            if c > t_evt:
                break
            if L > 0 and ckpt_next[0] >= window_steps and gam_pos[0] >= gam_out.shape[0]:
                return k, 2
            decay = np.exp(-beta * (c - clock[0]))
            for m in range(M):
                D[m] *= decay
            clock[0] = c
            slot = ckpt_next[0] % R
            for e in range(E):
                p = edge_src[e]
                ring[slot, e] = jump[e] + (D[p] - N[p]) / beta
            alarm = False
            if L > 0 and ckpt_next[0] >= window_steps:
                old = (ckpt_next[0] - window_steps) % R
                g = gam_pos[0]
                gmax = -np.inf
                for i in range(L):
                    acc = 0.0
                    for e in range(E):
                        wie = weights[i, e]
                        if wie != 0.0:
                            acc += wie * (ring[slot, e] - ring[old, e])
                    gam_out[g, i] = acc
                    v = abs(acc) if two_sided else acc
                    if v > gmax:
                        gmax = v
                gam_pos[0] = g + 1
                if gmax > threshold:
                    alarm = True
            ckpt_next[0] += 1
            if alarm and stop_on_alarm:
                return k, 1
        if k == K:
            break
        t = times[k]
        q = nodes[k]
        if t > clock[0]:
            decay = np.exp(-beta * (t - clock[0]))
            for m in range(M):
                D[m] *= decay
            clock[0] = t
        lam = mu[q]
        if has_exc:
            for p in range(M):
                lam += A[p, q] * D[p]
        if lam < 1e-12:
            lam = 1e-12
            floor_hits[0] += 1
        for j in range(tgt_ptr[q], tgt_ptr[q + 1]):
            e = tgt_edges[j]
            jump[e] += D[edge_src[e]] / lam
            if do_fisher:
                de = D[edge_src[e]]
                for j2 in range(tgt_ptr[q], tgt_ptr[q + 1]):
                    e2 = tgt_edges[j2]
                    fisher[e, e2] += de * D[edge_src[e2]] / (lam * lam)
        D[q] += 1.0
        N[q] += 1.0
    if until > clock[0]:
        decay = np.exp(-beta * (until - clock[0]))
        for m in range(M):
            D[m] *= decay
        clock[0] = until
    return K, 0


@njit(cache=True)
def em_hawkes(D, nodes, fixed_exc, const_ll, T, mu, A, free_mu, edge_src, edge_tgt, tgt_ptr, tgt_edges, G,
              eps_mu, iters, tol, trace):
    """Branching-structure EM on one window, updating ``mu`` and the scope entries of ``A`` in place.

    Only events whose intensity involves a free parameter are passed in:
    ``D[k]`` holds their decayed source counts, ``fixed_exc[k]`` the
    excitation through pinned entries of ``A``; ``const_ll`` is the summed
    log-intensity of all other events.  ``G[p]`` is the integrated kernel mass
    of p's events.  Responsibilities toward source p only enter through
    ``A[p, q] D[k, p] / lambda_k``, so each M-step is multiplicative.
    ``trace[i]`` receives the log-likelihood before iteration i.
    Returns ``(n_iter, loglik)``.
    """
    K = D.shape[0]
    M = mu.shape[0]
    E = edge_src.shape[0]
    lam = np.empty(K)
    bg = np.empty(M)
    acc = np.empty(E)
    prev = -np.inf
    n_iter = 0
    ll = 0.0
    for it in range(iters + 1):
        ll = const_ll
        for k in range(K):
            q = nodes[k]
            v = mu[q] + fixed_exc[k]
            for j in range(tgt_ptr[q], tgt_ptr[q + 1]):
                e = tgt_edges[j]
                v += A[edge_src[e], q] * D[k, edge_src[e]]
            lam[k] = v
            ll += np.log(v)
        for m in range(M):
            ll -= mu[m] * T
            for p in range(M):
                ll -= A[p, m] * G[p]
        trace[it] = ll
        if it == iters or (it > 0 and ll - prev <= tol * abs(prev)):
            break
        prev = ll
        n_iter = it + 1
        bg[:] = 0.0
        acc[:] = 0.0
        for k in range(K):
            q = nodes[k]
            inv = 1.0 / lam[k]
            bg[q] += inv
            for j in range(tgt_ptr[q], tgt_ptr[q + 1]):
                e = tgt_edges[j]
                acc[e] += D[k, edge_src[e]] * inv
        for m in range(M):
            if free_mu[m]:
                mu[m] = max(eps_mu, mu[m] * bg[m] / T)
        for e in range(E):
            p = edge_src[e]
            q = edge_tgt[e]
            if G[p] > 0.0:
                A[p, q] = A[p, q] * acc[e] / G[p]
            else:
                A[p, q] = 0.0
    return n_iter, ll
