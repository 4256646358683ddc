"""Exact simulation by Ogata thinning, with and without a change of influence matrix."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .model import ChangeScenario, EventStream, HawkesModel


def make_rng(seed, replicate=None) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, replicate)``.

    Replicate k gets the same stream no matter how many other replicates run
    or in which order.  ``replicate`` may be an int or a tuple of ints.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if replicate is None:
        spawn_key = ()
    elif isinstance(replicate, tuple):
        spawn_key = tuple(int(r) for r in replicate)
    else:
        spawn_key = (int(replicate),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


class HawkesSampler:
    """Resumable thinning sampler.

    Keeps the decayed excitation state so a long path can be produced in
    chunks (``advance``) and the influence matrix can be swapped mid-path
    (``switch``).
    """

    def __init__(self, model: HawkesModel, rng: np.random.Generator, t0: float = 0.0):
        model.check_stationary()
        self.model = model
        self.rng = rng
        self.t = float(t0)
        self.mu = np.ascontiguousarray(model.mu)
        self.A = np.ascontiguousarray(model.A)
        self.beta = model.beta
        self.D = np.zeros(model.n_nodes)
        self.exc = np.zeros(model.n_nodes)
        self._rate = float(model.stationary_rates().sum())

    def advance(self, until: float) -> tuple[np.ndarray, np.ndarray]:
        """Events in ``(t, until]``; the sampler then sits at ``until``."""
        if until < self.t:
            raise ConfigurationError(f"cannot advance backwards from {self.t} to {until}")
        expected = (until - self.t) * self._rate + self.exc.sum() / self.beta
        cap = int(expected * 1.2) + 64
        chunks_t, chunks_n = [], []
        while True:
            out_t = np.empty(cap)
            out_n = np.empty(cap, dtype=np.int64)
            n, t = _kernels.thin(self.rng, self.t, until, self.mu, self.A, self.beta, self.D, self.exc, out_t, out_n)
            self.t = t
            chunks_t.append(out_t[:n])
            chunks_n.append(out_n[:n])
            if t >= until:
                break
        if len(chunks_t) == 1:
            return chunks_t[0], chunks_n[0]
        return np.concatenate(chunks_t), np.concatenate(chunks_n)

    def switch(self, model: HawkesModel, carry_history: bool = False) -> None:
        """Continue with ``model``'s parameters from the current time.

        By default excitation from earlier events is dropped, so the new
        intensity only sums over events at or after the switch.
        """
        if model.n_nodes != self.model.n_nodes or model.beta != self.beta:
            raise ConfigurationError("switch must keep the node count and decay")
        model.check_stationary()
        self.model = model
        self.mu = np.ascontiguousarray(model.mu)
        self.A = np.ascontiguousarray(model.A)
        self._rate = float(model.stationary_rates().sum())
        if carry_history:
            self.exc = self.A.T @ self.D
        else:
            self.D[:] = 0.0
            self.exc[:] = 0.0


def simulate(model: HawkesModel, horizon: float, seed, replicate=None) -> EventStream:
    """Exact sample path on ``[0, horizon]``, deterministic in ``(seed, replicate)``."""
    if horizon <= 0:
        raise ConfigurationError("horizon must be > 0")
    sampler = HawkesSampler(model, make_rng(seed, replicate))
    times, nodes = sampler.advance(horizon)
    return EventStream(times, nodes, horizon, model.n_nodes)


def simulate_with_change(
    scn: ChangeScenario, horizon: float, seed, replicate=None, carry_history: bool = False
) -> EventStream:
    """Path following ``scn.pre`` on ``[0, tau*]`` and ``scn.post`` afterwards.

    With ``carry_history=False`` the post-change intensity ignores events before
    ``tau*``; ``True`` keeps their excitation (weighted by the new matrix).
    """
    if scn.tau_star > horizon:
        raise ConfigurationError(f"tau_star={scn.tau_star} exceeds horizon={horizon}")
    if horizon <= 0:
        raise ConfigurationError("horizon must be > 0")
    scn.post.check_stationary()
    sampler = HawkesSampler(scn.pre, make_rng(seed, replicate))
    t1, n1 = sampler.advance(scn.tau_star)
    sampler.switch(scn.post, carry_history=carry_history)
    t2, n2 = sampler.advance(horizon)
    return EventStream(np.concatenate([t1, t2]), np.concatenate([n1, n2]), horizon, scn.pre.n_nodes)
