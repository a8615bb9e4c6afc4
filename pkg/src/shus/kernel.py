"""Metropolis-Hastings kernels targeting the biased density ``pi / rho(theta)``.

:func:`mh_step` is a plain-Python reference step.  The compiled loops in
:mod:`shus._loops` consume random numbers in the same order, so a chain built
from repeated :func:`mh_step` calls reproduces a compiled run bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _loops
from .bias import Rho, biased_logdensity
from .model import ContinuousTarget, DomainError, Partition, ToyTarget


@dataclass(frozen=True)
class ProposalSpec:
    """Isotropic Gaussian random-walk proposal with per-coordinate variance ``sigma2``."""

    sigma2: float = 0.01

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def propose(rng: np.random.Generator, x, prop: ProposalSpec) -> np.ndarray:
    """Draw ``y = x + sigma * N(0, I_2)``."""
    return np.asarray(x, dtype=float) + prop.sigma * rng.standard_normal(2)


def propose_toy(rng: np.random.Generator, x: int) -> int:
    """Nearest-neighbour move on ``{1, 2, 3}`` (states are 1-based)."""
    u = rng.random()
    if x == 1:
        return 2 if u < 1.0 / 3.0 else 1
    if x == 3:
        return 2 if u < 1.0 / 3.0 else 3
    return 1 if u < 1.0 / 3.0 else (2 if u < 2.0 / 3.0 else 3)


def mh_step(rng: np.random.Generator, target, partition: Partition, theta, rho: Rho, x,
            prop: ProposalSpec | None = None):
    """One Metropolis-Hastings move; returns the new state (or ``x`` on rejection).

    Proposals leaving the support have zero density and are rejected without
    drawing an acceptance uniform.
    """
    logp = biased_logdensity(target, partition, theta, rho)
    if isinstance(target, ToyTarget):
        y = propose_toy(rng, x)
        if y == x:
            return x
    else:
        y = propose(rng, x, prop or ProposalSpec())
        if abs(y[0]) > target.R:
            return np.asarray(x, dtype=float)
    lr = logp(y) - logp(x)
    if lr >= 0.0 or rng.random() < math.exp(lr):
        return y
    return x if isinstance(target, ToyTarget) else np.asarray(x, dtype=float)


def sample_fixed(rng: np.random.Generator, target, partition: Partition, theta, rho: Rho,
                 x0, n_steps: int, prop: ProposalSpec | None = None, path: bool = False):
    """Compiled chain of ``n_steps`` MH moves at fixed ``theta``.

    Returns the visit count of each stratum over steps ``1..n_steps``; with
    ``path=True`` also the 1-based stratum of every ``X_n``.
    """
    theta = np.asarray(theta, dtype=float)
    log_occ = np.log(theta)
    visits = np.zeros(partition.d, dtype=np.int64)
    is_sums = np.zeros(partition.d)
    m = n_steps if path else 0
    hits = np.zeros(m, dtype=np.int64)
    scratch = np.empty(m)
    no_theta = np.empty((0, partition.d))
    common = (0, 1.0, 0.0, 1.0, 1.0, int(path), 0, False, False)
    if isinstance(target, ToyTarget):
        log_pi = np.log(target.probabilities)
        _loops.toy_loop(rng, log_pi, int(x0) - 1, log_occ, n_steps, False, *_rho_args(rho),
                        *common, -1, scratch, hits, scratch, scratch, no_theta, visits, is_sums)
    elif isinstance(target, ContinuousTarget):
        x = np.array(x0, dtype=float)
        prop = prop or ProposalSpec()
        _loops.plane_loop(rng, target.beta, target.R, partition.edges, prop.sigma, x, log_occ,
                          n_steps, False, *_rho_args(rho), *common, math.inf, 0,
                          scratch, hits, scratch, scratch, no_theta, np.empty((0, 2)),
                          visits, is_sums)
    else:
        raise TypeError(f"unsupported target {target!r}")
    return (visits, hits) if path else visits


def _rho_args(rho: Rho) -> tuple:
    log_t0 = math.log(rho.t0) if rho.family == "floored-power" and rho.t0 > 0 else -math.inf
    return (rho.code, float(rho.exponent), log_t0, math.log(rho.value), float(rho.sup))
