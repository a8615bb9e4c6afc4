"""Reweighting functions, stepsize schedule and occupation updates.

The occupation vector and its normalizer are stored as logarithms: for
``alpha < 1`` the normalizer grows like ``exp(c n**(1 - alpha))`` and leaves
the float range within a few million iterations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import DomainError, Partition, stratum_index, target_logdensity

RHO_FAMILIES = ("power", "floored-power", "constant")
# integer codes shared with the compiled loops
RHO_CODES = {"power": 0, "floored-power": 1, "constant": 2}


@dataclass(frozen=True)
class Rho:
    """Non-decreasing reweighting function on ``(0, 1)``.

    ``power``: ``t**a``; ``floored-power``: ``max(t, t0)**a``; ``constant``:
    ``value``.
    """

    family: str = "power"
    a: float = 1.0
    t0: float = 0.0
    value: float = 1.0

    def __post_init__(self):
        if self.family not in RHO_FAMILIES:
            raise DomainError(f"unknown rho family {self.family!r}")
        if self.family != "constant" and not 0.0 <= self.a <= 1.0:
            raise DomainError(f"rho exponent a must lie in [0, 1], got {self.a}")
        if self.family == "floored-power" and not 0.0 <= self.t0 <= 1.0:
            raise DomainError(f"t0 must lie in [0, 1], got {self.t0}")
        if self.family == "constant" and not self.value > 0:
            raise DomainError("constant rho must be positive")

    @property
    def exponent(self) -> float:
        """Effective power ``a`` (0 for the constant family)."""
        return 0.0 if self.family == "constant" else self.a

    @property
    def code(self) -> int:
        return RHO_CODES[self.family]

    @property
    def sup(self) -> float:
        """``sup_{(0,1)} rho``."""
        return self.value if self.family == "constant" else 1.0

    def log(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant":
            return np.full(t.shape, math.log(self.value))[()]
        if self.family == "floored-power":
            t = np.maximum(t, self.t0)
        if self.a == 0.0:
            return np.zeros(t.shape)[()]
        return (self.a * np.log(t))[()]

    def __call__(self, t):
        return np.exp(self.log(t))


def rho_eval(rho: Rho, t: float) -> float:
    """Evaluate ``rho(t)`` for ``t`` in the open unit interval."""
    if not 0.0 < t < 1.0:
        raise DomainError(f"rho is defined on (0, 1), got t={t}")
    return float(rho(t))


def check_rho(rho: Rho, n_grid: int = 1000) -> list[str]:
    """Check monotonicity of ``rho`` and ``rho(t)/t`` on a grid.

    Returns the list of violated properties (empty when all hold).
    """
    t = np.linspace(0.0, 1.0, n_grid + 2)[1:-1]
    r = rho(t)
    problems = []
    if np.any(np.diff(r) < -1e-15 * r[1:]):
        problems.append("rho is not non-decreasing")
    ratio = r / t
    if np.any(np.diff(ratio) > 1e-12 * ratio[:-1]):
        problems.append("rho(t)/t is not non-increasing")
    if rho.sup > 1.0 + 1e-15 and rho.family != "constant":
        problems.append("sup rho exceeds 1")
    return problems


def g_alpha(alpha: float, mu: float, s: float) -> float:
    """Schedule function: ``log(1+s)**(alpha/(1-alpha))`` or ``s**mu`` at alpha=1."""
    return math.exp(log_g_alpha(alpha, mu, math.log(s)))


def log_g_alpha(alpha: float, mu: float, log_s: float) -> float:
    """``log g_alpha(exp(log_s))``, stable for huge ``s``."""
    if alpha == 1.0:
        return mu * log_s
    # log(1 + s) = logaddexp(0, log_s)
    return alpha / (1.0 - alpha) * math.log(np.logaddexp(0.0, log_s))


def gamma_of_alpha(alpha: float) -> float:
    """Stepsize constant that makes the asymptotic constant equal to 1."""
    if not 0.5 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (1/2, 1], got {alpha}")
    if alpha == 1.0:
        return 1.0
    log_gamma = -alpha / (1.0 - alpha) * math.log1p(-alpha)
    if log_gamma > 700.0:
        raise DomainError(f"gamma(alpha) overflows for alpha={alpha}")
    return math.exp(log_gamma)


@dataclass(frozen=True)
class BiasSpec:
    """Reweighting function plus schedule parameters ``(alpha, mu, gamma)``.

    ``gamma=None`` selects :func:`gamma_of_alpha`.
    """

    rho: Rho = field(default_factory=Rho)
    alpha: float = 1.0
    mu: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (1/2, 1], got {self.alpha}")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", gamma_of_alpha(self.alpha))
        elif not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        problems = check_rho(self.rho)
        if self.rho.family == "power" and self.rho.a == 1.0:
            # t -> t violates the strict decay of rho(t)/t but is the classical case
            warnings.warn("rho(t) = t is outside the convergence assumptions for rho",
                          stacklevel=3)
        elif problems:
            raise DomainError("; ".join(problems))

    @property
    def a(self) -> float:
        return self.rho.exponent


@dataclass
class OccupationState:
    """Log occupation vector with cached normalizer and weights.

    Owned by a single chain.  ``theta`` is recomputed from the logs on every
    refresh, never updated incrementally.
    """

    log_occ: np.ndarray
    n: int = 0
    log_S: float = field(init=False)
    theta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.log_occ = np.array(self.log_occ, dtype=float)
        self.refresh()

    @classmethod
    def from_occupation(cls, occ, n: int = 0) -> "OccupationState":
        occ = np.asarray(occ, dtype=float)
        if np.any(occ <= 0):
            raise DomainError("initial occupation must be componentwise positive")
        return cls(np.log(occ), n=n)

    @classmethod
    def uniform(cls, d: int, total: float = 1.0) -> "OccupationState":
        return cls.from_occupation(np.full(d, total / d))

    @property
    def d(self) -> int:
        return self.log_occ.size

    def refresh(self):
        self.log_S = float(logsumexp(self.log_occ))
        self.theta = np.exp(self.log_occ - self.log_S)

    def copy(self) -> "OccupationState":
        return OccupationState(self.log_occ.copy(), n=self.n)


def log_stepsize(spec: BiasSpec, state: OccupationState) -> float:
    return math.log(spec.gamma) - log_g_alpha(spec.alpha, spec.mu, state.log_S)


def stepsize(spec: BiasSpec, state: OccupationState) -> float:
    """``gamma / g_alpha(S_n)``: the stepsize of the next update."""
    return math.exp(log_stepsize(spec, state))


def shus_update(state: OccupationState, spec: BiasSpec, hit: int) -> OccupationState:
    """Additive update of the hit stratum: ``+ gamma_{n+1} S_n rho(theta_n(hit))``."""
    i = hit - 1
    log_inc = log_stepsize(spec, state) + state.log_S + float(spec.rho.log(state.theta[i]))
    log_occ = state.log_occ.copy()
    log_occ[i] = np.logaddexp(log_occ[i], log_inc)
    return OccupationState(log_occ, n=state.n + 1)


def wl_update(state: OccupationState, gamma_n1: float, rho: Rho, hit: int) -> OccupationState:
    """Multiplicative update ``x (1 + gamma_{n+1} rho(theta)/theta)`` of the hit stratum."""
    i = hit - 1
    log_occ = state.log_occ.copy()
    if gamma_n1 > 0:
        t = state.theta[i]
        log_occ[i] += math.log1p(gamma_n1 * float(rho(t)) / t)
    return OccupationState(log_occ, n=state.n + 1)


def wt_param_map(T: float, deltaT: float, omega: float, h: float) -> dict:
    """Parameters of the discrete well-tempered metadynamics analogue.

    Returns ``gamma``, ``a``, ``mu = 1 - a`` and ``alpha = 1``.
    """
    for name, v in (("T", T), ("deltaT", deltaT), ("omega", omega), ("h", h)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")
    a = deltaT / (T + deltaT)
    return {
        "gamma": omega * h * (T + deltaT) / (T * deltaT),
        "a": a,
        "mu": 1.0 - a,
        "alpha": 1.0,
    }


def biased_logdensity(target, partition: Partition, theta, rho: Rho):
    """Return ``x -> log pi(x) - log rho(theta(I(x)))`` (unnormalized)."""
    log_rho = np.asarray(rho.log(np.asarray(theta, dtype=float)), dtype=float)

    def logdensity(x) -> float:
        lp = target_logdensity(target, x)
        if lp == -math.inf:
            return lp
        return lp - float(log_rho[stratum_index(partition, x) - 1])

    return logdensity

