"""Target distributions, stratum partitions and reference stratum weights.

Two targets are built in:

* :class:`ContinuousTarget` -- the two-well potential on ``[-R, R] x R`` at
  inverse temperature ``beta``;
* :class:`ToyTarget` -- three states ``{1, 2, 3}`` where the middle state has
  small probability ``epsilon / (2 + epsilon)``.

All densities are unnormalized.  Stratum labels are 1-based throughout the
public API, matching the ``1..d`` convention of the CSV outputs; weight
vectors are ordinary 0-based numpy arrays, so stratum ``i`` lives at
``theta[i - 1]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson


class DomainError(ValueError):
    """A point or parameter lies outside the domain of an operation."""


class QuadratureError(RuntimeError):
    """Quadrature refinement failed to reach the requested tolerance."""


def potential_2d(x1, x2):
    """Two-well potential; accepts scalars or broadcastable arrays."""
    return (
        3.0 * np.exp(-x1**2 - (x2 - 1.0 / 3.0) ** 2)
        - 3.0 * np.exp(-x1**2 - (x2 - 5.0 / 3.0) ** 2)
        - 5.0 * np.exp(-((x1 - 1.0) ** 2) - x2**2)
        - 5.0 * np.exp(-((x1 + 1.0) ** 2) - x2**2)
        + 0.2 * x1**4
        + 0.2 * (x2 - 1.0 / 3.0) ** 4
    )


def potential_2d_grad(x1, x2):
    """Analytic gradient of :func:`potential_2d` as ``(dV/dx1, dV/dx2)``."""
    e1 = 3.0 * np.exp(-x1**2 - (x2 - 1.0 / 3.0) ** 2)
    e2 = -3.0 * np.exp(-x1**2 - (x2 - 5.0 / 3.0) ** 2)
    e3 = -5.0 * np.exp(-((x1 - 1.0) ** 2) - x2**2)
    e4 = -5.0 * np.exp(-((x1 + 1.0) ** 2) - x2**2)
    g1 = (
        -2.0 * x1 * e1
        - 2.0 * x1 * e2
        - 2.0 * (x1 - 1.0) * e3
        - 2.0 * (x1 + 1.0) * e4
        + 0.8 * x1**3
    )
    g2 = (
        -2.0 * (x2 - 1.0 / 3.0) * e1
        - 2.0 * (x2 - 5.0 / 3.0) * e2
        - 2.0 * x2 * e3
        - 2.0 * x2 * e4
        + 0.8 * (x2 - 1.0 / 3.0) ** 3
    )
    return g1, g2


POTENTIALS = {"two-well": potential_2d}


@dataclass(frozen=True)
class ContinuousTarget:
    """Density ``1_{[-R, R]}(x1) exp(-beta V(x1, x2))`` on the plane."""

    beta: float
    R: float = 1.2
    potential: str = "two-well"

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R}")
        if self.potential not in POTENTIALS:
            raise DomainError(f"unknown potential {self.potential!r}")

    kind = "continuous"

    def energy(self, x1, x2):
        return POTENTIALS[self.potential](x1, x2)


@dataclass(frozen=True)
class ToyTarget:
    """Three-state target with ``pi = (1, epsilon, 1) / (2 + epsilon)``."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    kind = "toy"
    n_states = 3

    @property
    def probabilities(self) -> np.ndarray:
        eps = self.epsilon
        return np.array([1.0, eps, 1.0]) / (2.0 + eps)

    @property
    def proposal(self) -> np.ndarray:
        """Nearest-neighbour proposal matrix (symmetric)."""
        t = 1.0 / 3.0
        return np.array([[2 * t, t, 0.0], [t, t, t], [0.0, t, 2 * t]])


@dataclass(frozen=True)
class Partition:
    """Stratification of the state space.

    With ``edges`` set, stratum ``l`` is ``[edges[l-1], edges[l])`` in ``x1``,
    the last one closed on the right.  With ``edges=None`` the partition is the
    identity on the states ``1..d`` (toy model).
    """

    d: int
    edges: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("a partition needs at least one stratum")
        if self.edges is not None:
            edges = np.asarray(self.edges, dtype=float)
            if edges.shape != (self.d + 1,) or not np.all(np.diff(edges) > 0):
                raise DomainError("edges must be d+1 strictly increasing values")
            edges.setflags(write=False)
            object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, R: float, d: int) -> "Partition":
        """Grid ``a_l = -R + 2 (l - 1) R / d`` for ``l = 1..d+1``."""
        return cls(d=d, edges=np.linspace(-R, R, d + 1))

    @classmethod
    def identity(cls, d: int = 3) -> "Partition":
        return cls(d=d, edges=None)

    @property
    def is_identity(self) -> bool:
        return self.edges is None


def target_logdensity(target, x) -> float:
    """Unnormalized log-density; ``-inf`` outside the support."""
    if isinstance(target, ToyTarget):
        s = int(x)
        if s not in (1, 2, 3):
            return -math.inf
        return math.log(target.probabilities[s - 1])
    x1, x2 = float(x[0]), float(x[1])
    if abs(x1) > target.R:
        return -math.inf
    return float(-target.beta * target.energy(x1, x2))


def stratum_index(partition: Partition, x) -> int:
    """1-based stratum label of a state (toy) or point (continuous)."""
    if partition.is_identity:
        s = int(x)
        if not 1 <= s <= partition.d:
            raise DomainError(f"state {x!r} is not in 1..{partition.d}")
        return s
    x1 = float(np.ravel(x)[0]) if np.ndim(x) else float(x)
    edges = partition.edges
    if not edges[0] <= x1 <= edges[-1]:
        raise DomainError(f"x1={x1} outside [{edges[0]}, {edges[-1]}]")
    idx = int(np.searchsorted(edges, x1, side="right"))
    return min(idx, partition.d)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson on ``[-R, R] x [x2_min, x2_max]`` with refinement.

    ``n1`` and ``n2`` are the initial interval counts per stratum along ``x1``
    and over the whole window along ``x2``; both double at every level.
    """

    x2_min: float = -5.0
    x2_max: float = 6.0
    n1: int = 8
    n2: int = 256
    rtol: float = 1e-8
    max_levels: int = 8


def _stratum_masses(target: ContinuousTarget, partition: Partition, n1: int, n2: int,
                    quad: QuadratureSpec) -> np.ndarray:
    x2 = np.linspace(quad.x2_min, quad.x2_max, n2 + 1)
    masses = np.empty(partition.d)
    for ell in range(partition.d):
        x1 = np.linspace(partition.edges[ell], partition.edges[ell + 1], n1 + 1)
        f = np.exp(-target.beta * target.energy(x1[:, None], x2[None, :]))
        masses[ell] = simpson(simpson(f, x=x2, axis=1), x=x1)
    return masses


def reference_weights(target, partition: Partition, quad: QuadratureSpec | None = None) -> np.ndarray:
    """Stratum probabilities ``theta_star`` under the (normalized) target."""
    if isinstance(target, ToyTarget):
        if partition.d != 3 or not partition.is_identity:
            raise DomainError("the toy target uses the identity partition on 3 states")
        return target.probabilities
    quad = quad or QuadratureSpec()
    if not (np.isclose(partition.edges[0], -target.R) and np.isclose(partition.edges[-1], target.R)):
        raise DomainError("partition edges must span [-R, R]")
    n1, n2 = quad.n1, quad.n2
    prev = _stratum_masses(target, partition, n1, n2, quad)
    for _ in range(quad.max_levels):
        n1, n2 = 2 * n1, 2 * n2
        cur = _stratum_masses(target, partition, n1, n2, quad)
        if np.max(np.abs(cur / prev - 1.0)) < quad.rtol:
            return cur / cur.sum()
        prev = cur
    raise QuadratureError(
        f"stratum masses did not converge to rtol={quad.rtol} after {quad.max_levels} refinements"
    )


def toy_transition_matrix(theta, epsilon: float, a: float) -> np.ndarray:
    """Exact Metropolis-Hastings matrix on ``{1, 2, 3}`` targeting ``pi / theta**a``."""
    theta = np.asarray(theta, dtype=float)
    target = ToyTarget(epsilon)
    biased = target.probabilities / theta**a
    Q = target.proposal
    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            if i != j and Q[i, j] > 0:
                P[i, j] = Q[i, j] * min(1.0, biased[j] / biased[i])
        P[i, i] = 1.0 - P[i].sum()
    return P


def weights_csv(partition: Partition, theta_star) -> str:
    """CSV text with columns ``index, a_left, a_right, theta_star``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "a_left", "a_right", "theta_star"])
    for i, t in enumerate(theta_star, start=1):
        if partition.is_identity:
            left, right = i, i
        else:
            left, right = repr(float(partition.edges[i - 1])), repr(float(partition.edges[i]))
        w.writerow([i, left, right, repr(float(t))])
    return buf.getvalue()
