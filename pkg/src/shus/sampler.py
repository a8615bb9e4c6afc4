"""Adaptive sampling loops and the stochastic-approximation view of their updates."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _loops
from .bias import BiasSpec, Rho
from .kernel import ProposalSpec, _rho_args
from .model import ContinuousTarget, DomainError, Partition, ToyTarget, stratum_index

SCHEDULES = {"shus": _loops.SCHED_SHUS, "power": _loops.SCHED_POWER}

_ERRORS = {
    _loops.ERR_SIMPLEX: "theta left the open simplex",
    _loops.ERR_GAMMA: "stepsize increased",
    _loops.ERR_LAMBDA: "remainder term exceeded its bound",
    _loops.ERR_RECON: "stochastic-approximation decomposition does not reproduce theta",
}


class InvariantViolation(RuntimeError):
    """A verification-mode check failed during a run."""


@dataclass(frozen=True)
class SamplerConfig:
    """Everything needed to reproduce one adaptive run.

    ``schedule`` is ``"shus"`` (stepsize ``gamma / g_alpha(S_n)``) or
    ``"power"`` (deterministic ``schedule_c / n**alpha`` with the multiplicative
    update).  ``x0`` is a 1-based state for the toy target and a point for the
    plane.  ``init_occupation=None`` means uniform ``1/d``.
    """

    target: ToyTarget | ContinuousTarget
    partition: Partition
    bias: BiasSpec
    n_steps: int
    seed: int = 0
    proposal: ProposalSpec = field(default_factory=ProposalSpec)
    schedule: str = "shus"
    schedule_c: float = 1.0
    x0: object = None
    init_occupation: tuple | None = None
    stride: int = 1
    theta_stride: int = 1000
    position_stride: int = 0
    verify: bool = False
    track_is: bool = True

    def __post_init__(self):
        if self.n_steps < 1:
            raise DomainError("n_steps must be at least 1")
        if self.schedule not in SCHEDULES:
            raise DomainError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "power" and not self.schedule_c > 0:
            raise DomainError("power schedule needs schedule_c > 0")
        if min(self.stride, self.theta_stride, self.position_stride) < 0:
            raise DomainError("strides must be non-negative")
        if self.init_occupation is not None:
            occ = np.asarray(self.init_occupation, dtype=float)
            if occ.shape != (self.partition.d,) or np.any(occ <= 0):
                raise DomainError("init_occupation must be d positive values")
        if isinstance(self.target, ToyTarget) != self.partition.is_identity:
            raise DomainError("toy targets need the identity partition, plane targets a grid")
        if isinstance(self.target, ContinuousTarget):
            e = self.partition.edges
            if not (math.isclose(e[0], -self.target.R) and math.isclose(e[-1], self.target.R)):
                raise DomainError("partition edges must span [-R, R]")
        x0 = self.start
        if isinstance(self.target, ContinuousTarget) and abs(x0[0]) > self.target.R:
            raise DomainError("x0 lies outside the support")

    @property
    def start(self):
        if isinstance(self.target, ToyTarget):
            x0 = 1 if self.x0 is None else int(self.x0)
            stratum_index(self.partition, x0)
            return x0
        return np.array((-1.0, 0.0) if self.x0 is None else self.x0, dtype=float)

    @property
    def occupation0(self) -> np.ndarray:
        if self.init_occupation is None:
            return np.full(self.partition.d, 1.0 / self.partition.d)
        return np.asarray(self.init_occupation, dtype=float)


@dataclass
class RunRecord:
    """Strided time series of one run plus whole-run accumulators.

    Series entry ``k`` describes iteration ``n[k]`` (1-based): ``gamma`` is the
    stepsize that produced it, ``hit`` the stratum of ``X_n``, ``log_S`` the
    normalizer after the update, ``is_weight`` the importance weight of
    ``X_n`` computed from ``theta_{n-1}``.  ``visits`` and ``is_sums`` cover
    every iteration regardless of stride.
    """

    d: int
    alpha: float
    mu: float
    a: float
    stride: int
    theta_stride: int
    n_done: int
    n: np.ndarray
    gamma: np.ndarray
    hit: np.ndarray
    log_S: np.ndarray
    is_weight: np.ndarray
    theta_n: np.ndarray
    theta: np.ndarray
    visits: np.ndarray
    is_sums: np.ndarray
    final_log_occ: np.ndarray
    final_x: object
    positions: np.ndarray | None = None
    events: dict = field(default_factory=dict)

    @property
    def final_theta(self) -> np.ndarray:
        t = np.exp(self.final_log_occ - self.final_log_occ.max())
        return t / t.sum()

    def is_estimate(self, f_by_stratum) -> float:
        """Online importance-sampling estimate of a stratum-level observable."""
        return float(np.dot(self.is_sums, np.asarray(f_by_stratum, dtype=float)) / self.n_done)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "gamma_n", "hit", "log_S"])
        for row in zip(self.n, self.gamma, self.hit, self.log_S):
            w.writerow([int(row[0]), repr(float(row[1])), int(row[2]), repr(float(row[3]))])
        return buf.getvalue()

    def theta_bytes(self) -> bytes:
        """Binary snapshot: little-endian u64 header ``d, stride, count`` then f64 rows."""
        rows = np.ascontiguousarray(self.theta, dtype="<f8")
        return struct.pack("<QQQ", self.d, self.theta_stride, rows.shape[0]) + rows.tobytes()


def read_theta_bytes(blob: bytes) -> tuple[int, int, np.ndarray]:
    d, stride, count = struct.unpack_from("<QQQ", blob, 0)
    rows = np.frombuffer(blob, dtype="<f8", offset=24, count=d * count).reshape(count, d)
    return d, stride, rows


def run(config: SamplerConfig, rng: np.random.Generator | None = None,
        exit_x1: float = math.inf, exit_state: int | None = None) -> RunRecord:
    """Execute the adaptive loop: normalize, MH step under ``theta_n``, update.

    An optional exit condition stops the run early (first ``x1 > exit_x1`` on
    the plane, first visit of ``exit_state`` on the toy model); the stopping
    iteration is stored in ``events["exit_step"]``.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    d = config.partition.d
    N = int(config.n_steps)
    stride, theta_stride = int(config.stride), int(config.theta_stride)
    n_rec = N // stride if stride else 0
    n_theta = N // theta_stride if theta_stride else 0
    out_gamma = np.zeros(n_rec)
    out_hit = np.zeros(n_rec, dtype=np.int64)
    out_logS = np.zeros(n_rec)
    out_w = np.zeros(n_rec)
    out_theta = np.zeros((n_theta, d))
    visits = np.zeros(d, dtype=np.int64)
    is_sums = np.zeros(d)
    log_occ = np.log(config.occupation0)
    bias = config.bias
    tail = (SCHEDULES[config.schedule], float(config.schedule_c), math.log(bias.gamma),
            float(bias.alpha), float(bias.mu), stride, theta_stride, bool(config.verify),
            bool(config.track_is))
    positions = None
    if isinstance(config.target, ToyTarget):
        log_pi = np.log(config.target.probabilities)
        es = -1 if exit_state is None else int(exit_state) - 1
        n_done, exit_step, err, x = _loops.toy_loop(
            rng, log_pi, config.start - 1, log_occ, N, True, *_rho_args(bias.rho), *tail, es,
            out_gamma, out_hit, out_logS, out_w, out_theta, visits, is_sums)
        final_x = int(x) + 1
    else:
        t = config.target
        x = config.start.copy()
        ps = int(config.position_stride)
        out_pos = np.zeros((N // ps if ps else 0, 2))
        n_done, exit_step, err = _loops.plane_loop(
            rng, float(t.beta), float(t.R), config.partition.edges, config.proposal.sigma, x,
            log_occ, N, True, *_rho_args(bias.rho), *tail, float(exit_x1), ps,
            out_gamma, out_hit, out_logS, out_w, out_theta, out_pos, visits, is_sums)
        final_x = x
        positions = out_pos[: n_done // ps] if ps else None
    if err:
        raise InvariantViolation(f"{_ERRORS[err]} at iteration {n_done}")
    k = n_done // stride if stride else 0
    kt = n_done // theta_stride if theta_stride else 0
    events = {"exit_step": int(exit_step)} if exit_step >= 0 else {}
    return RunRecord(
        d=d, alpha=bias.alpha, mu=bias.mu, a=bias.a, stride=stride, theta_stride=theta_stride,
        n_done=int(n_done),
        n=np.arange(1, k + 1) * stride, gamma=out_gamma[:k], hit=out_hit[:k],
        log_S=out_logS[:k], is_weight=out_w[:k],
        theta_n=np.arange(1, kt + 1) * theta_stride, theta=out_theta[:kt],
        visits=visits, is_sums=is_sums, final_log_occ=log_occ, final_x=final_x,
        positions=positions, events=events,
    )


def field_H(hit: int, theta, rho: Rho) -> np.ndarray:
    """Update direction ``rho(theta(hit)) (e_hit - theta)``."""
    theta = np.asarray(theta, dtype=float)
    e = np.zeros_like(theta)
    e[hit - 1] = 1.0
    return float(rho(theta[hit - 1])) * (e - theta)


def mean_field_h(theta, theta_star, rho: Rho) -> np.ndarray:
    """Average of :func:`field_H` under the biased target at fixed ``theta``."""
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    return (theta_star - theta) / np.sum(theta_star / rho(theta))


def sa_decompose(theta_n, hit: int, gamma_n1: float, rho: Rho) -> tuple[np.ndarray, np.ndarray]:
    """Next weights and remainder ``Lambda`` with ``theta' = theta + g H + g Lambda``."""
    theta_n = np.asarray(theta_n, dtype=float)
    i = hit - 1
    r = float(rho(theta_n[i]))
    e = np.zeros_like(theta_n)
    e[i] = 1.0
    theta_next = theta_n * (1.0 + gamma_n1 * r * e / theta_n) / (1.0 + gamma_n1 * r)
    lam = gamma_n1 * r**2 / (1.0 + gamma_n1 * r) * (theta_n - e)
    return theta_next, lam
