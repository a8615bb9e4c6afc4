"""Exit-time campaigns, the deterministic toy recursion and slope fits.

Seeds
-----
Trial ``(grid index g, replica r)`` of a campaign with master seed ``m`` uses
``derive_seed(m, g, r)``, built from the SplitMix64 finalizer::

    h = mix(m); h = mix(h ^ mix(g)); h = mix(h ^ mix(r))

Seeds do not depend on the parameter set, so every parameter set of a
campaign sees the same random streams (common random numbers), and raising
``K`` leaves the first ``K`` trials untouched.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bias import BiasSpec, log_g_alpha
from .kernel import ProposalSpec
from .model import ContinuousTarget, Partition, ToyTarget
from .sampler import SamplerConfig, run

MASK64 = (1 << 64) - 1
TOY_CAP = 10**9
PLANE_CAP = 10**8


def mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    h = mix64(master & MASK64)
    for k in keys:
        h = mix64(h ^ mix64(k & MASK64))
    return h


def exit_time_trial_2d(config: SamplerConfig, seed: int, exit_x1: float = 1.0) -> int | None:
    """Iterations until ``x1 > exit_x1``; ``None`` if ``config.n_steps`` is reached first."""
    cfg = replace(config, seed=seed, stride=0, theta_stride=0, position_stride=0,
                  track_is=False, verify=False)
    rec = run(cfg, exit_x1=exit_x1)
    return rec.events.get("exit_step")


def exit_time_trial_toy(epsilon: float, bias: BiasSpec, seed: int, cap: int = TOY_CAP) -> int | None:
    """Iterations to go from state 1 to state 3, starting from uniform occupation."""
    cfg = SamplerConfig(ToyTarget(epsilon), Partition.identity(3), bias, n_steps=cap, seed=seed,
                        x0=1, stride=0, theta_stride=0, track_is=False)
    return run(cfg, exit_state=3).events.get("exit_step")


def toy_deterministic_u(n: int, bias: BiasSpec) -> float:
    """Occupation of state 1 after ``n`` iterations spent in state 1.

    Iterates ``u <- u + gamma S / g_alpha(S) rho(u / S)`` with ``S = u + 2/3``
    from ``u_0 = 1/3``, in log space.
    """
    log_u = math.log(1.0 / 3.0)
    log_two_thirds = math.log(2.0 / 3.0)
    log_gamma = math.log(bias.gamma)
    for _ in range(n):
        log_S = float(np.logaddexp(log_u, log_two_thirds))
        log_inc = (log_gamma + log_S - log_g_alpha(bias.alpha, bias.mu, log_S)
                   + float(bias.rho.log(math.exp(log_u - log_S))))
        log_u = float(np.logaddexp(log_u, log_inc))
    return math.exp(log_u)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    n_points: int


def _fit(x, y) -> SlopeFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y lengths differ")
    if x.size < 3:
        raise ValueError("slope fits need at least 3 grid points")
    if np.ptp(x) == 0 or not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("degenerate grid")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.linalg.norm(A @ coef - y))
    return SlopeFit(float(coef[0]), float(coef[1]), resid, int(x.size))


def fit_exp_slope(betas, mean_times) -> SlopeFit:
    """Least-squares slope of ``ln t`` against ``beta``."""
    return _fit(betas, np.log(mean_times))


def fit_loglog_slope(xs, mean_times) -> SlopeFit:
    """Least-squares slope of ``ln t`` against ``ln x``."""
    return _fit(np.log(xs), np.log(mean_times))


@dataclass(frozen=True)
class ExitCampaignSpec:
    """Grid of ``beta`` (plane) or ``epsilon`` (toy) crossed with bias parameter sets.

    For the plane, ``R``, ``d``, ``sigma2``, ``x0`` and ``exit_x1`` describe
    the model and start; they are ignored for the toy model.
    """

    kind: str
    grid: tuple
    biases: tuple
    K: int
    cap: int | None = None
    master_seed: int = 0
    R: float = 1.2
    d: int = 24
    sigma2: float = 0.01
    x0: tuple = (-1.0, 0.0)
    exit_x1: float = 1.0
    rel_stderr_flag: float = 0.05

    def __post_init__(self):
        if self.kind not in ("toy", "plane"):
            raise ValueError(f"unknown campaign kind {self.kind!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if len(self.grid) == 0 or len(self.biases) == 0:
            raise ValueError("campaign grid and parameter sets must be nonempty")

    @property
    def resolved_cap(self) -> int:
        if self.cap is not None:
            return int(self.cap)
        return TOY_CAP if self.kind == "toy" else PLANE_CAP

    @property
    def n_trials(self) -> int:
        return len(self.grid) * len(self.biases) * self.K


@dataclass
class CampaignRow:
    set_id: int
    alpha: float
    a: float
    mu: float
    grid_value: float
    K: int
    mean: float
    stderr: float
    capped: int
    flagged: bool
    times: list = field(repr=False, default_factory=list)


def _trial(task) -> int | None:
    spec, set_id, g, r = task
    bias = spec.biases[set_id]
    seed = derive_seed(spec.master_seed, g, r)
    value = spec.grid[g]
    if spec.kind == "toy":
        return exit_time_trial_toy(value, bias, seed, spec.resolved_cap)
    cfg = SamplerConfig(ContinuousTarget(beta=value, R=spec.R), Partition.uniform(spec.R, spec.d),
                        bias, n_steps=spec.resolved_cap, proposal=ProposalSpec(spec.sigma2),
                        x0=spec.x0)
    return exit_time_trial_2d(cfg, seed, spec.exit_x1)


def campaign(spec: ExitCampaignSpec, jobs: int = 1) -> list[CampaignRow]:
    """Run every trial of the campaign; rows ordered by (parameter set, grid index)."""
    tasks = [(spec, s, g, r) for s in range(len(spec.biases))
             for g in range(len(spec.grid)) for r in range(spec.K)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial, tasks, chunksize=max(1, spec.K // 4)))
    else:
        results = [_trial(t) for t in tasks]
    rows = []
    it = iter(results)
    for s, bias in enumerate(spec.biases):
        for g, value in enumerate(spec.grid):
            times = [next(it) for _ in range(spec.K)]
            done = np.array([t for t in times if t is not None], dtype=float)
            capped = spec.K - done.size
            mean = float(done.mean()) if done.size else math.nan
            se = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else math.nan
            flagged = not (done.size > 1 and se / mean <= spec.rel_stderr_flag)
            rows.append(CampaignRow(s, bias.alpha, bias.a, bias.mu, float(value), spec.K,
                                    mean, se, capped, flagged, times))
    return rows


def campaign_fits(spec: ExitCampaignSpec, rows: list[CampaignRow]) -> dict[int, SlopeFit | None]:
    """Slope fit per parameter set, using the scaling law suited to ``(kind, alpha)``.

    Toy: ``ln t`` vs ``ln(1/epsilon)`` for ``alpha = 1``, vs ``ln|ln epsilon|``
    otherwise.  Plane: ``ln t`` vs ``beta`` for ``alpha = 1``, vs ``ln beta``
    otherwise.  Sets with fewer than 3 usable grid points get ``None``.
    """
    fits = {}
    for s, bias in enumerate(spec.biases):
        sel = [r for r in rows if r.set_id == s and np.isfinite(r.mean)]
        if len(sel) < 3:
            fits[s] = None
            continue
        x = np.array([r.grid_value for r in sel])
        t = np.array([r.mean for r in sel])
        if spec.kind == "toy":
            xs = 1.0 / x if bias.alpha == 1.0 else np.abs(np.log(x))
            fits[s] = fit_loglog_slope(xs, t)
        else:
            fits[s] = fit_exp_slope(x, t) if bias.alpha == 1.0 else fit_loglog_slope(x, t)
    return fits


def campaign_csv(rows: list[CampaignRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["grid_value", "alpha", "a", "mu", "K", "mean_steps", "stderr", "capped",
                "flagged", "slope_fit_id"])
    for r in rows:
        w.writerow([repr(r.grid_value), repr(r.alpha), repr(r.a), repr(r.mu), r.K, repr(r.mean),
                    repr(r.stderr), r.capped, int(r.flagged), r.set_id])
    return buf.getvalue()


def fits_csv(fits: dict[int, SlopeFit | None]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "slope", "intercept", "residual"])
    for i, f in sorted(fits.items()):
        if f is None:
            w.writerow([i, "nan", "nan", "nan"])
        else:
            w.writerow([i, repr(f.slope), repr(f.intercept), repr(f.residual)])
    return buf.getvalue()
