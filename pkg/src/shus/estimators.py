"""Importance-sampling estimators, sample-size diagnostics and stepsize diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bias import Rho


@dataclass(frozen=True)
class WeightedSample:
    value: float
    weight: float

    def __post_init__(self):
        if not (np.isfinite(self.weight) and self.weight > 0):
            raise ValueError(f"weight must be finite and positive, got {self.weight}")


@dataclass
class ISAccumulator:
    """Running sum of online importance-sampling summands."""

    total: float = 0.0
    count: int = 0

    @property
    def mean(self) -> float:
        if self.count == 0:
            raise ValueError("no samples accumulated")
        return self.total / self.count


def is_weight(theta_prev, hit: int, rho: Rho) -> float:
    """``(sum_i theta(i) / rho(theta(i))) * rho(theta(hit))``."""
    theta_prev = np.asarray(theta_prev, dtype=float)
    r = rho(theta_prev)
    return float(np.sum(theta_prev / r) * r[hit - 1])


def online_is_update(acc: ISAccumulator, theta_prev, hit: int, f_value: float, rho: Rho) -> ISAccumulator:
    """Add the summand for ``X_k`` (in stratum ``hit``) using ``theta_{k-1}``."""
    return ISAccumulator(acc.total + is_weight(theta_prev, hit, rho) * f_value, acc.count + 1)


def static_is_estimate(samples, theta_star, a: float) -> float:
    """Estimate ``int f pi`` from ``(stratum, f_value)`` pairs drawn under ``pi / theta_star**a``."""
    if len(samples) == 0:
        raise ValueError("static_is_estimate needs at least one sample")
    theta_star = np.asarray(theta_star, dtype=float)
    strata = np.array([s for s, _ in samples], dtype=int)
    values = np.array([v for _, v in samples], dtype=float)
    z = np.sum(theta_star ** (1.0 - a))
    return float(z * np.mean(theta_star[strata - 1] ** a * values))


def ess(weights) -> float:
    """Kong's effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("ess needs at least one weight")
    if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and positive")
    w = w / w.max()
    return float(w.sum() ** 2 / np.sum(w * w))


def ef_limit(theta_star, a: float) -> float:
    """Asymptotic efficiency factor of the ``t**a``-reweighted estimator."""
    t = np.asarray(theta_star, dtype=float)
    return float(1.0 / (np.sum(t ** (1.0 - a)) * np.sum(t ** (1.0 + a))))


def g_frak(theta_star, a: float) -> float:
    """``sum_i theta_star(i)**(1 - a)``, the limit of ``n gamma_n**(1/alpha)``."""
    return float(np.sum(np.asarray(theta_star, dtype=float) ** (1.0 - a)))


@dataclass
class StepsizeDiagnostic:
    """Replica-averaged ``n gamma_n**(1/alpha)`` (and its stderr) at matched ``n``.

    ``normalized`` is ``mu n gamma_n / g(a)`` for ``alpha = 1`` when a
    reference ``g(a)`` was supplied, otherwise ``None``.
    """

    n: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    normalized: np.ndarray | None
    normalized_stderr: np.ndarray | None
    values: np.ndarray

    @property
    def replicas(self) -> int:
        return self.values.shape[0]

    def plateau(self, start_fraction: float = 0.9, n_min: int | None = None) -> tuple[float, float]:
        """Mean over the tail of the curve and the replica standard error of that mean.

        The tail is ``n >= n_min`` if given, else the last ``1 - start_fraction``
        of the recorded range.
        """
        lo = n_min if n_min is not None else start_fraction * self.n[-1]
        tails = self.values[:, self.n >= lo].mean(axis=1)
        K = tails.size
        se = tails.std(ddof=1) / np.sqrt(K) if K > 1 else 0.0
        return float(tails.mean()), float(se)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mean", "stderr"])
        for n, m, s in zip(self.n, self.mean, self.stderr):
            w.writerow([int(n), repr(float(m)), repr(float(s))])
        return buf.getvalue()


def effective_steps(record, alpha: float) -> np.ndarray:
    """``n gamma_n**(1/alpha)`` for one record."""
    return record.n * record.gamma ** (1.0 / alpha)


def stepsize_diagnostic(records, alpha: float, mu: float, g_ref: float | None = None) -> StepsizeDiagnostic:
    records = list(records)
    if not records:
        raise ValueError("no records")
    a = records[0].a
    for r in records:
        if (r.alpha, r.mu, r.a) != (alpha, mu, a):
            raise ValueError("records disagree on (alpha, mu, a)")
        if not np.array_equal(r.n, records[0].n):
            raise ValueError("records are sampled at different iterations")
    vals = np.stack([effective_steps(r, alpha) for r in records])
    K = vals.shape[0]
    se = vals.std(axis=0, ddof=1) / np.sqrt(K) if K > 1 else np.zeros(vals.shape[1])
    normalized = normalized_se = None
    if alpha == 1.0 and g_ref is not None:
        normalized = mu * vals.mean(axis=0) / g_ref
        normalized_se = mu * se / g_ref
    return StepsizeDiagnostic(records[0].n.copy(), vals.mean(axis=0), se, normalized, normalized_se, vals)


def ef_scan_csv(theta_star, a_grid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "EF"])
    for a in a_grid:
        w.writerow([repr(float(a)), repr(ef_limit(theta_star, a))])
    return buf.getvalue()
