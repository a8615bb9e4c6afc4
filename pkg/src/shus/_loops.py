"""Compiled inner loops for the adaptive samplers.

Everything here works on plain arrays and scalars so that numba can compile
it; the public wrappers live in :mod:`shus.sampler` and :mod:`shus.kernel`.
Random draws come from a numpy ``Generator`` passed in by the caller, in this
order per step: proposal draws, then at most one uniform for acceptance.
"""

import math

import numpy as np
from numba import njit

SCHED_SHUS = 0
SCHED_POWER = 1

ERR_NONE = 0
ERR_SIMPLEX = 1
ERR_GAMMA = 2
ERR_LAMBDA = 3
ERR_RECON = 4

SQRT2 = math.sqrt(2.0)


@njit(cache=True)
def log_rho(code, a, log_t0, log_c, log_t):
    if code == 2:
        return log_c
    if code == 1 and log_t < log_t0:
        log_t = log_t0
    if a == 0.0:
        return 0.0
    return a * log_t


@njit(cache=True)
def log_g(alpha, mu, log_s):
    if alpha == 1.0:
        return mu * log_s
    if log_s > 0.0:
        sp = log_s + math.log1p(math.exp(-log_s))
    else:
        sp = math.log1p(math.exp(log_s))
    return alpha / (1.0 - alpha) * math.log(sp)


@njit(cache=True)
def logsumexp(v):
    m = v[0]
    for i in range(1, v.size):
        if v[i] > m:
            m = v[i]
    s = 0.0
    for i in range(v.size):
        s += math.exp(v[i] - m)
    return m + math.log(s)


@njit(cache=True)
def logaddexp(x, y):
    if x > y:
        return x + math.log1p(math.exp(y - x))
    return y + math.log1p(math.exp(x - y))


@njit(cache=True)
def next_log_gamma(sched, sched_c, log_gamma, alpha, mu, log_S, n):
    """Log of the stepsize used for the update producing iteration ``n + 1``."""
    if sched == SCHED_SHUS:
        return log_gamma - log_g(alpha, mu, log_S)
    return math.log(sched_c) - alpha * math.log(n + 1.0)


@njit(cache=True)
def apply_update(log_occ, hit, sched, lgam, log_S, lr_hit):
    """Occupation update of stratum ``hit`` (0-based) in place."""
    if sched == SCHED_SHUS:
        log_occ[hit] = logaddexp(log_occ[hit], lgam + log_S + lr_hit)
    else:
        log_theta = log_occ[hit] - log_S
        log_occ[hit] += math.log1p(math.exp(lgam + lr_hit - log_theta))


@njit(cache=True)
def is_factor(log_occ, log_S, code, a, log_t0, log_c):
    """``sum_i theta(i) / rho(theta(i))``."""
    z = 0.0
    for i in range(log_occ.size):
        lt = log_occ[i] - log_S
        z += math.exp(lt - log_rho(code, a, log_t0, log_c, lt))
    return z


@njit(cache=True)
def verify_step(theta_old, theta_new, hit, gam, rho_hit, rho_sup, gam_prev):
    d = theta_old.size
    s = 0.0
    for i in range(d):
        if not theta_new[i] > 0.0:
            return ERR_SIMPLEX
        s += theta_new[i]
    if abs(s - 1.0) > 1e-12:
        return ERR_SIMPLEX
    if gam > gam_prev * (1.0 + 1e-12):
        return ERR_GAMMA
    coef = gam * rho_hit * rho_hit / (1.0 + gam * rho_hit)
    norm2 = 0.0
    for i in range(d):
        ind = 1.0 if i == hit else 0.0
        lam = coef * (theta_old[i] - ind)
        H = rho_hit * (ind - theta_old[i])
        norm2 += lam * lam
        if abs(theta_old[i] + gam * H + gam * lam - theta_new[i]) > 1e-10:
            return ERR_RECON
    if math.sqrt(norm2) > SQRT2 * gam * rho_sup * rho_sup * (1.0 + 1e-9) + 1e-15:
        return ERR_LAMBDA
    return ERR_NONE


@njit(cache=True)
def theta_from_logs(log_occ, log_S, out):
    for i in range(log_occ.size):
        out[i] = math.exp(log_occ[i] - log_S)


@njit(cache=True)
def record(n, stride, theta_stride, lgam, hit, log_S, w, log_occ,
           out_gamma, out_hit, out_logS, out_w, out_theta):
    if stride > 0 and n % stride == 0:
        k = n // stride - 1
        out_gamma[k] = math.exp(lgam)
        out_hit[k] = hit + 1
        out_logS[k] = log_S
        out_w[k] = w
    if theta_stride > 0 and n % theta_stride == 0:
        k = n // theta_stride - 1
        theta_from_logs(log_occ, log_S, out_theta[k])


@njit(cache=True)
def toy_loop(rng, log_pi, x0, log_occ, n_steps, adapt,
             code, a, log_t0, log_c, rho_sup,
             sched, sched_c, log_gamma, alpha, mu,
             stride, theta_stride, verify, track_is, exit_state,
             out_gamma, out_hit, out_logS, out_w, out_theta, visits, is_sums):
    """Run ``n_steps`` SHUS / WL iterations on the three-state model.

    States are 0-based here.  Returns ``(n_done, exit_step, err, x)`` where
    ``exit_step`` is -1 if ``exit_state`` was never reached.
    """
    d = log_occ.size
    x = x0
    log_S = logsumexp(log_occ)
    gam_prev = math.inf
    theta_old = np.empty(d)
    theta_new = np.empty(d)
    third = 1.0 / 3.0
    for n in range(n_steps):
        # MH step under pi / rho(theta_n)
        u = rng.random()
        if x == 0:
            y = 1 if u < third else 0
        elif x == 2:
            y = 1 if u < third else 2
        else:
            y = 0 if u < third else (1 if u < 2.0 * third else 2)
        if y != x:
            lr = (log_pi[y] - log_rho(code, a, log_t0, log_c, log_occ[y] - log_S)
                  - log_pi[x] + log_rho(code, a, log_t0, log_c, log_occ[x] - log_S))
            if lr >= 0.0 or rng.random() < math.exp(lr):
                x = y
        hit = x
        visits[hit] += 1
        lr_hit = log_rho(code, a, log_t0, log_c, log_occ[hit] - log_S)
        w = 0.0
        if track_is:
            w = is_factor(log_occ, log_S, code, a, log_t0, log_c) * math.exp(lr_hit)
            is_sums[hit] += w
        lgam = -math.inf
        if adapt:
            lgam = next_log_gamma(sched, sched_c, log_gamma, alpha, mu, log_S, n)
            if verify:
                theta_from_logs(log_occ, log_S, theta_old)
            apply_update(log_occ, hit, sched, lgam, log_S, lr_hit)
            log_S = logsumexp(log_occ)
            if verify:
                theta_from_logs(log_occ, log_S, theta_new)
                gam = math.exp(lgam)
                err = verify_step(theta_old, theta_new, hit, gam, math.exp(lr_hit), rho_sup, gam_prev)
                if err != ERR_NONE:
                    return n + 1, -1, err, x
                gam_prev = gam
        record(n + 1, stride, theta_stride, lgam, hit, log_S, w, log_occ,
               out_gamma, out_hit, out_logS, out_w, out_theta)
        if x == exit_state:
            return n + 1, n + 1, ERR_NONE, x
    return n_steps, -1, ERR_NONE, x


@njit(cache=True)
def two_well(x1, x2):
    return (3.0 * math.exp(-x1 * x1 - (x2 - 1.0 / 3.0) ** 2)
            - 3.0 * math.exp(-x1 * x1 - (x2 - 5.0 / 3.0) ** 2)
            - 5.0 * math.exp(-(x1 - 1.0) ** 2 - x2 * x2)
            - 5.0 * math.exp(-(x1 + 1.0) ** 2 - x2 * x2)
            + 0.2 * x1 ** 4 + 0.2 * (x2 - 1.0 / 3.0) ** 4)


@njit(cache=True)
def locate(edges, x1):
    """0-based stratum of ``x1`` for half-open cells, last one closed."""
    lo = 0
    hi = edges.size - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x1 >= edges[mid]:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def plane_loop(rng, beta, R, edges, sigma, x, log_occ, n_steps, adapt,
               code, a, log_t0, log_c, rho_sup,
               sched, sched_c, log_gamma, alpha, mu,
               stride, theta_stride, verify, track_is, exit_x1, pos_stride,
               out_gamma, out_hit, out_logS, out_w, out_theta, out_pos, visits, is_sums):
    """Run ``n_steps`` SHUS / WL iterations on the two-well model.

    ``x`` (length 2) is updated in place.  Returns ``(n_done, exit_step, err)``;
    the exit step is the first ``n`` with ``x1(X_n) > exit_x1``.
    """
    d = log_occ.size
    log_S = logsumexp(log_occ)
    gam_prev = math.inf
    theta_old = np.empty(d)
    theta_new = np.empty(d)
    ix = locate(edges, x[0])
    ex = beta * two_well(x[0], x[1])
    for n in range(n_steps):
        y1 = x[0] + sigma * rng.standard_normal()
        y2 = x[1] + sigma * rng.standard_normal()
        if abs(y1) <= R:
            iy = locate(edges, y1)
            ey = beta * two_well(y1, y2)
            lr = (ex - ey - log_rho(code, a, log_t0, log_c, log_occ[iy] - log_S)
                  + log_rho(code, a, log_t0, log_c, log_occ[ix] - log_S))
            if lr >= 0.0 or rng.random() < math.exp(lr):
                x[0] = y1
                x[1] = y2
                ix = iy
                ex = ey
        hit = ix
        visits[hit] += 1
        lr_hit = log_rho(code, a, log_t0, log_c, log_occ[hit] - log_S)
        w = 0.0
        if track_is:
            w = is_factor(log_occ, log_S, code, a, log_t0, log_c) * math.exp(lr_hit)
            is_sums[hit] += w
        lgam = -math.inf
        if adapt:
            lgam = next_log_gamma(sched, sched_c, log_gamma, alpha, mu, log_S, n)
            if verify:
                theta_from_logs(log_occ, log_S, theta_old)
            apply_update(log_occ, hit, sched, lgam, log_S, lr_hit)
            log_S = logsumexp(log_occ)
            if verify:
                theta_from_logs(log_occ, log_S, theta_new)
                gam = math.exp(lgam)
                err = verify_step(theta_old, theta_new, hit, gam, math.exp(lr_hit), rho_sup, gam_prev)
                if err != ERR_NONE:
                    return n + 1, -1, err
                gam_prev = gam
        record(n + 1, stride, theta_stride, lgam, hit, log_S, w, log_occ,
               out_gamma, out_hit, out_logS, out_w, out_theta)
        if pos_stride > 0 and (n + 1) % pos_stride == 0:
            k = (n + 1) // pos_stride - 1
            out_pos[k, 0] = x[0]
            out_pos[k, 1] = x[1]
        if x[0] > exit_x1:
            return n + 1, n + 1, ERR_NONE
    return n_steps, -1, ERR_NONE
