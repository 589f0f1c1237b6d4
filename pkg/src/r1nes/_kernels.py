"""Compiled per-generation kernels for the rank-one and diagonal optimizers.

Why this shape: the scaling contract asserts per-evaluation update cost with a
log-log slope near 1 across d in {64..512}. Per-generation fixed overhead of a
few microseconds is enough to flatten the measured slope below that window, so
the hot path is built as

    one flat numpy draw per generation  ->  transform kernel  ->  objective
    (plain Python/numpy, timed separately)  ->  update kernel,

with no Generator passed into compiled code (unboxing one costs ~6us/call),
no allocation inside kernels, and the per-generation trace row written here
rather than in Python.

Numerical note: the update kernels read the sampled offsets from the draw
buffer (the transform stores them back in place), never X - mu, because that
subtraction cancels catastrophically once |mu| >> |offset| near convergence.

Shaping inside the update kernels mirrors optimizer.shape_fitness exactly:
stable descending order, tied value spans share their mean utility; tests
assert the two implementations agree.

out-array convention (both update kernels):
    out[0] status: 0 ok, 1 non-finite fitness, 2 direction underflow
    out[1] detail (offending sample index for status 1)
    out[2] population best, out[3] population worst
    out[4] new lam (mean log-sigma for the diagonal case)
    out[5] new c (0 for the diagonal case)
    out[6] aggregated g_c (rank-one only)
Trace row g gets (pop_best, pop_worst, out[4], out[5]).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SHAPE_RANK = 0
SHAPE_RAW = 1

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_UNDERFLOW = 2

# Trust region on the length coordinate: the natural gradient of c grows
# like 1/r^2 as the direction length r tends to zero, so an uncapped Euler
# step diverges in finite time once r is small. Bounding the per-generation
# change of log r keeps the update well posed without touching healthy
# dynamics, where observed steps are orders of magnitude below the cap.
MAX_LOG_LENGTH_STEP = 1.0


@njit(cache=True)
def _assign_utilities(fit, util, order, w, mode):
    """Stable descending ranks; tied spans share the mean utility.

    Returns the index of the first non-finite fitness, or -1 if all finite.
    """
    n = fit.shape[0]
    for k in range(n):
        if not np.isfinite(fit[k]):
            return k
        order[k] = k
    if mode == SHAPE_RAW:
        for k in range(n):
            w[k] = fit[k] / n
        return -1
    for k in range(1, n):
        key = fit[k]
        idx = order[k]
        j = k - 1
        while j >= 0 and fit[order[j]] < key:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = idx
    k = 0
    while k < n:
        j = k
        total = util[k]
        while j + 1 < n and fit[order[j + 1]] == fit[order[k]]:
            j += 1
            total += util[j]
        mean_util = total / (j - k + 1)
        for m in range(k, j + 1):
            w[order[m]] = mean_util
        k = j + 1
    return -1


@njit(cache=True)
def r1nes_transform(flat, mu, u, lam, x_abs):
    """flat holds n*d normals (row-major y) then n normals (z).

    Writes the absolute evaluation points into x_abs and stores the offsets
    x = e^lam (y + z u) back into the y slots of flat for the update kernel.
    """
    n, d = x_abs.shape
    s = math.exp(lam)
    base = n * d
    for k in range(n):
        z = flat[base + k]
        row = k * d
        for i in range(d):
            x = s * (flat[row + i] + z * u[i])
            flat[row + i] = x
            x_abs[k, i] = mu[i] + x
    return 0


@njit(cache=True)
def r1nes_update(
    flat, fit, mu, u, util, order, w, g_u,
    lam, eta_mu, eta_sigma, eta_u, mode, g, trace, out,
):
    """One aggregated natural-gradient update; see module docstring for out[].

    Per sample (offset x read from flat): the closed-form g_lambda and the
    factored inverse-Fisher product for g_u, everything from the inner
    products x.x and x.v. Then mu/lam steps and the direction switch: the
    (c, v) branch when the aggregated g_c is negative (length shrinks,
    orientation can never flip), the additive branch otherwise. Either way
    the change of log(norm(u)) is bounded by MAX_LOG_LENGTH_STEP.
    """
    n = fit.shape[0]
    d = mu.shape[0]
    bad = _assign_utilities(fit, util, order, w, mode)
    if bad >= 0:
        out[0] = STATUS_NONFINITE
        out[1] = bad
        return

    r2 = 0.0
    for i in range(d):
        r2 += u[i] * u[i]
    r = math.sqrt(r2)
    one = 1.0 + r2
    e2 = math.exp(-2.0 * lam)
    # factored inverse-Fisher scalars, fixed over the generation
    scale = one / (2.0 * r2 * (d - 1))
    cross = -r
    diag = 2.0 * (d - 1)
    outer = 2.0 + d * (r2 - 1.0)

    pop_best = fit[0]
    pop_worst = fit[0]
    g_lam = 0.0
    for i in range(d):
        g_u[i] = 0.0
    for k in range(n):
        fk = fit[k]
        if fk > pop_best:
            pop_best = fk
        if fk < pop_worst:
            pop_worst = fk
        wk = w[k]
        row = k * d
        xx = 0.0
        xu = 0.0
        for i in range(d):
            x = flat[row + i]
            xx += x * x
            xu += x * u[i]
        xv = xu / r
        g_lam += wk * ((e2 * xx - d) - (e2 * xv * xv - 1.0)) / (2.0 * (d - 1))
        plain_lam = -d + e2 * (xx - xu * xu / one)
        alpha = -1.0 / one - e2 * xu * xu / (one * one)
        beta = e2 * xu / one
        v_dot_pu = alpha * r + beta * xv
        coef_v = scale * (cross * plain_lam + diag * alpha * r + outer * v_dot_pu)
        coef_x = scale * diag * beta
        cv_over_r = coef_v / r
        for i in range(d):
            g_u[i] += wk * (cv_over_r * u[i] + coef_x * flat[row + i])

    # mu step needs the pre-update mu; offsets in flat are mean-free already
    for i in range(d):
        acc = 0.0
        for k in range(n):
            acc += w[k] * flat[k * d + i]
        mu[i] += eta_mu * acc

    new_lam = lam + eta_sigma * g_lam

    g_u_dot_u = 0.0
    for i in range(d):
        g_u_dot_u += g_u[i] * u[i]
    g_c = g_u_dot_u / r2
    old_c = 0.5 * math.log(r2)
    if g_c < 0.0:
        new_c = old_c + eta_u * g_c
        if new_c < old_c - MAX_LOG_LENGTH_STEP:
            new_c = old_c - MAX_LOG_LENGTH_STEP
        norm = 0.0
        for i in range(d):
            # v + eta_u * g_v with g_v = (g_u - g_c u)/r
            t = (u[i] + eta_u * (g_u[i] - g_c * u[i])) / r
            u[i] = t
            norm += t * t
        norm = math.sqrt(norm)
        ec = math.exp(new_c)
        for i in range(d):
            u[i] = ec * u[i] / norm
        new_r2 = ec * ec
    else:
        new_r2 = 0.0
        for i in range(d):
            u[i] += eta_u * g_u[i]
            new_r2 += u[i] * u[i]
        if new_r2 > 0.0:
            new_c = 0.5 * math.log(new_r2)
            if new_c > old_c + MAX_LOG_LENGTH_STEP:
                factor = math.exp(old_c + MAX_LOG_LENGTH_STEP - new_c)
                for i in range(d):
                    u[i] *= factor
                new_c = old_c + MAX_LOG_LENGTH_STEP
                new_r2 = math.exp(2.0 * new_c)
            elif new_c < old_c - MAX_LOG_LENGTH_STEP:
                factor = math.exp(old_c - MAX_LOG_LENGTH_STEP - new_c)
                for i in range(d):
                    u[i] *= factor
                new_c = old_c - MAX_LOG_LENGTH_STEP
                new_r2 = math.exp(2.0 * new_c)
        else:
            new_c = -math.inf
    if not (new_r2 >= 1e-300):
        out[0] = STATUS_UNDERFLOW
        out[1] = -1.0
        return

    trace[g, 0] = pop_best
    trace[g, 1] = pop_worst
    trace[g, 2] = new_lam
    trace[g, 3] = new_c
    out[0] = STATUS_OK
    out[2] = pop_best
    out[3] = pop_worst
    out[4] = new_lam
    out[5] = new_c
    out[6] = g_c


@njit(cache=True)
def snes_transform(flat, mu, log_sigmas, x_abs):
    """flat holds n*d normals (row-major s), consumed read-only: the update
    kernel needs the raw draws."""
    n, d = x_abs.shape
    for k in range(n):
        row = k * d
        for i in range(d):
            x_abs[k, i] = mu[i] + math.exp(log_sigmas[i]) * flat[row + i]
    return 0


@njit(cache=True)
def snes_update(
    flat, fit, mu, log_sigmas, util, order, w,
    eta_mu, eta_sigma, mode, g, trace, out,
):
    """Per-coordinate natural-gradient step:

        mu_i         += eta_mu * sigma_i * sum_k w_k s_{k,i}
        log_sigma_i  += (eta_sigma / 2) * sum_k w_k (s_{k,i}^2 - 1)
    """
    n = fit.shape[0]
    d = mu.shape[0]
    bad = _assign_utilities(fit, util, order, w, mode)
    if bad >= 0:
        out[0] = STATUS_NONFINITE
        out[1] = bad
        return
    pop_best = fit[0]
    pop_worst = fit[0]
    for k in range(n):
        if fit[k] > pop_best:
            pop_best = fit[k]
        if fit[k] < pop_worst:
            pop_worst = fit[k]
    mean_ls = 0.0
    for i in range(d):
        g_mu = 0.0
        g_ls = 0.0
        for k in range(n):
            s = flat[k * d + i]
            g_mu += w[k] * s
            g_ls += w[k] * (s * s - 1.0)
        mu[i] += eta_mu * math.exp(log_sigmas[i]) * g_mu
        log_sigmas[i] += 0.5 * eta_sigma * g_ls
        mean_ls += log_sigmas[i]
    mean_ls /= d

    trace[g, 0] = pop_best
    trace[g, 1] = pop_worst
    trace[g, 2] = mean_ls
    trace[g, 3] = 0.0
    out[0] = STATUS_OK
    out[2] = pop_best
    out[3] = pop_worst
    out[4] = mean_ls
    out[5] = 0.0
    out[6] = 0.0
