"""Compiled inner loops of the group descent solver.

Array conventions (all float64, C-contiguous):
    X      (K, p, n)  standardized covariates, column-major per experiment,
                      unobserved rows zero
    y      (K, n)     responses, unobserved entries zero
    zw     (K, n)     observation indicator times experiment weight
    sig2   (K,)       gaussian noise variances (ignored for bernoulli)
    fam    (K,)       0 gaussian, 1 bernoulli
    beta   (K, p)     coefficients, b (K,) intercepts, eta (K, n) linear
                      predictors and resid (K, n) weighted d loglik / d eta;
                      all four are updated in place.
"""
import math

import numpy as np
from numba import njit

from .penalty import threshold_radius

_radius = njit(cache=True)(threshold_radius)


@njit(cache=True)
def _expit(t):
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def _log1pexp(t):
    if t > 0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@njit(cache=True)
def _resid_row(k, y, zw, sig2, fam, eta, resid):
    n = y.shape[1]
    if fam[k] == 0:
        for i in range(n):
            resid[k, i] = zw[k, i] * (y[k, i] - eta[k, i]) / sig2[k]
    else:
        for i in range(n):
            resid[k, i] = zw[k, i] * (y[k, i] - _expit(eta[k, i]))


@njit(cache=True)
def _shift_eta(k, d, col, y, zw, sig2, fam, eta, resid):
    # eta_k += d * col, keeping resid_k consistent
    n = y.shape[1]
    for i in range(n):
        eta[k, i] += d * col[i]
    if fam[k] == 0:
        c = d / sig2[k]
        for i in range(n):
            resid[k, i] -= zw[k, i] * c * col[i]
    else:
        _resid_row(k, y, zw, sig2, fam, eta, resid)


@njit(cache=True)
def refresh(X, y, zw, sig2, fam, beta, b, eta, resid):
    """Recompute eta and resid from scratch (removes incremental drift)."""
    K, p, n = X.shape
    for k in range(K):
        for i in range(n):
            eta[k, i] = b[k]
        for j in range(p):
            c = beta[k, j]
            if c != 0.0:
                for i in range(n):
                    eta[k, i] += c * X[k, j, i]
        _resid_row(k, y, zw, sig2, fam, eta, resid)


@njit(cache=True)
def objective(y, zw, sig2, fam, beta, eta, inv_n, lam, a, pen):
    """Penalized objective divided by n (to be maximized)."""
    K, n = y.shape
    ll = 0.0
    for k in range(K):
        s = 0.0
        if fam[k] == 0:
            c = 0.5 * math.log(2.0 * math.pi * sig2[k])
            for i in range(n):
                if zw[k, i] != 0.0:
                    r = y[k, i] - eta[k, i]
                    s += zw[k, i] * (-c - r * r / (2.0 * sig2[k]))
        else:
            for i in range(n):
                if zw[k, i] != 0.0:
                    s += zw[k, i] * (y[k, i] * eta[k, i] - _log1pexp(eta[k, i]))
        ll += s
    p = beta.shape[1]
    penv = 0.0
    for j in range(p):
        t = 0.0
        for k in range(K):
            t += beta[k, j] * beta[k, j]
        t = math.sqrt(t)
        if t > 0.0:
            if pen == 1 or t <= lam:
                penv += lam * t
            elif t <= a * lam:
                penv += (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
            else:
                penv += lam * lam * (a + 1.0) / 2.0
    return ll * inv_n - penv


@njit(cache=True)
def sweep(groups, X, y, zw, sig2, fam, v, vb, beta, b, eta, resid, inv_n, lam, a, pen):
    """One cyclic pass: intercepts, then each listed group.

    Returns the largest curvature-scaled step ``v_j * ||delta theta_j||``.
    """
    K, p, n = X.shape
    ones = np.ones(n)
    for k in range(K):
        g = 0.0
        for i in range(n):
            g += resid[k, i]
        d = g * inv_n / vb[k]
        if d != 0.0:
            b[k] += d
            _shift_eta(k, d, ones, y, zw, sig2, fam, eta, resid)
    z = np.empty(K)
    max_step = 0.0
    for j in groups:
        vj = v[j]
        r2 = 0.0
        for k in range(K):
            g = 0.0
            for i in range(n):
                g += X[k, j, i] * resid[k, i]
            z[k] = beta[k, j] + g * inv_n / vj
            r2 += z[k] * z[k]
        r = math.sqrt(r2)
        t = _radius(r, lam, a, pen, vj)
        scale = t / r if t > 0.0 else 0.0
        step2 = 0.0
        for k in range(K):
            d = z[k] * scale - beta[k, j]
            if d != 0.0:
                beta[k, j] += d
                _shift_eta(k, d, X[k, j], y, zw, sig2, fam, eta, resid)
                step2 += d * d
        step = vj * math.sqrt(step2)
        if step > max_step:
            max_step = step
    return max_step


@njit(cache=True)
def gradients(X, resid, inv_n):
    """Per-subject-average score: (K,) intercept part and (K, p) coefficients."""
    K, p, n = X.shape
    gb = np.zeros(K)
    G = np.zeros((K, p))
    for k in range(K):
        s = 0.0
        for i in range(n):
            s += resid[k, i]
        gb[k] = s * inv_n
        for j in range(p):
            s = 0.0
            for i in range(n):
                s += X[k, j, i] * resid[k, i]
            G[k, j] = s * inv_n
    return gb, G


@njit(cache=True)
def kkt_violation(gb, G, beta, lam, a, pen):
    """Largest violation of the group subdifferential stationarity conditions."""
    K, p = G.shape
    worst = 0.0
    for k in range(K):
        if abs(gb[k]) > worst:
            worst = abs(gb[k])
    for j in range(p):
        t = 0.0
        gn = 0.0
        for k in range(K):
            t += beta[k, j] * beta[k, j]
            gn += G[k, j] * G[k, j]
        t = math.sqrt(t)
        gn = math.sqrt(gn)
        if t == 0.0:
            viol = gn - lam
        else:
            if pen == 1 or t <= lam:
                dv = lam
            elif t < a * lam:
                dv = (a * lam - t) / (a - 1.0)
            else:
                dv = 0.0
            viol = 0.0
            for k in range(K):
                e = G[k, j] - dv * beta[k, j] / t
                viol += e * e
            viol = math.sqrt(viol)
        if viol > worst:
            worst = viol
    return worst
