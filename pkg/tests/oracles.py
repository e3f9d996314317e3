"""Straight-loop reference implementations used as independent test oracles."""

import math

import numpy as np


def loop_update_h(P, W, H, Vx):
    R, F, N = Vx.shape
    K = W.shape[1]
    out = np.empty_like(H)
    for k in range(K):
        for n in range(N):
            num = den = 0.0
            for f in range(F):
                a = b = 0.0
                for r in range(R):
                    a += Vx[r, f, n] ** -2
                    b += Vx[r, f, n] ** -1
                num += W[f, k] * P[f, n] * a
                den += W[f, k] * b
            out[k, n] = H[k, n] * math.sqrt(num / den)
    return out


def loop_update_w(P, W, H, Vx):
    R, F, N = Vx.shape
    K = W.shape[1]
    out = np.empty_like(W)
    for f in range(F):
        for k in range(K):
            num = den = 0.0
            for n in range(N):
                a = b = 0.0
                for r in range(R):
                    a += Vx[r, f, n] ** -2
                    b += Vx[r, f, n] ** -1
                num += P[f, n] * a * H[k, n]
                den += b * H[k, n]
            out[f, k] = W[f, k] * math.sqrt(num / den)
    return out


def loop_update_gain(P, g, Vx, Vs):
    R, F, N = Vx.shape
    out = np.empty_like(g)
    for n in range(N):
        num = den = 0.0
        for f in range(F):
            for r in range(R):
                num += P[f, n] * Vs[r, f, n] / Vx[r, f, n] ** 2
                den += Vs[r, f, n] / Vx[r, f, n]
        out[n] = g[n] * math.sqrt(num / den)
    return out


def loop_log_likelihood(x, speech_var, gain, noise_var):
    total = 0.0
    for f in range(x.shape[0]):
        v = gain * speech_var[f] + noise_var[f]
        total += -math.log(math.pi) - math.log(v) - abs(x[f]) ** 2 / v
    return total


def loop_q_tilde(P, Vs, g, noise_var):
    """-(1/R) sum_r sum_fn [ln v + P / v] with v = g_n Vs + noise."""
    R, F, N = Vs.shape
    total = 0.0
    for r in range(R):
        for f in range(F):
            for n in range(N):
                v = g[n] * Vs[r, f, n] + noise_var[f, n]
                total += math.log(v) + P[f, n] / v
    return -total / R


def random_instance(rng, F=5, N=7, K=3, R=2):
    W = rng.uniform(0.1, 1.0, (F, K))
    H = rng.uniform(0.1, 1.0, (K, N))
    g = rng.uniform(0.5, 2.0, N)
    Vs = rng.uniform(0.1, 2.0, (R, F, N))
    P = rng.exponential(1.0, (F, N)) * (g * Vs[0] + W @ H)
    return P, W, H, g, Vs
