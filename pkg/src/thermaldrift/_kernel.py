"""Compiled drift loop for the sampler.

The state is updated in place with a single O(d^2) pass per step. Words are
given as (x_mask, phase-vector) pairs; see ``pauli`` for the encoding.
"""

from __future__ import annotations

import math

import numba
import numpy as np

OK = 0
UNDERFLOW = 1


@numba.njit(cache=True, nogil=True)
def drift_loop(rho, buf, x_masks, signs, globals_, indices, uniforms, forced, tau, min_prob, out_m):
    """Run ``len(indices)`` drift steps on ``rho`` (modified in place).

    Word j acts as sigma[c ^ x, c] = globals_[j] * signs[j, c] with real signs.
    ``forced`` is either empty (outcomes drawn by comparing ``uniforms[k]`` with
    the probability of m = +1) or holds the outcome of every step.
    Returns (status, failing step, accumulated sum of log(2 p_{m_k})).
    """
    d = rho.shape[0]
    th = math.tanh(tau)
    e = math.exp(-tau)
    sech = 2 * e / (1 + e * e)
    log_lik = 0.0
    use_forced = forced.shape[0] > 0
    for k in range(indices.shape[0]):
        j = indices[k]
        x = x_masks[j]
        s = signs[j]
        g = globals_[j]
        t = 0.0
        for c in range(d):
            t += s[c] * (g * rho[c, c ^ x]).real
        p_plus = 0.5 * (1.0 - th * t)
        if use_forced:
            m = forced[k]
        elif uniforms[k] < p_plus:
            m = 1
        else:
            m = -1
        p = p_plus if m == 1 else 1.0 - p_plus
        if p < min_prob:
            return UNDERFLOW, k, log_lik
        out_m[k] = m
        log_lik += math.log(2.0 * p)
        # F rho F / (2 cosh(tau) p) with F = cosh(tau/2) - m sinh(tau/2) sigma, in overflow-free form
        aa = (1 + sech) / (4 * p)
        ab = -m * th / (4 * p)
        bb = (1 - sech) / (4 * p)
        c_left = ab * g.conjugate()
        c_right = ab * g
        # (sigma rho)[r, c] = conj(g) s[r] rho[r^x, c]; (rho sigma)[r, c] = g s[c] rho[r, c^x]
        for r in range(d):
            rx = r ^ x
            sr = s[r]
            for c in range(r, d):
                cx = c ^ x
                sc = s[c]
                buf[r, c] = (
                    aa * rho[r, c]
                    + c_left * (sr * rho[rx, c])
                    + c_right * (sc * rho[r, cx])
                    + (bb * sr * sc) * rho[rx, cx]
                )
        for r in range(d):
            rho[r, r] = buf[r, r].real
            for c in range(r + 1, d):
                v = buf[r, c]
                rho[r, c] = v
                rho[c, r] = v.conjugate()
    return OK, -1, log_lik


def _sech(tau: float) -> float:
    e = math.exp(-abs(tau))
    return 2 * e / (1 + e * e)


def numpy_drift_loop(rho, x_masks, phases, indices, uniforms, forced, tau, min_prob, out_m):
    """Reference implementation of ``drift_loop`` with vectorized numpy steps."""
    d = rho.shape[0]
    ar = np.arange(d)
    th = math.tanh(tau)
    sech = _sech(tau)
    log_lik = 0.0
    for k, j in enumerate(indices):
        x = int(x_masks[j])
        ph = phases[j]
        t = float(np.real(np.sum(ph * rho[ar, ar ^ x])))
        p_plus = 0.5 * (1 - th * t)
        if len(forced):
            m = int(forced[k])
        else:
            m = 1 if uniforms[k] < p_plus else -1
        p = p_plus if m == 1 else 1 - p_plus
        if p < min_prob:
            return UNDERFLOW, k, log_lik
        out_m[k] = m
        log_lik += math.log(2 * p)
        src = ar ^ x
        s_rho = ph.conj()[:, None] * rho[src, :]
        rho_s = rho[:, src] * ph[None, :]
        s_rho_s = ph.conj()[:, None] * rho[np.ix_(src, src)] * ph[None, :]
        rho[:, :] = ((1 + sech) * rho - m * th * (s_rho + rho_s) + (1 - sech) * s_rho_s) / (4 * p)
    return OK, -1, log_lik
