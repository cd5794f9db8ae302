"""Numeric kernels for the MLP head and feature pooling.

Two interchangeable backends live here: numba ``@njit`` kernels (default)
and pure-numpy implementations. Set ``BBCLF_DISABLE_NUMBA=1`` to force the
numpy path; the active backend name is exposed as ``ACTIVE_BACKEND``.
Both backends are kept importable (``numpy_backend`` / ``numba_backend``)
so tests and benchmarks can compare them directly.

All arrays must be float64 and C-contiguous; ``adam_step`` mutates its
param/moment arguments in place and silently loses updates on
non-contiguous views.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_EPS_LOG = 1e-12


def _want_numba() -> bool:
    return os.environ.get("BBCLF_DISABLE_NUMBA", "").strip().lower() not in (
        "1",
        "true",
        "yes",
    )


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _forward_probs_np(x, w1, b1, w2, b2):
    h = np.tanh(x @ w1.T + b1)
    z = h @ w2.T + b2
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grads_np(x, y, w1, b1, w2, b2):
    n = x.shape[0]
    h = np.tanh(x @ w1.T + b1)
    z = h @ w2.T + b2
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    p_gold = (p * y).sum(axis=1)
    loss = -np.mean(np.log(np.maximum(p_gold, _EPS_LOG)))
    dz = (p - y) / n
    gw2 = dz.T @ h
    gb2 = dz.sum(axis=0)
    du = (dz @ w2) * (1.0 - h * h)
    gw1 = du.T @ x
    gb1 = du.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2


def _adam_step_np(param, grad, m, v, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _max_pool_np(layers):
    return layers.max(axis=0)


numpy_backend = SimpleNamespace(
    name="numpy",
    forward_probs=_forward_probs_np,
    loss_and_grads=_loss_and_grads_np,
    adam_step=_adam_step_np,
    max_pool=_max_pool_np,
)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def _softmax_rows(z):
        out = np.empty_like(z)
        for i in range(z.shape[0]):
            m = z[i, 0]
            for j in range(1, z.shape[1]):
                if z[i, j] > m:
                    m = z[i, j]
            s = 0.0
            for j in range(z.shape[1]):
                out[i, j] = np.exp(z[i, j] - m)
                s += out[i, j]
            for j in range(z.shape[1]):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def forward_probs(x, w1, b1, w2, b2):
        u = np.dot(x, np.ascontiguousarray(w1.T))
        for i in range(u.shape[0]):
            for j in range(u.shape[1]):
                u[i, j] = np.tanh(u[i, j] + b1[j])
        z = np.dot(u, np.ascontiguousarray(w2.T))
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] += b2[j]
        return _softmax_rows(z)

    @njit(cache=True)
    def loss_and_grads(x, y, w1, b1, w2, b2):
        n = x.shape[0]
        u = np.dot(x, np.ascontiguousarray(w1.T))
        for i in range(u.shape[0]):
            for j in range(u.shape[1]):
                u[i, j] = np.tanh(u[i, j] + b1[j])
        z = np.dot(u, np.ascontiguousarray(w2.T))
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] += b2[j]
        p = _softmax_rows(z)
        loss = 0.0
        for i in range(n):
            pg = 0.0
            for j in range(y.shape[1]):
                pg += p[i, j] * y[i, j]
            if pg < _EPS_LOG:
                pg = _EPS_LOG
            loss -= np.log(pg)
        loss /= n
        dz = (p - y) / n
        gw2 = np.dot(np.ascontiguousarray(dz.T), u)
        gb2 = np.zeros(dz.shape[1])
        for i in range(dz.shape[0]):
            for j in range(dz.shape[1]):
                gb2[j] += dz[i, j]
        du = np.dot(dz, w2)
        for i in range(du.shape[0]):
            for j in range(du.shape[1]):
                du[i, j] *= 1.0 - u[i, j] * u[i, j]
        gw1 = np.dot(np.ascontiguousarray(du.T), x)
        gb1 = np.zeros(du.shape[1])
        for i in range(du.shape[0]):
            for j in range(du.shape[1]):
                gb1[j] += du[i, j]
        return loss, gw1, gb1, gw2, gb2

    @njit(cache=True)
    def adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
        flat_p = param.ravel()
        flat_g = grad.ravel()
        flat_m = m.ravel()
        flat_v = v.ravel()
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for k in range(flat_p.shape[0]):
            flat_m[k] = beta1 * flat_m[k] + (1.0 - beta1) * flat_g[k]
            flat_v[k] = beta2 * flat_v[k] + (1.0 - beta2) * flat_g[k] * flat_g[k]
            m_hat = flat_m[k] / c1
            v_hat = flat_v[k] / c2
            flat_p[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)

    @njit(cache=True)
    def max_pool(layers):
        out = layers[0].copy()
        for l in range(1, layers.shape[0]):
            for j in range(layers.shape[1]):
                if layers[l, j] > out[j]:
                    out[j] = layers[l, j]
        return out

    return SimpleNamespace(
        name="numba",
        forward_probs=forward_probs,
        loss_and_grads=loss_and_grads,
        adam_step=adam_step,
        max_pool=max_pool,
    )


numba_backend = None
if _want_numba():
    try:
        numba_backend = _build_numba_backend()
    except ImportError:
        numba_backend = None

_active = numba_backend if numba_backend is not None else numpy_backend

ACTIVE_BACKEND = _active.name
forward_probs = _active.forward_probs
loss_and_grads = _active.loss_and_grads
adam_step = _active.adam_step
max_pool = _active.max_pool
