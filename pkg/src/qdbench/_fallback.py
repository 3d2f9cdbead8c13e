"""Pure numpy implementations of the hot kernels.

Vectorised across the batch axis. The per-element arithmetic follows the
same order as ``_kernels.pyx`` so both backends produce matching results.
"""

from __future__ import annotations

import math

import numpy as np

from . import core


def _unpack(params: np.ndarray, sizes: np.ndarray):
    layers = []
    offset = 0
    n = params.shape[0]
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        n_in, n_out = int(n_in), int(n_out)
        w = params[:, offset:offset + n_in * n_out].reshape(n, n_in, n_out)
        offset += n_in * n_out
        b = params[:, offset:offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def _forward(layers, obs: np.ndarray) -> np.ndarray:
    x = obs
    for w, b in layers:
        # explicit loop over inputs: no BLAS, accumulation order fixed per element
        acc = b.copy()
        for k in range(w.shape[1]):
            acc = acc + x[:, k:k + 1] * w[:, k, :]
        x = np.tanh(acc)
    return x


def mlp_forward(params, sizes, obs):
    params = np.ascontiguousarray(params, dtype=np.float64)
    return _forward(_unpack(params, np.asarray(sizes)), np.asarray(obs, dtype=np.float64))


def gaussian_stream(seeds, count):
    return core.gaussian_stream(seeds, count)


def rollout_omni(params, sizes, seeds, T, noise_scale, dt, response, obs_scale,
                 r_survive, torque_coef, record=False):
    layers = _unpack(np.asarray(params, dtype=np.float64), np.asarray(sizes))
    n = len(seeds)
    noisy = noise_scale != 0.0
    x = np.zeros(n)
    y = np.zeros(n)
    if noisy:
        eps = core.gaussian_stream(seeds, 2 * T + 2)
        x = noise_scale * eps[:, 0]
        y = noise_scale * eps[:, 1]
    vx = np.zeros(n)
    vy = np.zeros(n)
    f = np.zeros(n)
    if record:
        states = np.zeros((n, T + 1, 4))
        controls = np.zeros((n, T, 2))
        torques = np.zeros((n, T))
        states[:, 0, 0] = x
        states[:, 0, 1] = y
    for t in range(T):
        obs = np.stack([x / obs_scale, y / obs_scale, vx, vy], axis=1)
        u = _forward(layers, obs)
        r_torque = u[:, 0] * u[:, 0]
        r_torque = r_torque + u[:, 1] * u[:, 1]
        r_torque = torque_coef * r_torque
        f = f + (r_survive - r_torque)
        ax = u[:, 0]
        ay = u[:, 1]
        if noisy:
            ax = ax + noise_scale * eps[:, 2 * t + 2]
            ay = ay + noise_scale * eps[:, 2 * t + 3]
        vx = vx + response * (ax - vx)
        vy = vy + response * (ay - vy)
        x = x + dt * vx
        y = y + dt * vy
        if record:
            controls[:, t] = u
            torques[:, t] = r_torque
            states[:, t + 1] = np.stack([x, y, vx, vy], axis=1)
    final = np.stack([x, y], axis=1)
    if record:
        return f, final, (states, controls, torques)
    return f, final, None


def rollout_uni(params, sizes, seeds, T, noise_scale, forward_gain, dt, period,
                r_survive, torque_coef, record=False):
    layers = _unpack(np.asarray(params, dtype=np.float64), np.asarray(sizes))
    n = len(seeds)
    n_ch = int(sizes[-1])
    noisy = noise_scale != 0.0
    if noisy:
        eps = core.gaussian_stream(seeds, T)
    x = np.zeros(n)
    v = np.zeros(n)
    f = np.zeros(n)
    counts = np.zeros((n, n_ch), dtype=np.int64)
    if record:
        states = np.zeros((n, T + 1, 3))
        controls = np.zeros((n, T, n_ch))
        terms = np.zeros((n, T, 3))
        contacts = np.zeros((n, T, n_ch), dtype=np.uint8)
    for t in range(T):
        phase = 2.0 * math.pi * t / period
        obs = np.column_stack([np.full(n, math.sin(phase)), np.full(n, math.cos(phase)), v])
        u = _forward(layers, obs)
        on = u > 0.0
        counts += on
        pos_sum = np.zeros(n)
        r_torque = np.zeros(n)
        for c in range(n_ch):
            pos_sum = pos_sum + np.where(on[:, c], u[:, c], 0.0)
            r_torque = r_torque + u[:, c] * u[:, c]
        r_torque = torque_coef * r_torque
        v = forward_gain * (pos_sum / n_ch)
        if noisy:
            v = v + noise_scale * eps[:, t]
        r_forward = v * dt
        x = x + r_forward
        f = f + (r_forward + r_survive - r_torque)
        if record:
            controls[:, t] = u
            contacts[:, t] = on
            terms[:, t, 0] = r_forward
            terms[:, t, 1] = r_survive
            terms[:, t, 2] = r_torque
            states[:, t + 1] = np.stack([x, v, np.full(n, t + 1.0)], axis=1)
    contact_mean = counts / T
    if record:
        return f, contact_mean, (states, controls, terms, contacts)
    return f, contact_mean, None


def nearest_centroid(points, centroids, chunk: int = 512):
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    out = np.empty(points.shape[0], dtype=np.int64)
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk]
        s = np.zeros((p.shape[0], centroids.shape[0]))
        for d in range(points.shape[1]):
            diff = p[:, d:d + 1] - centroids[None, :, d]
            s = s + diff * diff
        out[start:start + chunk] = np.argmin(s, axis=1)
    return out
