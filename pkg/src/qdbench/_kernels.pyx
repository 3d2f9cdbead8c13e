# cython: language_level=3
"""Compiled rollout and nearest-centroid kernels.

Mirrors ``qdbench._fallback`` operation for operation (same accumulation
order, same counter-based noise stream), so the two backends agree up to
the last bits of the libm functions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, copysign, sin, cos, log, sqrt, M_PI
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix64(uint64_t x) noexcept nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t c) noexcept nogil:
    return <double> (_mix64(seed + (c + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


cdef inline void _normal_pair(uint64_t seed, uint64_t pair, double* out) noexcept nogil:
    cdef double u1 = _uniform(seed, 2 * pair)
    cdef double u2 = _uniform(seed, 2 * pair + 1)
    cdef double r = sqrt(-2.0 * log(1.0 - u1))
    out[0] = r * cos(2.0 * M_PI * u2)
    out[1] = r * sin(2.0 * M_PI * u2)


def gaussian_stream(const uint64_t[::1] seeds, Py_ssize_t count):
    cdef Py_ssize_t n = seeds.shape[0], i, p, pairs = (count + 1) // 2
    out_arr = np.empty((n, 2 * pairs), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for p in range(pairs):
                _normal_pair(seeds[i], p, &out[i, 2 * p])
    return out_arr[:, :count]


cdef inline double _tanh(double x) noexcept nogil:
    # about twice as fast as libm tanh; absolute error ~1e-16, exact at 0
    cdef double e = exp(2.0 * fabs(x))
    return copysign(1.0 - 2.0 / (e + 1.0), x)


cdef inline void _mlp(const double* p, const long* sizes, int n_layers,
                      const double* obs, double* out, double* buf_a, double* buf_b) noexcept nogil:
    cdef int layer, j, k, n_in, n_out
    cdef const double* w
    cdef const double* b
    cdef const double* x = obs
    cdef double* y
    cdef double acc
    cdef long offset = 0
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        w = p + offset
        b = w + n_in * n_out
        offset += n_in * n_out + n_out
        if layer == n_layers - 1:
            y = out
        elif layer % 2 == 0:
            y = buf_a
        else:
            y = buf_b
        for j in range(n_out):
            acc = b[j]
            for k in range(n_in):
                acc = acc + x[k] * w[k * n_out + j]
            y[j] = _tanh(acc)
        x = y


def _max_width(const long[::1] sizes):
    cdef long m = 1
    cdef Py_ssize_t i
    for i in range(sizes.shape[0]):
        if sizes[i] > m:
            m = sizes[i]
    return m


def mlp_forward(const double[:, ::1] params, const long[::1] sizes, const double[:, ::1] obs):
    cdef Py_ssize_t n = params.shape[0], i
    cdef int n_layers = sizes.shape[0] - 1
    cdef long width = _max_width(sizes)
    out_arr = np.empty((n, sizes[n_layers]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                _mlp(&params[i, 0], &sizes[0], n_layers, &obs[i, 0], &out[i, 0], buf_a, buf_b)
    finally:
        free(buf_a)
        free(buf_b)
    return out_arr


def rollout_omni(const double[:, ::1] params, const long[::1] sizes, const uint64_t[::1] seeds,
                 Py_ssize_t T, double noise_scale, double dt, double response, double obs_scale,
                 double r_survive, double torque_coef, bint record=False):
    """Point-mass episodes. Noise stream: normals 0-1 perturb the start
    position, normals 2+2t and 3+2t perturb the actuation at step t."""
    cdef Py_ssize_t n = params.shape[0], i, t
    cdef int n_layers = sizes.shape[0] - 1
    cdef long width = _max_width(sizes)
    cdef bint noisy = noise_scale != 0.0
    fitness_arr = np.zeros(n, dtype=np.float64)
    final_arr = np.empty((n, 2), dtype=np.float64)
    states_arr = np.zeros((n if record else 1, T + 1 if record else 1, 4), dtype=np.float64)
    controls_arr = np.zeros((n if record else 1, T if record else 1, 2), dtype=np.float64)
    torque_arr = np.zeros((n if record else 1, T if record else 1), dtype=np.float64)
    cdef double[::1] fitness = fitness_arr
    cdef double[:, ::1] final = final_arr
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, :, ::1] controls = controls_arr
    cdef double[:, ::1] torques = torque_arr
    cdef double x, y, vx, vy, ax, ay, r_torque, f
    cdef double obs[4]
    cdef double u[2]
    cdef double eps[2]
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    eps[0] = 0.0
    eps[1] = 0.0
    try:
        with nogil:
            for i in range(n):
                x = 0.0
                y = 0.0
                if noisy:
                    _normal_pair(seeds[i], 0, eps)
                    x = noise_scale * eps[0]
                    y = noise_scale * eps[1]
                vx = 0.0
                vy = 0.0
                f = 0.0
                if record:
                    states[i, 0, 0] = x
                    states[i, 0, 1] = y
                for t in range(T):
                    obs[0] = x / obs_scale
                    obs[1] = y / obs_scale
                    obs[2] = vx
                    obs[3] = vy
                    _mlp(&params[i, 0], &sizes[0], n_layers, obs, u, buf_a, buf_b)
                    r_torque = u[0] * u[0]
                    r_torque = r_torque + u[1] * u[1]
                    r_torque = torque_coef * r_torque
                    f = f + (r_survive - r_torque)
                    ax = u[0]
                    ay = u[1]
                    if noisy:
                        _normal_pair(seeds[i], t + 1, eps)
                        ax = ax + noise_scale * eps[0]
                        ay = ay + noise_scale * eps[1]
                    vx = vx + response * (ax - vx)
                    vy = vy + response * (ay - vy)
                    x = x + dt * vx
                    y = y + dt * vy
                    if record:
                        controls[i, t, 0] = u[0]
                        controls[i, t, 1] = u[1]
                        torques[i, t] = r_torque
                        states[i, t + 1, 0] = x
                        states[i, t + 1, 1] = y
                        states[i, t + 1, 2] = vx
                        states[i, t + 1, 3] = vy
                fitness[i] = f
                final[i, 0] = x
                final[i, 1] = y
    finally:
        free(buf_a)
        free(buf_b)
    if record:
        return fitness_arr, final_arr, (states_arr, controls_arr, torque_arr)
    return fitness_arr, final_arr, None


def rollout_uni(const double[:, ::1] params, const long[::1] sizes, const uint64_t[::1] seeds,
                Py_ssize_t T, double noise_scale, double forward_gain, double dt, double period,
                double r_survive, double torque_coef, bint record=False):
    """Forward-walker episodes. Normal t of the stream perturbs the velocity at step t."""
    cdef Py_ssize_t n = params.shape[0], i, t, c
    cdef int n_layers = sizes.shape[0] - 1
    cdef int n_ch = sizes[n_layers]
    cdef long width = _max_width(sizes)
    cdef bint noisy = noise_scale != 0.0
    fitness_arr = np.zeros(n, dtype=np.float64)
    contact_arr = np.zeros((n, n_ch), dtype=np.float64)
    states_arr = np.zeros((n if record else 1, T + 1 if record else 1, 3), dtype=np.float64)
    controls_arr = np.zeros((n if record else 1, T if record else 1, n_ch), dtype=np.float64)
    terms_arr = np.zeros((n if record else 1, T if record else 1, 3), dtype=np.float64)
    contacts_arr = np.zeros((n if record else 1, T if record else 1, n_ch), dtype=np.uint8)
    cdef double[::1] fitness = fitness_arr
    cdef double[:, ::1] contact_mean = contact_arr
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, :, ::1] controls = controls_arr
    cdef double[:, :, ::1] terms = terms_arr
    cdef unsigned char[:, :, ::1] contacts = contacts_arr
    cdef double x, v, phase, pos_sum, r_torque, r_forward, f
    cdef double obs[3]
    cdef double eps[2]
    cdef double* u = <double*> malloc(n_ch * sizeof(double))
    cdef long* counts = <long*> malloc(n_ch * sizeof(long))
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    eps[0] = 0.0
    eps[1] = 0.0
    try:
        with nogil:
            for i in range(n):
                x = 0.0
                v = 0.0
                f = 0.0
                for c in range(n_ch):
                    counts[c] = 0
                for t in range(T):
                    phase = 2.0 * M_PI * t / period
                    obs[0] = sin(phase)
                    obs[1] = cos(phase)
                    obs[2] = v
                    _mlp(&params[i, 0], &sizes[0], n_layers, obs, u, buf_a, buf_b)
                    pos_sum = 0.0
                    r_torque = 0.0
                    for c in range(n_ch):
                        if u[c] > 0.0:
                            counts[c] += 1
                            pos_sum = pos_sum + u[c]
                            if record:
                                contacts[i, t, c] = 1
                        r_torque = r_torque + u[c] * u[c]
                        if record:
                            controls[i, t, c] = u[c]
                    r_torque = torque_coef * r_torque
                    v = forward_gain * (pos_sum / n_ch)
                    if noisy:
                        if t % 2 == 0:
                            _normal_pair(seeds[i], t // 2, eps)
                        v = v + noise_scale * eps[t % 2]
                    r_forward = v * dt
                    x = x + r_forward
                    f = f + (r_forward + r_survive - r_torque)
                    if record:
                        terms[i, t, 0] = r_forward
                        terms[i, t, 1] = r_survive
                        terms[i, t, 2] = r_torque
                        states[i, t + 1, 0] = x
                        states[i, t + 1, 1] = v
                        states[i, t + 1, 2] = t + 1
                fitness[i] = f
                for c in range(n_ch):
                    contact_mean[i, c] = <double> counts[c] / T
    finally:
        free(u)
        free(counts)
        free(buf_a)
        free(buf_b)
    if record:
        return fitness_arr, contact_arr, (states_arr, controls_arr, terms_arr, contacts_arr)
    return fitness_arr, contact_arr, None


def nearest_centroid(const double[:, ::1] points, const double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0], K = centroids.shape[0], B = points.shape[1]
    cdef Py_ssize_t i, k, d, best
    cdef double s, diff, best_s
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            best = 0
            best_s = 0.0
            for k in range(K):
                s = 0.0
                for d in range(B):
                    diff = points[i, d] - centroids[k, d]
                    s = s + diff * diff
                if k == 0 or s < best_s:
                    best_s = s
                    best = k
            out[i] = best
    return out_arr
