"""Independent reference implementations used as test oracles."""

import math

import numpy as np
from scipy import stats

from statuscale.vertical import BpNetwork


def fd_gradient(net, inputs, terms, e, sens, h=1e-5):
    """Central differences of (e - sens * gains . terms)^2 over both weight matrices."""
    def loss(w_in, w_hid):
        probe = BpNetwork(w_in, w_hid, net.learning_rate, net.gain_max)
        gains, _, _ = probe.forward(inputs)
        return (e - sens * float(gains @ terms)) ** 2

    out = []
    for which in (0, 1):
        base = [net.input_weights.copy(), net.hidden_weights.copy()]
        g = np.zeros_like(base[which])
        for idx in np.ndindex(g.shape):
            up = [m.copy() for m in base]
            dn = [m.copy() for m in base]
            up[which][idx] += h
            dn[which][idx] -= h
            g[idx] = (loss(*up) - loss(*dn)) / (2 * h)
        out.append(g)
    return out


def random_config(rng):
    net = BpNetwork.initialize(int(rng.integers(1 << 30)), scale=float(rng.uniform(0.2, 1.0)))
    target = float(rng.uniform(0.5, 0.9))
    measured = float(rng.uniform(0.0, 1.0))
    e = measured - target
    terms = np.array([e, rng.uniform(-2, 2), rng.uniform(-0.5, 0.5)])
    return net, (target, measured, e, 1.0), terms, float(rng.uniform(-0.3, 0.3)), float(rng.uniform(0.1, 1.0))


def gradient_relative_error(rng) -> float:
    net, inputs, terms, e_next, sens = random_config(rng)
    a_in, a_hid = net.loss_gradient(inputs, terms, e_next, sens)
    n_in, n_hid = fd_gradient(net, np.asarray(inputs), terms, e_next + sens * float(net.forward(inputs)[0] @ terms),
                              sens)
    a = np.concatenate([a_in.ravel(), a_hid.ravel()])
    n = np.concatenate([n_in.ravel(), n_hid.ravel()])
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))




def warping_paths(m, n):
    """Every monotone, continuous alignment of lengths m and n as a list of (i, j) cells."""
    def extend(path):
        i, j = path[-1]
        if (i, j) == (m - 1, n - 1):
            yield path
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < m and j + dj < n:
                yield from extend(path + [(i + di, j + dj)])
    yield from extend([(0, 0)])


def brute_force_dtw(x, y) -> float:
    return min(sum(abs(x[i] - y[j]) for i, j in p) for p in warping_paths(len(x), len(y)))


def normal_equation_fit(points):
    """(k, b) from the 2x2 normal equations, solved by Cramer's rule."""
    t = [float(a) for a, _ in points]
    y = [float(b) for _, b in points]
    n = len(t)
    st, sy = math.fsum(t), math.fsum(y)
    stt = math.fsum(a * a for a in t)
    sty = math.fsum(a * b for a, b in zip(t, y))
    det = n * stt - st * st
    k = (n * sty - st * sy) / det
    b = (stt * sy - st * sty) / det
    return k, b


def t_interval(values, confidence=0.95):
    v = np.asarray(values, dtype=float)
    mean = v.mean()
    half = stats.t.ppf((1 + confidence) / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v))
    return mean, mean - half, mean + half


def load_weighted_mean(values, loads):
    total = sum(loads)
    return sum(v * w for v, w in zip(values, loads)) / total


