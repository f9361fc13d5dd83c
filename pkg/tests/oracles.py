"""Independent oracles used across the test suite.

These deliberately avoid the library code paths they check: gradients come
from central finite differences, rotations from scipy's matrix exponential,
assignments from permutation enumeration, and the Adam update from a direct
transcription of the update formula.
"""

import itertools

import numpy as np
from scipy.linalg import expm


def finite_difference_grads(f, arrays, step=1e-4):
    """Central-difference gradients of scalar f(list-of-arrays) w.r.t. each array."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(arrays)
            flat[i] = orig - step
            down = f(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def grad_rel_err(analytic, fd):
    """Relative gradient error with a floor tied to the gradient scale, so
    near-zero entries are judged on an absolute scale instead of blowing up."""
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(fd), initial=0.0))
    floor = max(1e-12, 1e-3 * scale)
    return rel_err(analytic, fd, floor=floor)


def rodrigues(axis, angle):
    """Rotation about a unit axis via the matrix exponential (scipy)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return expm(angle * K)


def random_rotation(rng, max_angle=np.pi - 1e-2):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return rodrigues(v, rng.uniform(0, max_angle))


def adam_single_step(p, g, lr, beta1, beta2, eps, weight_decay, t=1):
    """Closed-form decoupled-weight-decay Adam update for step t from zero state."""
    m = (1 - beta1) * g
    v = (1 - beta2) * g * g
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    return p - lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)


def brute_force_nearest(codebook, z):
    """Index of the codebook row nearest to z, lowest index on ties."""
    d = np.linalg.norm(codebook - z[None, :], axis=1)
    return int(np.argmin(d))


def brute_force_assignment(cost):
    """Minimum-total-cost permutation by enumerating all k! candidates."""
    k = cost.shape[0]
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(k)):
        total = sum(cost[i, perm[i]] for i in range(k))
        if total < best - 1e-15:
            best, best_perm = total, perm
    return best, np.array(best_perm)


def gaussian_frechet_1d(mu1, var1, mu2, var2):
    """Closed-form Frechet distance between two 1-D Gaussians."""
    return (mu1 - mu2) ** 2 + var1 + var2 - 2.0 * np.sqrt(var1 * var2)
