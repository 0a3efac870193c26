"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np

from apsde.lyapunov import LyapunovFunction
from apsde.model import CoefficientField, QuasiPeriodicSignal, SdeModel


def random_signal(rng, max_terms=2, scale=1.0) -> QuasiPeriodicSignal:
    n = int(rng.integers(0, max_terms + 1))
    terms = tuple(
        (scale * rng.uniform(-1, 1), rng.uniform(0.3, 3.0), rng.uniform(0, 2 * math.pi)) for _ in range(n)
    )
    return QuasiPeriodicSignal(terms, scale * rng.uniform(-1, 1))


def random_affine_model(rng, d, m) -> SdeModel:
    drift = tuple(
        CoefficientField.affine([random_signal(rng) for _ in range(d)], random_signal(rng)) for _ in range(d)
    )
    diffusion = tuple(
        tuple(
            CoefficientField.affine([random_signal(rng, scale=0.5) for _ in range(d)], random_signal(rng, scale=0.5))
            for _ in range(m)
        )
        for _ in range(d)
    )
    return SdeModel(d, m, drift, diffusion, 10.0, 10.0, "random")


def random_polynomial_V(rng, d) -> LyapunovFunction:
    """``s(t) x^T Q x + beta(t) |x|^4`` with analytic derivatives."""
    A = rng.standard_normal((d, d))
    Q = A @ A.T + 0.5 * np.eye(d)
    S = Q + Q.T
    a1, w1, p1 = rng.uniform(0.2, 0.8), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi)
    a2, w2, p2 = rng.uniform(0.05, 0.2), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi)

    def s(t):
        return 1.5 + a1 * np.sin(w1 * t + p1)

    def ds(t):
        return a1 * w1 * np.cos(w1 * t + p1)

    def beta(t):
        return 0.3 + a2 * np.sin(w2 * t + p2)

    def dbeta(t):
        return a2 * w2 * np.cos(w2 * t + p2)

    def q(x):
        return np.einsum("...i,ij,...j->...", x, Q, x)

    def r2(x):
        return np.sum(x * x, axis=-1)

    def value(t, x):
        return s(t) * q(x) + beta(t) * r2(x) ** 2

    def dt(t, x):
        return ds(t) * q(x) + dbeta(t) * r2(x) ** 2

    def grad(t, x):
        t = np.asarray(t, dtype=float)
        return s(t)[..., None] * (x @ S.T) + 4 * (beta(t) * r2(x))[..., None] * x

    def hess(t, x):
        t = np.asarray(t, dtype=float)
        eye = np.eye(d)
        rr = r2(x)[..., None, None]
        return s(t)[..., None, None] * S + 4 * beta(t)[..., None, None] * (rr * eye + 2 * x[..., :, None] * x[..., None, :])

    return LyapunovFunction(d, value, dt, grad, hess, label="poly")


def _coeffs(model: SdeModel, t, x):
    """Drift and diffusion of an affine model from its matrices."""
    F, f0, G, g0 = model.affine_matrices(t)
    return F @ x + f0, np.einsum("ilj,j->il", G, x) + g0


def euler_generator_oracle(V, model, t, x, y=None, s1=0.0, s2=0.0, h=1e-4, n_pairs=500_000, seed=0):
    """Estimate plus standard error and an O(h) bias allowance.

    The allowance is ``2 |E_h - E_2h|`` with ``E_2h`` computed on the same
    normals, which bounds the leading bias term with margin.
    """
    est, se = _euler_one_step(V, model, t, x, y, s1, s2, h, n_pairs, seed)
    est2, _ = _euler_one_step(V, model, t, x, y, s1, s2, 2 * h, n_pairs, seed)
    return est, se, 2.0 * abs(est2 - est)


def _euler_one_step(V, model, t, x, y, s1, s2, h, n_pairs, seed):
    """One-step Euler-Maruyama estimate of the generator with antithetic noise.

    ``y is None``: ``[E V(t + h, X_h) - V(t, x)] / h``.
    Otherwise both points step on the same noise, ``x`` with coefficients at
    ``t + s1`` and ``y`` at ``t + s2``, and the estimate is of
    ``[E V(t + h, X_h - Y_h) - V(t, x - y)] / h``.
    """
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal((n_pairs, model.m)) * math.sqrt(h)
    fx, gx = _coeffs(model, t + s1, x)
    if y is None:
        base = V(t, x[None])[0]
        mean_step = x + fx * h
        noise = dW @ gx.T
    else:
        fy, gy = _coeffs(model, t + s2, y)
        base = V(t, (x - y)[None])[0]
        mean_step = (x - y) + (fx - fy) * h
        noise = dW @ (gx - gy).T
    plus = V(t + h, mean_step + noise)
    minus = V(t + h, mean_step - noise)
    samples = (0.5 * (plus + minus) - base) / h
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n_pairs))


def brute_force_w1(a, b) -> float:
    """Min over all matchings of the mean absolute displacement (equal sizes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    perms = np.array(list(itertools.permutations(range(len(b)))))
    return float(np.min(np.mean(np.abs(a[None, :] - b[perms]), axis=1)))
