"""Lyapunov functions, Itô generators and sampling-based hypothesis checks.

Three generators are provided, all vectorised over leading array axes:

* :func:`lv_pair` acts on the difference of two solutions driven by the
  same noise,
* :func:`lv_shifted` is the same operator with the coefficients of the two
  solutions evaluated at shifted times,
* :func:`lv_single` is the usual generator along one solution.

Every generator uses the ``1/2`` factor on the second-order term.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, NumericError
from .model import Box, QuasiPeriodicSignal, SdeModel

__all__ = [
    "LyapunovFunction",
    "RateFunction",
    "ConditionReport",
    "lv_pair",
    "lv_single",
    "lv_shifted",
    "verify_positivity",
    "verify_quadratic_bounds",
    "verify_dissipativity",
    "v_epsilon",
    "l2_bound_certificate",
    "lyapunov_from_json",
]

FD_STEP = 1e-5


@dataclass(frozen=True)
class LyapunovFunction:
    """``V(t, x)`` with its time derivative, gradient and Hessian.

    In ``"finite-difference"`` mode the derivative callbacks may be omitted
    and are computed by central differences of ``value`` with step
    ``eta * (1 + |x|)`` (``eta * (1 + |t|)`` in time).
    """

    d: int
    value: Callable
    dt: Callable | None = None
    grad: Callable | None = None
    hess: Callable | None = None
    derivative_mode: str = "analytic"
    eta: float = FD_STEP
    label: str = "V"
    spec: dict | None = None

    def __post_init__(self):
        if self.derivative_mode not in ("analytic", "finite-difference"):
            raise InvalidInputError(f"unknown derivative mode {self.derivative_mode!r}")
        if self.derivative_mode == "analytic" and None in (self.dt, self.grad, self.hess):
            raise InvalidInputError("analytic mode needs dt, grad and hess callbacks")

    # -- constructors -------------------------------------------------------

    @classmethod
    def norm2(cls, d: int) -> "LyapunovFunction":
        """``V(t, x) = |x|^2``."""
        return cls.quadratic(np.eye(d), label="norm2", spec="norm2")

    @classmethod
    def quadratic(cls, Q, timescale=None, label="quadratic", spec=None) -> "LyapunovFunction":
        """``V(t, x) = s(t) * x^T Q x`` with an optional signal ``s``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise InvalidInputError("quadratic form matrix must be square")
        S = Q + Q.T
        s = QuasiPeriodicSignal.coerce(1.0 if timescale is None else timescale)

        def form(x):
            return np.einsum("...i,ij,...j->...", x, Q, x)

        def value(t, x):
            return s(t) * form(x)

        def dt(t, x):
            return s.derivative(t) * form(x)

        def grad(t, x):
            return np.asarray(s(t))[..., None] * (x @ S.T)

        def hess(t, x):
            return np.asarray(s(t))[..., None, None] * np.broadcast_to(S, x.shape[:-1] + S.shape)

        if spec is None:
            spec = {"quadratic": {"matrix": Q.tolist()}}
            if timescale is not None:
                spec["quadratic"]["timescale"] = s.to_json()
        return cls(Q.shape[0], value, dt, grad, hess, "analytic", label=label, spec=spec)

    @classmethod
    def from_value(cls, value: Callable, d: int, eta: float = FD_STEP, label="V") -> "LyapunovFunction":
        return cls(d, value, derivative_mode="finite-difference", eta=eta, label=label)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t, x):
        return self.value(t, np.asarray(x, dtype=float))

    def _steps(self, x):
        return self.eta * (1.0 + np.linalg.norm(x, axis=-1))

    def time_derivative(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.dt is not None:
            return self.dt(t, x)
        t = np.asarray(t, dtype=float)
        e = self.eta * (1.0 + np.abs(t))
        return (self.value(t + e, x) - self.value(t - e, x)) / (2 * e)

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return self.grad(t, x)
        e = self._steps(x)[..., None]
        out = np.empty(x.shape)
        for i in range(self.d):
            step = np.zeros(self.d)
            step[i] = 1.0
            out[..., i] = (self.value(t, x + e * step) - self.value(t, x - e * step)) / (2 * e[..., 0])
        return out

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.hess is not None:
            return self.hess(t, x)
        e = self._steps(x)
        ee = e[..., None]
        out = np.empty(x.shape + (self.d,))
        v0 = self.value(t, x)
        unit = np.eye(self.d)
        for i in range(self.d):
            vi_p = self.value(t, x + ee * unit[i])
            vi_m = self.value(t, x - ee * unit[i])
            out[..., i, i] = (vi_p - 2 * v0 + vi_m) / e**2
            for j in range(i + 1, self.d):
                pp = self.value(t, x + ee * (unit[i] + unit[j]))
                pm = self.value(t, x + ee * (unit[i] - unit[j]))
                mp = self.value(t, x + ee * (unit[j] - unit[i]))
                mm = self.value(t, x - ee * (unit[i] + unit[j]))
                out[..., i, j] = out[..., j, i] = (pp - pm - mp + mm) / (4 * e**2)
        return out

    def to_json(self):
        if self.spec is None:
            raise InvalidInputError(f"Lyapunov function {self.label!r} has no JSON form")
        return self.spec


def lyapunov_from_json(doc, d: int) -> LyapunovFunction:
    """``"norm2"``, ``{"builtin": "norm2"}`` or ``{"quadratic": {"matrix": Q,
    "timescale": signal}}``."""
    if isinstance(doc, str):
        if doc == "norm2":
            return LyapunovFunction.norm2(d)
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError:
            raise InvalidInputError(f"unknown Lyapunov builtin {doc!r}") from None
    if not isinstance(doc, dict):
        raise InvalidInputError("Lyapunov document must be a string or an object")
    if doc.get("builtin") == "norm2":
        return LyapunovFunction.norm2(d)
    if "quadratic" in doc:
        body = doc["quadratic"]
        Q = np.asarray(body["matrix"], dtype=float)
        if Q.shape != (d, d):
            raise InvalidInputError(f"quadratic matrix must be {d}x{d}, got {Q.shape}")
        ts = body.get("timescale")
        return LyapunovFunction.quadratic(Q, None if ts is None else QuasiPeriodicSignal.from_json(ts))
    raise InvalidInputError(f"unrecognised Lyapunov document keys {sorted(doc)}")


@dataclass(frozen=True)
class RateFunction:
    """Rate ``c(r)`` used in dissipativity bounds ``LV <= -c(|x - y|^2)``."""

    form: str = "linear"
    lam: float = 0.0
    p: float = 1.0
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.form not in ("linear", "power", "table"):
            raise InvalidInputError(f"unknown rate form {self.form!r}")
        if self.lam < 0:
            raise InvalidInputError("rate multiplier must be >= 0")
        if self.form == "power" and self.p < 1:
            raise InvalidInputError("power rates need p >= 1")
        if self.form == "table":
            if self.table is None:
                raise InvalidInputError("table rate needs (r, c) values")
            r, c = (np.asarray(v, dtype=float) for v in self.table)
            if r.shape != c.shape or r.size < 2 or r[0] != 0 or c[0] != 0 or np.any(np.diff(r) <= 0):
                raise InvalidInputError("rate table must start at (0, 0) with increasing r")
            slopes = np.diff(c) / np.diff(r)
            if np.any(slopes < -1e-12) or np.any(np.diff(slopes) < -1e-12):
                raise InvalidInputError("rate table must be increasing and convex")
            object.__setattr__(self, "table", (tuple(r.tolist()), tuple(c.tolist())))

    @classmethod
    def linear(cls, lam: float) -> "RateFunction":
        return cls("linear", float(lam))

    @classmethod
    def zero(cls) -> "RateFunction":
        return cls("linear", 0.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.form == "linear":
            return self.lam * r
        if self.form == "power":
            return self.lam * r**self.p
        rs, cs = (np.asarray(v) for v in self.table)
        slope = (cs[-1] - cs[-2]) / (rs[-1] - rs[-2])
        return np.where(r <= rs[-1], np.interp(r, rs, cs), cs[-1] + slope * (r - rs[-1]))

    def to_json(self) -> dict:
        doc = {"form": self.form, "lambda": self.lam}
        if self.form == "power":
            doc["p"] = self.p
        if self.form == "table":
            doc["table"] = [list(v) for v in self.table]
        return doc

    @classmethod
    def from_json(cls, doc) -> "RateFunction":
        if isinstance(doc, (int, float)):
            return cls.linear(doc)
        if not isinstance(doc, dict):
            raise InvalidInputError("rate must be a number or an object")
        table = doc.get("table")
        return cls(
            doc.get("form", "linear"),
            float(doc.get("lambda", 0.0)),
            float(doc.get("p", 1.0)),
            None if table is None else (tuple(table[0]), tuple(table[1])),
        )


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    worst_value: float
    worst_point: dict
    samples_used: int
    tolerance: float
    pass_: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_json(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "worst_value": self.worst_value,
            "worst_point": self.worst_point,
            "samples_used": self.samples_used,
            "tolerance": self.tolerance,
            "pass": self.pass_,
            "details": self.details,
        }


# -- generators -------------------------------------------------------------


def _check_dims(V: LyapunovFunction, model: SdeModel, *states):
    out = []
    for s in states:
        s = np.asarray(s, dtype=float)
        if s.ndim == 0 or s.shape[-1] != model.d or V.d != model.d:
            raise InvalidInputError(
                f"dimension mismatch: state {s.shape}, model d={model.d}, V d={V.d}"
            )
        out.append(s)
    return out


def _second_order(dg, H):
    return 0.5 * np.einsum("...il,...ij,...jl->...", dg, H, dg)


def _finish(val, scalar):
    val = np.asarray(val, dtype=float)
    if not np.all(np.isfinite(val)):
        raise NumericError("generator evaluation produced a non-finite value")
    return float(val) if scalar else val


def _difference_generator(V, t_v, z, df, dg, scalar):
    val = V.time_derivative(t_v, z) + np.sum(V.gradient(t_v, z) * df, axis=-1)
    val = val + _second_order(dg, V.hessian(t_v, z))
    return _finish(val, scalar)


def lv_pair(V: LyapunovFunction, model: SdeModel, t, x, y):
    """Generator of ``V(t, X - Y)`` for two solutions driven by one Brownian
    motion, evaluated at ``(t, x, y)``."""
    x, y = _check_dims(V, model, x, y)
    z = x - y
    df = model.drift_at(t, x) - model.drift_at(t, y)
    dg = model.diffusion_at(t, x) - model.diffusion_at(t, y)
    return _difference_generator(V, t, z, df, dg, x.ndim == 1 and y.ndim == 1)


def lv_shifted(V: LyapunovFunction, model: SdeModel, t, s1, s2, x, y):
    """As :func:`lv_pair` with the coefficients of ``x`` taken at ``t + s1``
    and those of ``y`` at ``t + s2``."""
    x, y = _check_dims(V, model, x, y)
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    z = x - y
    df = model.drift_at(t + s1, x) - model.drift_at(t + s2, y)
    dg = model.diffusion_at(t + s1, x) - model.diffusion_at(t + s2, y)
    return _difference_generator(V, t, z, df, dg, x.ndim == 1 and y.ndim == 1)


def lv_single(V: LyapunovFunction, model: SdeModel, t, x):
    """Itô generator ``V_t + <grad V, f> + 1/2 sum_l g_l^T Hess(V) g_l``."""
    (x,) = _check_dims(V, model, x)
    f = model.drift_at(t, x)
    g = model.diffusion_at(t, x)
    val = V.time_derivative(t, x) + np.sum(V.gradient(t, x) * f, axis=-1) + _second_order(g, V.hessian(t, x))
    return _finish(val, x.ndim == 1)


# -- samplers ---------------------------------------------------------------


def _point(**kw):
    out = {}
    for k, v in kw.items():
        out[k] = float(v) if np.ndim(v) == 0 else [float(u) for u in np.ravel(v)]
    return out


def _finite_or_raise(values, what, points):
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite {what} at sample {k}: {_point(**{n: p[k] for n, p in points.items()})}")


def _default_tol(V, tol):
    if tol is not None:
        return float(tol)
    return 1e-8 if V.derivative_mode == "analytic" else 1e-5


def _away_from_origin(rng, box: Box, n: int, r_min: float):
    """Uniform box samples with a quarter placed on coordinate axes; points
    closer than ``r_min`` to the origin are pushed out radially."""
    n_axis = n // 4
    x = box.sample_x(rng, n)
    lo, hi = np.asarray(box.x_low), np.asarray(box.x_high)
    if n_axis:
        axis = rng.integers(0, box.d, size=n_axis)
        coord = rng.uniform(lo[axis], hi[axis])
        xa = np.zeros((n_axis, box.d))
        xa[np.arange(n_axis), axis] = coord
        x[n - n_axis :] = xa
    norm = np.linalg.norm(x, axis=1)
    small = norm < r_min
    if small.any():
        u = rng.standard_normal((int(small.sum()), box.d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        x[small] = r_min * u
    return x


def verify_positivity(V: LyapunovFunction, box: Box, n_samples: int = 10_000, seed: int = 0) -> ConditionReport:
    """Check ``V(t, 0) = 0`` and ``V(t, x) > 0`` for sampled ``x`` with
    ``|x| >= 1e-3 * diameter``. ``worst_value`` is the smallest sampled
    ``V(t, x)``."""
    if box.d != V.d:
        raise InvalidInputError("box dimension does not match V")
    rng = np.random.default_rng(seed)
    t = box.sample_t(rng, n_samples)
    zero_vals = np.asarray(V(t, np.zeros((n_samples, V.d))), dtype=float)
    _finite_or_raise(zero_vals, "V(t, 0)", {"t": t})
    r_min = 1e-3 * box.diameter
    x = _away_from_origin(rng, box, n_samples, r_min)
    vals = np.asarray(V(t, x), dtype=float)
    _finite_or_raise(vals, "V", {"t": t, "x": x})
    k = int(np.argmin(vals))
    zero_residual = float(np.max(np.abs(zero_vals)))
    min_ratio = float(np.min(vals / np.sum(x * x, axis=1)))
    passed = zero_residual <= 1e-10 and vals[k] > 0
    return ConditionReport(
        "positivity",
        float(vals[k]),
        _point(t=t[k], x=x[k]),
        int(n_samples),
        1e-10,
        bool(passed),
        {"zero_residual": zero_residual, "min_quadratic_ratio": min_ratio, "r_min": r_min},
    )


def verify_quadratic_bounds(
    V: LyapunovFunction, a: float, b: float, box: Box, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-10
) -> ConditionReport:
    """Check ``a|x|^2 <= V(t, x) <= b|x|^2``; the lower side is skipped for ``a = 0``."""
    if a < 0 or b <= 0 or b < a:
        raise InvalidInputError("need 0 <= a <= b and b > 0")
    if box.d != V.d:
        raise InvalidInputError("box dimension does not match V")
    rng = np.random.default_rng(seed)
    t = box.sample_t(rng, n_samples)
    x = box.sample_x(rng, n_samples)
    vals = np.asarray(V(t, x), dtype=float)
    _finite_or_raise(vals, "V", {"t": t, "x": x})
    r2 = np.sum(x * x, axis=1)
    excess = vals - b * r2
    if a > 0:
        excess = np.maximum(excess, a * r2 - vals)
    k = int(np.argmax(excess))
    return ConditionReport(
        "quadratic_bounds",
        float(excess[k]),
        _point(t=t[k], x=x[k]),
        int(n_samples),
        float(tol),
        bool(excess[k] <= tol),
        {"a": float(a), "b": float(b), "lower_checked": a > 0},
    )


def verify_dissipativity(
    V: LyapunovFunction,
    model: SdeModel,
    c: RateFunction | None,
    mode: str,
    box: Box,
    n_samples: int = 10_000,
    seed: int = 0,
    shift_range: tuple[float, float] = (0.0, 10.0),
    min_radius: float = 0.0,
    tol: float | None = None,
) -> ConditionReport:
    """Falsification check of a generator inequality over sampled tuples.

    ``mode="pair"``: ``lv_pair + c(|x - y|^2) <= tol``.
    ``mode="shifted"``: ``lv_shifted <= tol`` with ``s1, s2`` uniform in
    ``shift_range`` (``c`` is ignored).
    ``mode="single"``: ``lv_single + c(|x|^2) <= tol`` for ``|x| >= min_radius``;
    a quarter of the samples lie on the sphere ``|x| = min_radius``.
    """
    if mode not in ("pair", "shifted", "single"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if box.d != model.d:
        raise InvalidInputError("box dimension does not match model")
    tol = _default_tol(V, tol)
    c = RateFunction.zero() if c is None else c
    rng = np.random.default_rng(seed)
    details = {"mode": mode, "rate": c.to_json()}
    if mode == "single":
        t = box.sample_t(rng, n_samples)
        x = _single_samples(rng, box, n_samples, float(min_radius))
        vals = lv_single(V, model, t, x) + c(np.sum(x * x, axis=1))
        k = int(np.argmax(vals))
        worst = _point(t=t[k], x=x[k])
        details["min_radius"] = float(min_radius)
    else:
        t, x, y = box.sample_pairs(rng, n_samples)
        if mode == "pair":
            vals = lv_pair(V, model, t, x, y) + c(np.sum((x - y) ** 2, axis=1))
            k = int(np.argmax(vals))
            worst = _point(t=t[k], x=x[k], y=y[k])
        else:
            s1 = rng.uniform(*shift_range, size=n_samples)
            s2 = rng.uniform(*shift_range, size=n_samples)
            vals = lv_shifted(V, model, t, s1, s2, x, y)
            k = int(np.argmax(vals))
            worst = _point(t=t[k], x=x[k], y=y[k], s1=s1[k], s2=s2[k])
            details["rate"] = RateFunction.zero().to_json()
            details["shift_range"] = [float(v) for v in shift_range]
    return ConditionReport(
        f"dissipativity_{mode}", float(vals[k]), worst, int(n_samples), tol, bool(vals[k] <= tol), details
    )


def _single_samples(rng, box: Box, n: int, r_min: float):
    if r_min <= 0:
        return box.sample_x(rng, n)
    n_sphere = n // 4
    out = np.empty((n, box.d))
    u = rng.standard_normal((n_sphere, box.d))
    out[:n_sphere] = r_min * u / np.linalg.norm(u, axis=1, keepdims=True)
    filled = n_sphere
    while filled < n:
        cand = box.sample_x(rng, 2 * (n - filled) + 16)
        cand = cand[np.linalg.norm(cand, axis=1) >= r_min]
        if cand.size == 0 and filled == n_sphere:
            raise InvalidInputError("state box lies inside the excluded ball |x| < min_radius")
        take = min(len(cand), n - filled)
        out[filled : filled + take] = cand[:take]
        filled += take
    return out


def v_epsilon(
    V: LyapunovFunction,
    epsilon: float,
    a: float | None = None,
    t_range: tuple[float, float] = (0.0, 1.0),
    n_samples: int = 4096,
    seed: int = 0,
):
    """Lower level ``inf_{|x| >= eps, t} V(t, x)``.

    Returns ``(value, method)``. With a verified quadratic lower bound ``a``
    the value is ``a * eps^2``; otherwise ``V`` is minimised over sampled
    points of the sphere ``|x| = eps``, which is only valid for radially
    nondecreasing ``V``.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    if a is not None:
        if a <= 0:
            raise InvalidInputError("quadratic lower bound must be positive")
        return a * epsilon**2, "quadratic_lower_bound"
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n_samples, V.d))
    x = epsilon * u / np.linalg.norm(u, axis=1, keepdims=True)
    t = rng.uniform(t_range[0], t_range[1], size=n_samples)
    return float(np.min(V(t, x))), "sphere_minimum_assumes_radially_nondecreasing"


def l2_bound_certificate(V, model, R: float, a: float, b0: float, c0: float, Mbar: float, E0: float) -> float:
    """Certified bound on ``sup_t E|X(t)|^2``.

    Assumes ``lv_single <= 0`` on ``|x| >= R``, ``a|x|^2 <= V <= b0|x|^2 + c0``
    on ``|x| <= R``, ``Mbar >= V`` on ``|x| <= R`` and ``E0 = E|X(t0)|^2``.
    Returns ``R^2 + (2 (c0 + b0 E0) + Mbar) / a``.
    """
    if a <= 0:
        raise InvalidInputError("a must be positive")
    if min(R, b0, c0, Mbar, E0) < 0:
        raise InvalidInputError("R, b0, c0, Mbar and E0 must be nonnegative")
    if V is not None and model is not None and V.d != model.d:
        raise InvalidInputError("V and model dimensions differ")
    bound = R**2 + (2.0 * (c0 + b0 * E0) + Mbar) / a
    if not math.isfinite(bound):
        raise NumericError("certificate is not finite")
    return float(bound)
