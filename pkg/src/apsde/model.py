"""SDE models with quasi-periodic time dependence.

A model is the pair of coefficient fields (drift, diffusion) of

    dX(t) = f(t, X(t)) dt + g(t, X(t)) dW(t),

with f a d-vector and g a d x m matrix of scalar fields. Fields are
evaluated vectorised: ``field(t, x)`` accepts ``x`` of shape ``(..., d)``
and ``t`` broadcastable against ``x.shape[:-1]``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, NumericError

__all__ = [
    "QuasiPeriodicSignal",
    "CoefficientField",
    "SdeModel",
    "Box",
    "LipschitzReport",
    "estimate_lipschitz",
    "shift_model",
    "model_from_json",
    "model_to_json",
    "register_field",
    "FIELD_BUILTINS",
]

NEAR_DIAGONAL_FRACTION = 0.25
NEAR_DIAGONAL_SCALE = 1e-3


def _normalise_terms(terms, offset):
    """Fold zero frequencies into the offset, flip negative frequencies and
    merge equal frequencies by phasor addition."""
    phasors: dict[float, complex] = {}
    order: list[float] = []
    for amp, freq, phase in terms:
        amp, freq, phase = float(amp), float(freq), float(phase)
        if amp == 0.0:
            continue
        if freq == 0.0:
            offset += amp * math.sin(phase)
            continue
        if freq < 0.0:
            freq, phase = -freq, math.pi - phase
        if freq not in phasors:
            phasors[freq] = 0j
            order.append(freq)
        phasors[freq] += amp * complex(math.cos(phase), math.sin(phase))
    out = []
    for freq in order:
        z = phasors[freq]
        amp = abs(z)
        if amp > 1e-15:
            out.append((amp, freq, math.atan2(z.imag, z.real)))
    return tuple(out), float(offset)


@dataclass(frozen=True)
class QuasiPeriodicSignal:
    """Trigonometric polynomial ``offset + sum amp * sin(freq * t + phase)``.

    Supports exact algebra (sum, product, time shift), which keeps products
    such as ``A(t)**2`` inside the class.
    """

    terms: tuple[tuple[float, float, float], ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        terms = tuple((float(a), float(w), float(p)) for a, w, p in self.terms)
        if not all(math.isfinite(v) for term in terms for v in term) or not math.isfinite(
            self.offset
        ):
            raise InvalidInputError("signal parameters must be finite")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def constant(cls, value: float) -> "QuasiPeriodicSignal":
        return cls((), float(value))

    @classmethod
    def sine(cls, amplitude=1.0, frequency=1.0, phase=0.0) -> "QuasiPeriodicSignal":
        return cls(((amplitude, frequency, phase),), 0.0)

    @classmethod
    def cosine(cls, amplitude=1.0, frequency=1.0) -> "QuasiPeriodicSignal":
        return cls(((amplitude, frequency, math.pi / 2),), 0.0)

    @classmethod
    def coerce(cls, value) -> "QuasiPeriodicSignal":
        if isinstance(value, QuasiPeriodicSignal):
            return value
        return cls.constant(float(value))

    def __call__(self, t):
        if np.ndim(t) == 0:
            t = float(t)
            return self.offset + sum(a * math.sin(w * t + p) for a, w, p in self.terms)
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.offset)
        for a, w, p in self.terms:
            out += a * np.sin(w * t + p)
        return out

    def derivative(self, t):
        if np.ndim(t) == 0:
            t = float(t)
            return sum(a * w * math.cos(w * t + p) for a, w, p in self.terms)
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for a, w, p in self.terms:
            out += a * w * np.cos(w * t + p)
        return out

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def bound(self) -> float:
        """Upper bound ``|offset| + sum |amp|`` of ``|s(t)|``."""
        return abs(self.offset) + sum(abs(a) for a, _, _ in self.terms)

    def shifted(self, s: float) -> "QuasiPeriodicSignal":
        """Exact time shift ``t -> s(t + shift)``."""
        return QuasiPeriodicSignal(tuple((a, w, p + w * s) for a, w, p in self.terms), self.offset)

    def __add__(self, other):
        other = QuasiPeriodicSignal.coerce(other)
        terms, offset = _normalise_terms(self.terms + other.terms, self.offset + other.offset)
        return QuasiPeriodicSignal(terms, offset)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-QuasiPeriodicSignal.coerce(other))

    def __rsub__(self, other):
        return QuasiPeriodicSignal.coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, QuasiPeriodicSignal):
            c = float(other)
            return QuasiPeriodicSignal(tuple((c * a, w, p) for a, w, p in self.terms), c * self.offset)
        terms = []
        for a, w, p in self.terms:
            terms.append((a * other.offset, w, p))
        for b, v, q in other.terms:
            terms.append((b * self.offset, v, q))
        # sin A sin B = [cos(A - B) - cos(A + B)] / 2
        for a, w, p in self.terms:
            for b, v, q in other.terms:
                terms.append((a * b / 2, w - v, p - q + math.pi / 2))
                terms.append((-a * b / 2, w + v, p + q + math.pi / 2))
        terms, offset = _normalise_terms(terms, self.offset * other.offset)
        return QuasiPeriodicSignal(terms, offset)

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {"offset": self.offset, "terms": [list(t) for t in self.terms]}

    @classmethod
    def from_json(cls, doc) -> "QuasiPeriodicSignal":
        if isinstance(doc, (int, float)):
            return cls.constant(doc)
        if not isinstance(doc, dict):
            raise InvalidInputError(f"signal must be a number or an object, got {doc!r}")
        terms = doc.get("terms", [])
        try:
            terms = tuple((float(a), float(w), float(p)) for a, w, p in terms)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad signal terms {terms!r}") from exc
        return cls(terms, float(doc.get("offset", 0.0)))


ZERO_SIGNAL = QuasiPeriodicSignal()


@dataclass(frozen=True)
class CoefficientField:
    """One scalar entry of the drift vector or diffusion matrix.

    Either affine in the state, ``sum_j linear[j](t) * x_j + const(t)``, or a
    general vectorised callable ``func(t, x)``. Evaluation happens at
    ``t + shift_offset``.
    """

    linear: tuple[QuasiPeriodicSignal, ...] | None = None
    const: QuasiPeriodicSignal = ZERO_SIGNAL
    func: Callable | None = None
    shift_offset: float = 0.0
    name: str = ""
    spec: dict | None = None

    def __post_init__(self):
        if (self.linear is None) == (self.func is None):
            raise InvalidInputError("a field is either affine (linear=...) or general (func=...)")
        if self.linear is not None:
            object.__setattr__(self, "linear", tuple(QuasiPeriodicSignal.coerce(s) for s in self.linear))
        object.__setattr__(self, "const", QuasiPeriodicSignal.coerce(self.const))

    @classmethod
    def affine(cls, linear: Sequence, const=0.0) -> "CoefficientField":
        return cls(linear=tuple(linear), const=const)

    @classmethod
    def zero(cls, d: int) -> "CoefficientField":
        return cls(linear=(ZERO_SIGNAL,) * d, const=ZERO_SIGNAL)

    @classmethod
    def general(cls, func: Callable, name: str = "", spec: dict | None = None) -> "CoefficientField":
        return cls(func=func, name=name, spec=spec)

    @property
    def structure(self) -> str:
        return "affine" if self.linear is not None else "general"

    @property
    def time_independent(self) -> bool:
        if self.linear is None:
            return False
        return self.const.is_constant and all(s.is_constant for s in self.linear)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float) + self.shift_offset if np.ndim(t) else float(t) + self.shift_offset
        if self.linear is not None:
            if x.shape[-1] != len(self.linear):
                raise InvalidInputError(
                    f"field expects state dimension {len(self.linear)}, got {x.shape[-1]}"
                )
            out = self.const(t) + np.zeros(x.shape[:-1])
            for j, s in enumerate(self.linear):
                if s.offset != 0.0 or s.terms:
                    out = out + s(t) * x[..., j]
            return out
        return np.broadcast_to(np.asarray(self.func(t, x), dtype=float), x.shape[:-1])

    def coefficients(self, t: float):
        """Return ``(linear, const)`` values at scalar time ``t`` for affine fields."""
        t = float(t) + self.shift_offset
        return np.array([s(t) for s in self.linear]), self.const(t)

    def partial(self, t, x, j: int, eta: float | None = None):
        """Partial derivative with respect to ``x_j`` (exact for affine fields,
        central differences with step ``1e-5 * (1 + |x|)`` otherwise)."""
        x = np.asarray(x, dtype=float)
        if self.linear is not None:
            tt = np.asarray(t, dtype=float) + self.shift_offset
            return np.broadcast_to(self.linear[j](tt), x.shape[:-1]).astype(float)
        if eta is None:
            eta = 1e-5 * (1.0 + np.linalg.norm(x, axis=-1))
        eta = np.asarray(eta, dtype=float)
        e = np.zeros(x.shape[-1])
        e[j] = 1.0
        step = eta[..., None] * e
        return (self(t, x + step) - self(t, x - step)) / (2 * eta)

    def shifted(self, s: float) -> "CoefficientField":
        return replace(self, shift_offset=self.shift_offset + float(s))

    def to_json(self) -> dict:
        if self.linear is not None:
            doc = {
                "affine": {
                    "linear": [sig.to_json() for sig in self.linear],
                    "const": self.const.to_json(),
                }
            }
        elif self.spec is not None:
            doc = dict(self.spec)
        else:
            raise InvalidInputError(f"field {self.name or '<callable>'} has no JSON form")
        if self.shift_offset:
            doc["shift"] = self.shift_offset
        return doc


FIELD_BUILTINS: dict[str, Callable[..., CoefficientField]] = {}


def register_field(name: str):
    """Register a factory for named general fields used in JSON model documents."""

    def deco(factory):
        FIELD_BUILTINS[name] = factory
        return factory

    return deco


@register_field("sin_state")
def _sin_state(amplitude=1.0, index=0, frequency=1.0):
    amplitude, index, frequency = float(amplitude), int(index), float(frequency)

    def func(t, x):
        return amplitude * np.sin(frequency * x[..., index])

    spec = {"builtin": "sin_state", "amplitude": amplitude, "index": index, "frequency": frequency}
    return CoefficientField.general(func, name="sin_state", spec=spec)


@register_field("tanh_state")
def _tanh_state(amplitude=1.0, index=0):
    amplitude, index = float(amplitude), int(index)

    def func(t, x):
        return amplitude * np.tanh(x[..., index])

    spec = {"builtin": "tanh_state", "amplitude": amplitude, "index": index}
    return CoefficientField.general(func, name="tanh_state", spec=spec)


def field_from_json(doc, d: int) -> CoefficientField:
    if doc == 0 or doc is None:
        return CoefficientField.zero(d)
    if not isinstance(doc, dict):
        raise InvalidInputError(f"field must be an object, got {doc!r}")
    shift = float(doc.get("shift", 0.0))
    if "affine" in doc:
        body = doc["affine"]
        linear = body.get("linear", [0.0] * d)
        if len(linear) != d:
            raise InvalidInputError(f"affine field needs {d} linear signals, got {len(linear)}")
        fld = CoefficientField.affine(
            [QuasiPeriodicSignal.from_json(s) for s in linear],
            QuasiPeriodicSignal.from_json(body.get("const", 0.0)),
        )
    elif "builtin" in doc:
        name = doc["builtin"]
        if name not in FIELD_BUILTINS:
            raise InvalidInputError(f"unknown builtin field {name!r}; known: {sorted(FIELD_BUILTINS)}")
        params = {k: v for k, v in doc.items() if k not in ("builtin", "shift")}
        try:
            fld = FIELD_BUILTINS[name](**params)
        except TypeError as exc:
            raise InvalidInputError(f"bad parameters for builtin field {name!r}: {exc}") from exc
    else:
        raise InvalidInputError(f"field needs an 'affine' or 'builtin' key, got {sorted(doc)}")
    return fld.shifted(shift) if shift else fld


_SHIFT_SUFFIX = re.compile(r"\[t\+[^\]]*\]$")


@dataclass(frozen=True)
class SdeModel:
    """Drift/diffusion fields with declared Lipschitz constant ``K`` and
    growth constant ``Khat``."""

    d: int
    m: int
    drift: tuple[CoefficientField, ...]
    diffusion: tuple[tuple[CoefficientField, ...], ...]
    lipschitz_K: float = 1.0
    growth_Khat: float = 1.0
    label: str = "model"
    time_shift: float = 0.0

    def __post_init__(self):
        drift = tuple(self.drift)
        diffusion = tuple(tuple(row) for row in self.diffusion)
        if self.d < 1 or self.m < 1:
            raise InvalidInputError("d and m must be positive")
        if len(drift) != self.d:
            raise InvalidInputError(f"drift has {len(drift)} fields, expected d={self.d}")
        if len(diffusion) != self.d or any(len(row) != self.m for row in diffusion):
            raise InvalidInputError(f"diffusion must be a {self.d}x{self.m} array of fields")
        for name in ("lipschitz_K", "growth_Khat"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be finite and positive, got {v}")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)

    @property
    def is_affine(self) -> bool:
        return all(f.linear is not None for f in self.drift) and all(
            f.linear is not None for row in self.diffusion for f in row
        )

    @property
    def time_independent(self) -> bool:
        return all(f.time_independent for f in self.drift) and all(
            f.time_independent for row in self.diffusion for f in row
        )

    def _check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise InvalidInputError(f"state must have trailing dimension d={self.d}, got shape {x.shape}")
        return x

    def drift_at(self, t, x) -> np.ndarray:
        """Drift vector, shape ``x.shape``."""
        x = self._check_state(x)
        return np.stack([f(t, x) for f in self.drift], axis=-1)

    def diffusion_at(self, t, x) -> np.ndarray:
        """Diffusion matrix, shape ``x.shape + (m,)``; rows are state components."""
        x = self._check_state(x)
        return np.stack([np.stack([g(t, x) for g in row], axis=-1) for row in self.diffusion], axis=-2)

    def affine_matrices(self, t: float):
        """For affine models: ``(F, f0, G, g0)`` with drift ``F x + f0`` and
        diffusion entry ``(i, l) = G[i, l] . x + g0[i, l]``."""
        F = np.empty((self.d, self.d))
        f0 = np.empty(self.d)
        for i, fld in enumerate(self.drift):
            F[i], f0[i] = fld.coefficients(t)
        G = np.empty((self.d, self.m, self.d))
        g0 = np.empty((self.d, self.m))
        for i, row in enumerate(self.diffusion):
            for l, fld in enumerate(row):
                G[i, l], g0[i, l] = fld.coefficients(t)
        return F, f0, G, g0

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "drift": [f.to_json() for f in self.drift],
            "diffusion": [[g.to_json() for g in row] for row in self.diffusion],
            "K": self.lipschitz_K,
            "Khat": self.growth_Khat,
            "label": self.label,
        }


def model_from_json(doc) -> SdeModel:
    """Build a model from the JSON document schema (dict or JSON text)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError("model document must be a JSON object")
    missing = [k for k in ("d", "m", "drift", "diffusion") if k not in doc]
    if missing:
        raise InvalidInputError(f"model document missing keys {missing}")
    d, m = int(doc["d"]), int(doc["m"])
    drift = tuple(field_from_json(f, d) for f in doc["drift"])
    diffusion = tuple(tuple(field_from_json(g, d) for g in row) for row in doc["diffusion"])
    return SdeModel(
        d=d,
        m=m,
        drift=drift,
        diffusion=diffusion,
        lipschitz_K=float(doc.get("K", 1.0)),
        growth_Khat=float(doc.get("Khat", 1.0)),
        label=str(doc.get("label", "model")),
    )


def model_to_json(model: SdeModel) -> dict:
    return model.to_json()


def shift_model(model: SdeModel, s: float) -> SdeModel:
    """Return the time-shifted model ``(t, x) -> (f(t + s, x), g(t + s, x))``."""
    s = float(s)
    total = model.time_shift + s
    root = _SHIFT_SUFFIX.sub("", model.label)
    return replace(
        model,
        drift=tuple(f.shifted(s) for f in model.drift),
        diffusion=tuple(tuple(g.shifted(s) for g in row) for row in model.diffusion),
        time_shift=total,
        label=root if total == 0 else f"{root}[t+{total:.17g}]",
    )


@dataclass(frozen=True)
class Box:
    """Time interval times an axis-aligned state box."""

    t_range: tuple[float, float]
    x_low: tuple[float, ...]
    x_high: tuple[float, ...]

    def __post_init__(self):
        lo, hi = np.asarray(self.x_low, dtype=float), np.asarray(self.x_high, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise InvalidInputError("box corners must be equal-length vectors")
        if not np.all(hi > lo):
            raise InvalidInputError("state box is degenerate (zero volume)")
        t0, t1 = map(float, self.t_range)
        if not (math.isfinite(t0) and math.isfinite(t1)) or t1 < t0:
            raise InvalidInputError("time interval must satisfy t_lo <= t_hi")
        object.__setattr__(self, "t_range", (t0, t1))
        object.__setattr__(self, "x_low", tuple(lo.tolist()))
        object.__setattr__(self, "x_high", tuple(hi.tolist()))

    @classmethod
    def cube(cls, d: int, half_width: float, t_range=(0.0, 1.0)) -> "Box":
        return cls(tuple(t_range), (-half_width,) * d, (half_width,) * d)

    @property
    def d(self) -> int:
        return len(self.x_low)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.x_high, self.x_low)))

    def sample_t(self, rng, n):
        return rng.uniform(self.t_range[0], self.t_range[1], size=n)

    def sample_x(self, rng, n):
        return rng.uniform(self.x_low, self.x_high, size=(n, self.d))

    def sample_near(self, rng, x):
        """Points within ``1e-3 * diameter`` of each row of ``x`` (at least a
        tenth of that radius, which keeps difference quotients well
        conditioned)."""
        u = rng.standard_normal(x.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(0.1, 1.0, size=(x.shape[0], 1)) * NEAR_DIAGONAL_SCALE * self.diameter
        return x + r * u

    def sample_pairs(self, rng, n):
        """``(t, x, y)`` with a quarter of the pairs near the diagonal."""
        n_near = int(round(NEAR_DIAGONAL_FRACTION * n))
        t = self.sample_t(rng, n)
        x = self.sample_x(rng, n)
        y = np.empty_like(x)
        y[: n - n_near] = self.sample_x(rng, n - n_near)
        y[n - n_near :] = self.sample_near(rng, x[n - n_near :])
        return t, x, y

    def to_json(self) -> dict:
        return {"t": list(self.t_range), "low": list(self.x_low), "high": list(self.x_high)}

    @classmethod
    def from_json(cls, doc, d: int | None = None) -> "Box":
        if not isinstance(doc, dict):
            raise InvalidInputError("box must be an object")
        t = doc.get("t", [0.0, 1.0])
        if "half_width" in doc:
            if d is None:
                raise InvalidInputError("half_width boxes need a known dimension")
            hw = float(doc["half_width"])
            return cls(tuple(t), (-hw,) * d, (hw,) * d)
        return cls(tuple(t), tuple(doc["low"]), tuple(doc["high"]))


def _as_report_point(t, *arrays):
    return (float(t),) + tuple(tuple(float(v) for v in np.atleast_1d(a)) for a in arrays)


@dataclass(frozen=True)
class LipschitzReport:
    max_drift_ratio: float
    max_diffusion_ratio: float
    max_growth_ratio: float
    worst_points: list = field(default_factory=list)
    samples_used: int = 0
    pass_: bool = False
    declared_K: float = 0.0
    declared_Khat: float = 0.0

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_json(self) -> dict:
        return {
            "condition_id": "lipschitz_growth",
            "max_drift_ratio": self.max_drift_ratio,
            "max_diffusion_ratio": self.max_diffusion_ratio,
            "max_growth_ratio": self.max_growth_ratio,
            "declared_K": self.declared_K,
            "declared_Khat": self.declared_Khat,
            "worst_points": [[p[0], *map(list, p[1:])] for p in self.worst_points],
            "samples_used": self.samples_used,
            "pass": self.pass_,
        }


def _check_finite(values, t, x, what):
    bad = ~np.isfinite(values)
    if bad.any():
        idx = np.argwhere(bad)[0]
        k = idx[0]
        raise NumericError(
            f"non-finite {what} at t={float(np.atleast_1d(t)[k])!r}, x={np.asarray(x)[k].tolist()!r}"
        )


def estimate_lipschitz(
    model: SdeModel, box: Box, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-9
) -> LipschitzReport:
    """Sample Lipschitz and growth ratios of ``model`` over ``box``.

    Returns the maxima of ``|f(t,x) - f(t,y)| / |x - y|``, the Frobenius
    analogue for ``g``, and ``max(|f(t,x)|, |g(t,x)|) / (1 + |x|^2)``. The
    report passes when each ratio is within ``tol`` (relative to the
    constant) of the declared ``K`` or ``Khat``.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    if box.d != model.d:
        raise InvalidInputError(f"box dimension {box.d} does not match model d={model.d}")
    rng = np.random.default_rng(seed)
    t, x, y = box.sample_pairs(rng, n_samples)
    fx, fy = model.drift_at(t, x), model.drift_at(t, y)
    gx, gy = model.diffusion_at(t, x), model.diffusion_at(t, y)
    for vals, pts, what in ((fx, x, "drift"), (fy, y, "drift"), (gx, x, "diffusion"), (gy, y, "diffusion")):
        _check_finite(vals.reshape(len(t), -1).sum(axis=1), t, pts, what)

    sep = np.linalg.norm(x - y, axis=1)
    ok = sep > 0
    sep = np.where(ok, sep, 1.0)
    drift_ratio = np.where(ok, np.linalg.norm(fx - fy, axis=1) / sep, 0.0)
    diff_ratio = np.where(ok, np.linalg.norm((gx - gy).reshape(len(t), -1), axis=1) / sep, 0.0)
    growth = np.maximum(
        np.linalg.norm(fx, axis=1), np.linalg.norm(gx.reshape(len(t), -1), axis=1)
    ) / (1.0 + np.sum(x * x, axis=1))

    i_d, i_g, i_h = int(np.argmax(drift_ratio)), int(np.argmax(diff_ratio)), int(np.argmax(growth))
    worst = [
        _as_report_point(t[i_d], x[i_d], y[i_d]),
        _as_report_point(t[i_g], x[i_g], y[i_g]),
        _as_report_point(t[i_h], x[i_h], x[i_h]),
    ]
    K, Khat = model.lipschitz_K, model.growth_Khat
    max_d, max_g, max_h = float(drift_ratio[i_d]), float(diff_ratio[i_g]), float(growth[i_h])
    passed = max_d <= K * (1 + tol) and max_g <= K * (1 + tol) and max_h <= Khat * (1 + tol)
    return LipschitzReport(
        max_drift_ratio=max_d,
        max_diffusion_ratio=max_g,
        max_growth_ratio=max_h,
        worst_points=worst,
        samples_used=int(n_samples),
        pass_=bool(passed),
        declared_K=K,
        declared_Khat=Khat,
    )
