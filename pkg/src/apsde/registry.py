"""Built-in model instances and their verified hypothesis parameters.

``example1``..``example3`` are one-dimensional and two-dimensional
almost periodic models that satisfy the dissipativity hypotheses with
``V = |x|^2``. The remaining entries are control models used by tests and
the CLI (Ornstein-Uhlenbeck, Brownian motion, an exponentially unstable
model and the zero model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .lyapunov import ConditionReport, LyapunovFunction, RateFunction
from .model import FIELD_BUILTINS, Box, CoefficientField, QuasiPeriodicSignal, SdeModel

__all__ = [
    "ExampleSpec",
    "EXAMPLES",
    "get_example",
    "example1_model",
    "example2_model",
    "example3_model",
    "ou_model",
    "brownian_model",
    "zero_model",
    "antidissipative_model",
    "check_scalar_derivative_bounds",
    "check_diagonal_drift_bound",
]

SQRT2, SQRT3 = math.sqrt(2.0), math.sqrt(3.0)
Sig = QuasiPeriodicSignal


def _aff(linear, const=0.0) -> CoefficientField:
    return CoefficientField.affine(linear, const)


def example1_model() -> SdeModel:
    """``dX = (-2X + sin(t)/2 + sin(sqrt2 t)/2) dt + sin(X)/2 dW``."""
    forcing = Sig.sine(0.5, 1.0) + Sig.sine(0.5, SQRT2)
    drift = (_aff([-2.0], forcing),)
    diffusion = ((FIELD_BUILTINS["sin_state"](amplitude=0.5, index=0, frequency=1.0),),)
    return SdeModel(1, 1, drift, diffusion, lipschitz_K=2.0, growth_Khat=2.0, label="example1")


def example2_model(sigma: float = 1.0) -> SdeModel:
    """Rotating linear drift with affine diagonal noise.

    ``f_i(t, x) = -3x``, ``A_1 = sin t``, ``A_2 = cos(sqrt2 t)``,
    ``g_1 = cos t``, ``g_2 = sin(sqrt3 t)/2``.
    """
    A1, A2 = Sig.sine(1.0, 1.0), Sig.cosine(1.0, SQRT2)
    g1, g2 = Sig.cosine(1.0, 1.0), Sig.sine(0.5, SQRT3)
    drift = (_aff([-3.0, sigma]), _aff([-sigma, -3.0]))
    diffusion = (
        (_aff([A1, 0.0], g1), CoefficientField.zero(2)),
        (CoefficientField.zero(2), _aff([0.0, A2], g2)),
    )
    K = math.hypot(3.0, sigma) + 0.05
    return SdeModel(2, 2, drift, diffusion, lipschitz_K=K, growth_Khat=2.0, label="example2")


def example3_model(A1: QuasiPeriodicSignal | None = None, A2: QuasiPeriodicSignal | None = None, label="example3") -> SdeModel:
    """Homogeneous linear model with drift matrix built from ``A_1^2, A_2^2``.

    Defaults: ``A_1 = sin t``, ``A_2 = sin(sqrt2 t)``.
    """
    A1 = Sig.sine(1.0, 1.0) if A1 is None else A1
    A2 = Sig.sine(1.0, SQRT2) if A2 is None else A2
    S1, S2 = A1 * A1, A2 * A2
    diag = -(S1 + S2 + 1.0)
    drift = (_aff([diag, 2.0 * S1]), _aff([2.0 * S2, diag]))
    diffusion = (
        (_aff([A1, -A1]), CoefficientField.zero(2)),
        (CoefficientField.zero(2), _aff([A2, -A2])),
    )
    bound = max(A1.bound(), A2.bound()) ** 2
    K = 1.0 + 4.0 * bound + 0.05
    return SdeModel(2, 2, drift, diffusion, lipschitz_K=K, growth_Khat=K / 2 + 0.5, label=label)


def example3_periodic_model() -> SdeModel:
    """Example 3 with ``A_2 = cos t``: every coefficient is ``2 pi``-periodic."""
    return example3_model(Sig.sine(1.0, 1.0), Sig.cosine(1.0, 1.0), label="example3_periodic")


def ou_model(theta: float = 1.0, sigma: float = 1.0) -> SdeModel:
    return SdeModel(1, 1, (_aff([-theta]),), ((_aff([0.0], sigma),),), max(theta, 1e-3), max(theta, sigma, 1e-3), "ou")


def brownian_model(d: int = 1) -> SdeModel:
    drift = tuple(CoefficientField.zero(d) for _ in range(d))
    diffusion = tuple(tuple(_aff([0.0] * d, 1.0 if i == l else 0.0) for l in range(d)) for i in range(d))
    return SdeModel(d, d, drift, diffusion, 1.0, 1.0, "brownian")


def zero_model(d: int = 1, m: int = 1) -> SdeModel:
    drift = tuple(CoefficientField.zero(d) for _ in range(d))
    diffusion = tuple(tuple(CoefficientField.zero(d) for _ in range(m)) for _ in range(d))
    return SdeModel(d, m, drift, diffusion, 1.0, 1.0, "zero")


def antidissipative_model() -> SdeModel:
    """``dX = X dt``; coupled differences grow like ``e^t``."""
    return SdeModel(1, 1, (_aff([1.0]),), ((CoefficientField.zero(1),),), 1.0, 1.0, "antidissipative")


# -- example-specific hypothesis checks ----------------------------------------


def check_scalar_derivative_bounds(model: SdeModel, c: float, box: Box, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-8) -> ConditionReport:
    """One-dimensional bounds ``df/dx <= -c`` and ``|dg/dx|^2 <= c`` on sampled points.

    ``worst_value`` is the max of ``df/dx + c`` and ``|dg/dx|^2 - c``.
    """
    if model.d != 1 or model.m != 1:
        raise InvalidInputError("scalar derivative bounds need d = m = 1")
    rng = np.random.default_rng(seed)
    t = box.sample_t(rng, n_samples)
    x = box.sample_x(rng, n_samples)
    df = np.asarray(model.drift[0].partial(t, x, 0), dtype=float)
    dg = np.asarray(model.diffusion[0][0].partial(t, x, 0), dtype=float)
    excess = np.maximum(df + c, dg * dg - c)
    k = int(np.argmax(excess))
    return ConditionReport(
        "scalar_derivative_bounds",
        float(excess[k]),
        {"t": float(t[k]), "x": [float(x[k, 0])]},
        int(n_samples),
        float(tol),
        bool(excess[k] <= tol),
        {"c": float(c), "max_df_dx": float(df.max()), "max_dg_dx_sq": float((dg * dg).max())},
    )


def check_diagonal_drift_bound(model: SdeModel, box: Box, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-8) -> ConditionReport:
    """``d f_i / d x_i <= -2 a(t) - 1`` with ``a = max_i (A_i^2, g_i^2)``.

    For models whose diffusion is diagonal with entries ``A_i(t) x_i + g_i(t)``;
    ``f_i`` is the drift component with the cross term removed, so its
    derivative is the diagonal partial of the drift.
    """
    d = model.d
    if model.m != d or not model.is_affine:
        raise InvalidInputError("diagonal drift bound needs an affine model with m = d")
    rng = np.random.default_rng(seed)
    t = box.sample_t(rng, n_samples)
    x = box.sample_x(rng, n_samples)
    a = np.zeros(n_samples)
    for i in range(d):
        fld = model.diffusion[i][i]
        A = fld.linear[i](t + fld.shift_offset)
        g = fld.const(t + fld.shift_offset)
        a = np.maximum(a, np.maximum(A * A, g * g))
    excess = np.full(n_samples, -np.inf)
    for i in range(d):
        excess = np.maximum(excess, np.asarray(model.drift[i].partial(t, x, i), dtype=float) + 2 * a + 1)
    k = int(np.argmax(excess))
    return ConditionReport(
        "diagonal_drift_bound",
        float(excess[k]),
        {"t": float(t[k]), "x": x[k].tolist()},
        int(n_samples),
        float(tol),
        bool(excess[k] <= tol),
        {"max_a": float(a.max())},
    )


# -- registry -----------------------------------------------------------------


@dataclass(frozen=True)
class ExampleSpec:
    """A model together with verified Lyapunov data and default experiments.

    ``a, b`` are the quadratic bounds of ``V``; ``rate`` the dissipativity
    rate; ``single_radius`` the radius beyond which ``lv_single <= 0``;
    ``Mbar`` bounds ``V`` on ``|x| <= single_radius``; ``r`` is the
    initial-law radius used for the merge time.
    """

    name: str
    build: Callable[[], SdeModel]
    rate: RateFunction
    a: float = 1.0
    b: float = 1.0
    box_half_width: float = 5.0
    t_range: tuple[float, float] = (0.0, 100.0)
    single_radius: float | None = None
    Mbar: float | None = None
    c0: float = 0.0
    init_pairs: tuple = ()
    tail_init_pair: tuple | None = None
    r: float = 2.0
    moment_init: tuple | None = None
    signals: dict = field(default_factory=dict)
    extra_checks: tuple = ()
    description: str = ""

    def model(self) -> SdeModel:
        return self.build()

    def lyapunov(self) -> LyapunovFunction:
        return LyapunovFunction.norm2(self.build().d)

    def box(self, d: int | None = None) -> Box:
        d = self.build().d if d is None else d
        return Box.cube(d, self.box_half_width, self.t_range)


def _ex3_signals(A1, A2):
    return {"A1^2": A1 * A1, "A2^2": A2 * A2}


EXAMPLES: dict[str, ExampleSpec] = {
    "example1": ExampleSpec(
        "example1",
        example1_model,
        RateFunction.linear(1.0),
        single_radius=1.0,
        Mbar=1.0,
        init_pairs=(((0.0,), (2.0,)),),
        tail_init_pair=((0.0,), (0.5,)),
        r=2.0,
        moment_init=(0.0,),
        extra_checks=(("scalar_derivative_bounds", {"c": 1.0}),),
        description="scalar model, drift slope -2, noise sin(x)/2",
    ),
    "example2": ExampleSpec(
        "example2",
        example2_model,
        RateFunction.linear(2.0),
        single_radius=SQRT2,
        Mbar=2.0,
        init_pairs=(((3.0, 3.0), (0.0, 0.0)),),
        tail_init_pair=((0.0, 0.0), (0.5, 0.0)),
        r=3.0 * SQRT2,
        moment_init=(0.0, 0.0),
        extra_checks=(("diagonal_drift_bound", {}),),
        description="2-D rotating drift, affine diagonal noise",
    ),
    "example3": ExampleSpec(
        "example3",
        example3_model,
        RateFunction.linear(2.0),
        single_radius=SQRT2,
        Mbar=2.0,
        init_pairs=(((1.0, 1.0), (-1.0, 0.0)),),
        tail_init_pair=((0.0, 0.0), (0.5, 0.0)),
        r=math.sqrt(5.0),
        moment_init=(1.0, 1.0),
        signals=_ex3_signals(Sig.sine(1.0, 1.0), Sig.sine(1.0, SQRT2)),
        description="2-D homogeneous linear model with quasi-periodic coefficients",
    ),
    "example3_periodic": ExampleSpec(
        "example3_periodic",
        example3_periodic_model,
        RateFunction.linear(2.0),
        single_radius=SQRT2,
        Mbar=2.0,
        init_pairs=(((1.0, 1.0), (-1.0, 0.0)),),
        tail_init_pair=((0.0, 0.0), (0.5, 0.0)),
        r=math.sqrt(5.0),
        moment_init=(1.0, 1.0),
        signals=_ex3_signals(Sig.sine(1.0, 1.0), Sig.cosine(1.0, 1.0)),
        description="example3 with 2 pi-periodic coefficients",
    ),
    "ou": ExampleSpec(
        "ou",
        ou_model,
        RateFunction.linear(2.0),
        init_pairs=(((0.0,), (1.0,)),),
        tail_init_pair=((0.0,), (0.1,)),
        r=1.0,
        moment_init=(0.0,),
        description="Ornstein-Uhlenbeck control",
    ),
}

MODELS: dict[str, Callable[[], SdeModel]] = {
    "example1": example1_model,
    "example2": example2_model,
    "example3": example3_model,
    "example3_periodic": example3_periodic_model,
    "ou": ou_model,
    "brownian": brownian_model,
    "zero": zero_model,
    "antidissipative": antidissipative_model,
}


def get_example(name: str) -> ExampleSpec:
    try:
        return EXAMPLES[name]
    except KeyError:
        raise InvalidInputError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None


def get_model(name: str) -> SdeModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise InvalidInputError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
