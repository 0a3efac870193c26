"""Empirical laws and Wasserstein-1 distances between them.

In one dimension the distance is the exact W1 of the two empirical laws.
In higher dimensions it is the sliced W1: the average of exact 1-D
distances over a fixed set of unit directions drawn from
``MetricConfig.projection_seed``. For a fixed direction set this is a
metric on empirical laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .lyapunov import RateFunction

__all__ = [
    "EmpiricalLaw",
    "LawTrajectory",
    "MetricConfig",
    "ConvergenceReport",
    "rho_distance",
    "w1_exact_1d",
    "law_trajectory",
    "sup_distance",
    "convergence_check",
    "distance_curve",
]


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] == 0:
            raise InvalidInputError("empirical law needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise InvalidInputError("empirical law samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    def to_csv(self, path) -> None:
        header = ",".join(f"x{i}" for i in range(self.d))
        rows = [",".join(repr(v) for v in row) for row in self.samples.tolist()]
        Path(path).write_text(header + "\n" + "\n".join(rows) + "\n")


@dataclass(frozen=True)
class MetricConfig:
    kind: str = "sliced-w1"
    n_projections: int = 64
    projection_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exact-1d-w1", "sliced-w1"):
            raise InvalidInputError(f"unknown metric kind {self.kind!r}")
        if self.kind == "sliced-w1" and self.n_projections < 1:
            raise InvalidInputError("sliced metric needs n_projections >= 1")

    def directions(self, d: int) -> np.ndarray:
        if d == 1:
            return np.ones((1, 1))
        if self.kind == "exact-1d-w1":
            raise InvalidInputError("exact 1-D metric requested for d >= 2")
        return _directions(d, int(self.n_projections), int(self.projection_seed))

    def describe(self, d: int) -> str:
        return "exact-1d-w1" if d == 1 else f"sliced-w1(n={self.n_projections}, seed={self.projection_seed})"

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_projections": self.n_projections, "projection_seed": self.projection_seed}

    @classmethod
    def from_json(cls, doc) -> "MetricConfig":
        doc = doc or {}
        return cls(doc.get("kind", "sliced-w1"), int(doc.get("n_projections", 64)), int(doc.get("projection_seed", 0)))


@lru_cache(maxsize=64)
def _directions(d: int, n: int, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u.setflags(write=False)
    return u


def w1_exact_1d(a, b) -> float:
    """Exact W1 between two 1-D empirical laws.

    Equal sizes use the sorted (monotone) coupling; unequal sizes integrate
    ``|F_a - F_b|`` over the merged support.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    return _w1_sorted(a, b)


def _w1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("empty law")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    allv = np.concatenate([a, b])
    allv.sort(kind="mergesort")
    deltas = np.diff(allv)
    fa = np.searchsorted(a, allv[:-1], side="right") / a.size
    fb = np.searchsorted(b, allv[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * deltas))


def _projected_sorted(samples: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Sorted projections, shape ``(n_directions, N)``."""
    if dirs.shape == (1, 1):
        proj = samples[:, :1].T.copy()
    else:
        proj = dirs @ samples.T
    proj.sort(axis=1)
    return proj


def _sliced_from_sorted(pa: np.ndarray, pb: np.ndarray) -> float:
    if pa.shape[1] == pb.shape[1]:
        return float(np.mean(np.abs(pa - pb)))
    return float(np.mean([_w1_sorted(x, y) for x, y in zip(pa, pb)]))


def _as_law(law) -> EmpiricalLaw:
    return law if isinstance(law, EmpiricalLaw) else EmpiricalLaw(law)


def rho_distance(lawA, lawB, config: MetricConfig = MetricConfig()) -> float:
    """Distance between two empirical laws (exact W1 in 1-D, sliced W1 otherwise)."""
    lawA, lawB = _as_law(lawA), _as_law(lawB)
    if lawA.d != lawB.d:
        raise InvalidInputError(f"dimension mismatch {lawA.d} vs {lawB.d}")
    dirs = config.directions(lawA.d)
    return _sliced_from_sorted(_projected_sorted(lawA.samples, dirs), _projected_sorted(lawB.samples, dirs))


@dataclass(frozen=True, eq=False)
class LawTrajectory:
    """``states[:, k]`` holds the samples of the law at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[1] != len(self.times):
            raise InvalidInputError("states must have shape (N, len(times), d)")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("times must be strictly increasing")

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def law(self, k: int) -> EmpiricalLaw:
        return EmpiricalLaw(self.states[:, k])

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        return k

    def sorted_projections(self, k: int, config: MetricConfig) -> np.ndarray:
        return _projected_sorted(np.asarray(self.states[:, k]), config.directions(self.d))


def law_trajectory(ensemble) -> LawTrajectory:
    """Zero-copy view of the ensemble's time marginals."""
    if ensemble.N < 1:
        raise InvalidInputError("empty ensemble")
    return LawTrajectory(ensemble.times, ensemble.states)


def _common_indices(trajA: LawTrajectory, trajB: LawTrajectory, window=None):
    """Matching index pairs of the two grids (within ``window`` if given)."""
    tol = 1e-9 * max(trajA.step, trajB.step, 1e-12)
    ia, ib = [], []
    j = 0
    tb = trajB.times
    for i, t in enumerate(trajA.times):
        if window is not None and not (window[0] - tol <= t <= window[1] + tol):
            continue
        j = int(np.searchsorted(tb, t - tol))
        if j < len(tb) and abs(tb[j] - t) <= tol:
            ia.append(i)
            ib.append(j)
    return np.array(ia, dtype=int), np.array(ib, dtype=int)


def distance_curve(trajA: LawTrajectory, trajB: LawTrajectory, config: MetricConfig = MetricConfig(), window=None):
    """``(times, rho(muA(t), muB(t)))`` over the shared grid points."""
    if trajA.d != trajB.d:
        raise InvalidInputError("trajectories differ in dimension")
    ia, ib = _common_indices(trajA, trajB, window)
    if ia.size == 0:
        raise InvalidInputError("trajectories share no grid points in the window")
    dists = np.array(
        [_sliced_from_sorted(trajA.sorted_projections(i, config), trajB.sorted_projections(j, config)) for i, j in zip(ia, ib)]
    )
    return trajA.times[ia], dists, ia, ib


def sup_distance(trajA: LawTrajectory, trajB: LawTrajectory, window, config: MetricConfig = MetricConfig()):
    """``(sup, argmax_time)`` of ``rho(muA(t), muB(t))`` over grid times in ``window``."""
    if window[1] < window[0]:
        raise InvalidInputError("empty window")
    times, dists, _, _ = distance_curve(trajA, trajB, config, window)
    k = int(np.argmax(dists))
    return float(dists[k]), float(times[k])


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    times: np.ndarray
    distances: np.ndarray
    mean_sq_diff: np.ndarray | None
    mean_sq_se: np.ndarray | None
    quantity: str
    epsilon: float
    crossing_time: float | None
    merge_time_bound: float | None
    within_bound: bool | None
    stays_below: bool | None
    metric: str

    @property
    def passed(self) -> bool:
        return self.crossing_time is not None and self.within_bound is not False and self.stays_below is not False

    def to_json(self) -> dict:
        return {
            "quantity": self.quantity,
            "epsilon": self.epsilon,
            "crossing_time": self.crossing_time,
            "merge_time_bound": self.merge_time_bound,
            "within_bound": self.within_bound,
            "stays_below": self.stays_below,
            "metric": self.metric,
            "final_distance": float(self.distances[-1]),
            "pass": self.passed,
        }

    def csv_text(self) -> str:
        if self.mean_sq_diff is None:
            lines = ["time,distance"] + [f"{t!r},{v!r}" for t, v in zip(self.times.tolist(), self.distances.tolist())]
        else:
            lines = ["time,distance,mean_sq_diff"] + [
                f"{t!r},{v!r},{w!r}"
                for t, v, w in zip(self.times.tolist(), self.distances.tolist(), self.mean_sq_diff.tolist())
            ]
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())


def merge_time(b: float, r: float, c: RateFunction, epsilon: float) -> float:
    """``T(eps) = 2 b r^2 / c(eps) + 1``."""
    ce = float(c(epsilon))
    if ce <= 0:
        raise InvalidInputError("c(epsilon) must be positive")
    return 2.0 * b * r * r / ce + 1.0


def convergence_check(
    trajA: LawTrajectory,
    trajB: LawTrajectory,
    config: MetricConfig = MetricConfig(),
    epsilon: float = 0.01,
    b: float | None = None,
    r: float | None = None,
    c: RateFunction | None = None,
    a: float | None = None,
    coupled: bool = False,
    quantity: str = "auto",
) -> ConvergenceReport:
    """Merging report for two law trajectories on a shared grid.

    The crossing quantity is ``E|XA - XB|^2`` for coupled ensembles (paths
    aligned by index) and ``rho`` otherwise. With ``(b, r, c)`` the first
    crossing, measured from the first grid time, is compared with
    ``T(eps)``; with coupled paths the mean-square difference after the
    crossing must stay below ``(b / a) eps`` within three standard errors.
    """
    if quantity == "auto":
        quantity = "mean_sq" if coupled else "rho"
    if quantity not in ("mean_sq", "rho"):
        raise InvalidInputError(f"unknown crossing quantity {quantity!r}")
    if quantity == "mean_sq" and not coupled:
        raise InvalidInputError("mean-square crossing needs coupled trajectories")
    times, dists, ia, ib = distance_curve(trajA, trajB, config)
    msd = se = None
    if coupled:
        if trajA.N != trajB.N:
            raise InvalidInputError("coupled trajectories need equal sample counts")
        diff = np.asarray(trajA.states[:, ia]) - np.asarray(trajB.states[:, ib])
        sq = np.sum(diff * diff, axis=2)
        msd = sq.mean(axis=0)
        se = sq.std(axis=0, ddof=1) / math.sqrt(sq.shape[0]) if sq.shape[0] > 1 else np.zeros_like(msd)
    series = msd if quantity == "mean_sq" else dists
    below = np.flatnonzero(series < epsilon)
    crossing = float(times[below[0]]) if below.size else None
    bound = within = stays = None
    if b is not None and r is not None and c is not None:
        bound = merge_time(b, r, c, epsilon)
        within = crossing is not None and crossing - times[0] <= bound
    if crossing is not None and msd is not None and quantity == "mean_sq":
        level = (b / a if (a and b) else 1.0) * epsilon
        k0 = int(below[0])
        stays = bool(np.all(msd[k0:] - 3 * se[k0:] < level))
    return ConvergenceReport(
        times, dists, msd, se, quantity, float(epsilon), crossing, bound, within, stays, config.describe(trajA.d)
    )
