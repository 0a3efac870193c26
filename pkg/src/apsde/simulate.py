"""Euler-Maruyama ensembles, synchronous coupling and Monte Carlo probes."""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from .errors import IntegrationOverflowError, InvalidInputError
from .lyapunov import LyapunovFunction, v_epsilon
from .model import SdeModel

__all__ = [
    "TimeGrid",
    "PointMass",
    "GaussianLaw",
    "EmpiricalResample",
    "init_from_json",
    "PathEnsemble",
    "MomentTrajectory",
    "SupermartingaleReport",
    "TailBoundReport",
    "simulate_ensemble",
    "simulate_coupled",
    "supermartingale_probe",
    "tail_bound_check",
    "second_moment_trajectory",
    "save_ensemble",
    "load_ensemble",
]

OVERFLOW_LIMIT = 1e12
MAGIC = b"APSD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQddQ")
_BLOCK_PATH_STEPS = 2**22


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    h: float
    n_steps: int

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidInputError("grid step must be positive")
        if int(self.n_steps) < 1:
            raise InvalidInputError("grid needs at least one step")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def span(cls, t0: float, t_end: float, h: float) -> "TimeGrid":
        n = int(round((t_end - t0) / h))
        return cls(t0, h, n)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * self.n_steps

    def index_of(self, t: float) -> int:
        return int(round((t - self.t0) / self.h))

    def lattice_offset(self) -> int:
        """Global Brownian lattice index of the first step.

        Grids whose ``t0`` is a multiple of ``h`` share one two-sided
        Brownian path; other grids are only allowed for ``t0 >= 0`` and index
        from zero locally.
        """
        q = self.t0 / self.h
        if abs(q - round(q)) <= 1e-9 * max(1.0, abs(q)):
            return int(round(q))
        if self.t0 < 0:
            raise InvalidInputError("negative start times must be integer multiples of the step")
        return 0

    def to_json(self) -> dict:
        return {"t0": self.t0, "h": self.h, "n_steps": self.n_steps}

    @classmethod
    def from_json(cls, doc) -> "TimeGrid":
        if "horizon" in doc:
            t0 = float(doc.get("t0", 0.0))
            return cls.span(t0, t0 + float(doc["horizon"]), float(doc["h"]))
        return cls(float(doc.get("t0", 0.0)), float(doc["h"]), int(doc["n_steps"]))


# -- initial laws -------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    x0: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))

    def sample(self, seed, path_ids, d):
        x0 = np.asarray(self.x0)
        if x0.size != d:
            raise InvalidInputError(f"point mass has dimension {x0.size}, model has d={d}")
        return np.tile(x0, (len(path_ids), 1))

    def describe(self) -> str:
        return json.dumps({"point": list(self.x0)})


@dataclass(frozen=True)
class GaussianLaw:
    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidInputError("covariance shape does not match mean")
        object.__setattr__(self, "mean", tuple(mean.tolist()))
        object.__setattr__(self, "cov", tuple(map(tuple, cov.tolist())))

    def sample(self, seed, path_ids, d):
        mean, cov = np.asarray(self.mean), np.asarray(self.cov)
        if mean.size != d:
            raise InvalidInputError(f"Gaussian law has dimension {mean.size}, model has d={d}")
        # eigh tolerates singular covariances
        w, U = np.linalg.eigh(cov)
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise InvalidInputError("covariance is not positive semidefinite")
        A = U * np.sqrt(np.clip(w, 0, None))
        keys = [_rng.path_key(seed, p, _rng.INITIAL) for p in path_ids]
        z = _rng.normal_block(keys, d, 0, 1)[:, 0, :]
        return mean + z @ A.T

    def describe(self) -> str:
        return json.dumps({"gaussian": {"mean": list(self.mean), "cov": [list(r) for r in self.cov]}})


@dataclass(frozen=True, eq=False)
class EmpiricalResample:
    samples: np.ndarray
    label: str = "samples"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] == 0 or not np.all(np.isfinite(s)):
            raise InvalidInputError("empirical law needs a finite (n, d) sample array")
        object.__setattr__(self, "samples", s)

    def sample(self, seed, path_ids, d):
        if self.samples.shape[1] != d:
            raise InvalidInputError("empirical samples have the wrong dimension")
        keys = [_rng.path_key(seed, p, _rng.INITIAL) for p in path_ids]
        u = _rng.uniform_block(keys, 0, 1)[:, 0]
        idx = np.minimum((u * len(self.samples)).astype(np.int64), len(self.samples) - 1)
        return self.samples[idx]

    def describe(self) -> str:
        return json.dumps({"empirical": {"label": self.label, "n": int(self.samples.shape[0])}})


def init_from_json(doc):
    """``{"point": x0}`` | ``{"gaussian": {"mean", "cov"}}`` | ``{"empirical": samples}``."""
    if isinstance(doc, (PointMass, GaussianLaw, EmpiricalResample)):
        return doc
    if isinstance(doc, (int, float, list)):
        return PointMass(doc)
    if not isinstance(doc, dict):
        raise InvalidInputError(f"unknown initial law {doc!r}")
    if "point" in doc:
        return PointMass(doc["point"])
    if "gaussian" in doc:
        g = doc["gaussian"]
        return GaussianLaw(g["mean"], g["cov"])
    if "empirical" in doc:
        e = doc["empirical"]
        return EmpiricalResample(np.asarray(e["samples"] if isinstance(e, dict) else e))
    raise InvalidInputError(f"unknown initial law keys {sorted(doc)}")


# -- ensembles ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """``states[i, k]`` is path ``i`` at recorded time ``grid.times[k]``.

    ``grid`` is the recorded grid; ``integration_h`` is the Euler step,
    which divides ``grid.h``.
    """

    states: np.ndarray
    grid: TimeGrid
    model_label: str
    seed: int
    init_descriptor: str
    integration_h: float
    m: int = 1

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[1] != self.grid.n_steps + 1:
            raise InvalidInputError("states shape does not match the grid")

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def restrict(self, t_from: float | None = None, t_to: float | None = None) -> "PathEnsemble":
        """View of the ensemble on the recorded times in ``[t_from, t_to]``."""
        times = self.times
        tol = 1e-9 * self.grid.h
        lo = 0 if t_from is None else int(np.searchsorted(times, t_from - tol))
        hi = len(times) if t_to is None else int(np.searchsorted(times, t_to + tol, side="right"))
        if hi - lo < 2:
            raise InvalidInputError("restriction keeps fewer than two recorded times")
        grid = TimeGrid(times[lo], self.grid.h, hi - lo - 1)
        return PathEnsemble(
            self.states[:, lo:hi], grid, self.model_label, self.seed, self.init_descriptor, self.integration_h, self.m
        )


def _zero_signal(sig) -> bool:
    return sig.offset == 0.0 and not sig.terms


class _Stepper:
    """Evaluates ``f h + g dW`` for a chunk of paths."""

    def __init__(self, model: SdeModel):
        self.model = model
        self.affine = model.is_affine
        if self.affine:
            d, m = model.d, model.m
            self.drift_terms = [[j for j in range(d) if not _zero_signal(model.drift[i].linear[j])] for i in range(d)]
            self.diff_terms = [
                [
                    (l, [j for j in range(d) if not _zero_signal(model.diffusion[i][l].linear[j])],
                     not _zero_signal(model.diffusion[i][l].const))
                    for l in range(m)
                ]
                for i in range(d)
            ]

    def step(self, t, X, h, dW):
        model = self.model
        if not self.affine:
            f = model.drift_at(t, X)
            g = model.diffusion_at(t, X)
            out = X + f * h
            for l in range(model.m):
                out = out + g[:, :, l] * dW[:, l : l + 1]
            return out
        F, f0, G, g0 = model.affine_matrices(t)
        out = np.empty_like(X)
        for i in range(model.d):
            fi = np.full(X.shape[0], f0[i])
            for j in self.drift_terms[i]:
                fi = fi + F[i, j] * X[:, j]
            xi = X[:, i] + fi * h
            for l, js, has_const in self.diff_terms[i]:
                if not js and not has_const:
                    continue
                gil = np.full(X.shape[0], g0[i, l])
                for j in js:
                    gil = gil + G[i, l, j] * X[:, j]
                xi = xi + gil * dW[:, l]
            out[:, i] = xi
        return out


def _integrate_chunk(model, X0, grid, path_ids, seed, record_every, substeps):
    N, d, m = len(path_ids), model.d, model.m
    n_rec = grid.n_steps // record_every
    out = np.empty((N, n_rec + 1, d))
    X = np.array(X0, dtype=float)
    out[:, 0] = X
    stepper = _Stepper(model)
    h = grid.h
    h_fine = h / substeps
    k0 = grid.lattice_offset() * substeps
    keys = {
        _rng.POSITIVE: [_rng.path_key(seed, p, _rng.POSITIVE) for p in path_ids],
        _rng.NEGATIVE: [_rng.path_key(seed, p, _rng.NEGATIVE) for p in path_ids],
    }
    block = max(16, _BLOCK_PATH_STEPS // max(1, N * substeps))
    for start in range(0, grid.n_steps, block):
        count = min(block, grid.n_steps - start)
        dW = _rng.increment_block(seed, path_ids, m, h_fine, k0 + start * substeps, count * substeps, keys)
        if substeps > 1:
            dW = dW.reshape(N, count, substeps, m).sum(axis=2)
        for j in range(count):
            k = start + j
            X = stepper.step(grid.t0 + k * h, X, h, dW[:, j])
            if not np.all(np.abs(X) <= OVERFLOW_LIMIT):
                bad = int(np.flatnonzero(~np.all(np.abs(X) <= OVERFLOW_LIMIT, axis=1))[0])
                raise IntegrationOverflowError(
                    f"path {path_ids[bad]} left |x| <= {OVERFLOW_LIMIT:g} at step {k + 1} "
                    f"(t={grid.t0 + (k + 1) * h:.6g})",
                    path=path_ids[bad],
                    step=k + 1,
                )
            if (k + 1) % record_every == 0:
                out[:, (k + 1) // record_every] = X
    return out


def _resolve_threads(threads):
    if threads is None:
        import os

        env = os.environ.get("APSDE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def simulate_ensemble(
    model: SdeModel,
    init,
    grid: TimeGrid,
    N: int,
    seed: int,
    record_every: int = 1,
    threads: int | None = None,
    noise_substeps: int = 1,
) -> PathEnsemble:
    """Euler-Maruyama ensemble ``X_{k+1} = X_k + f(t_k, X_k) h + g(t_k, X_k) dW_k``.

    Path ``i`` is driven by the Brownian stream ``(seed, i)``; results are
    bit-identical for any ``threads``. ``record_every`` keeps every r-th
    state. With ``noise_substeps = s`` each increment is the sum of ``s``
    lattice increments of step ``h / s``, so runs at different ``h`` can
    share one Brownian path.
    """
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    record_every, noise_substeps = int(record_every), int(noise_substeps)
    if record_every < 1 or grid.n_steps % record_every:
        raise InvalidInputError("record_every must divide the number of steps")
    if noise_substeps < 1:
        raise InvalidInputError("noise_substeps must be >= 1")
    init = init_from_json(init)
    path_ids = list(range(N))
    X0 = init.sample(seed, path_ids, model.d)
    threads = min(_resolve_threads(threads), N)
    if threads == 1:
        states = _integrate_chunk(model, X0, grid, path_ids, seed, record_every, noise_substeps)
    else:
        bounds = np.linspace(0, N, threads + 1).astype(int)
        chunks = [(path_ids[a:b], X0[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda c: _integrate_chunk(model, c[1], grid, c[0], seed, record_every, noise_substeps), chunks
                )
            )
        states = np.concatenate(parts, axis=0)
    states.setflags(write=False)
    rec_grid = TimeGrid(grid.t0, grid.h * record_every, grid.n_steps // record_every)
    return PathEnsemble(states, rec_grid, model.label, int(seed), init.describe(), grid.h, model.m)


def simulate_coupled(modelA: SdeModel, modelB: SdeModel, initA, initB, grid: TimeGrid, N: int, seed: int, **kw):
    """Two ensembles whose path ``i`` share the Brownian stream ``(seed, i)``."""
    if modelA.d != modelB.d or modelA.m != modelB.m:
        raise InvalidInputError("coupled models must share d and m")
    a = simulate_ensemble(modelA, initA, grid, N, seed, **kw)
    b = simulate_ensemble(modelB, initB, grid, N, seed, **kw)
    return a, b


# -- probes -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    times: np.ndarray
    mean_value: np.ndarray
    std_error: np.ndarray
    quantity_label: str
    running_max: np.ndarray | None = None

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    def csv_text(self) -> str:
        lines = ["time,mean,std_error"]
        lines += [f"{t!r},{m!r},{s!r}" for t, m, s in zip(self.times.tolist(), self.mean_value.tolist(), self.std_error.tolist())]
        return "\n".join(lines) + "\n"


def _mean_and_se(values: np.ndarray):
    """Column means and standard errors of an ``(N, T)`` array."""
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def _check_coupled(coupled):
    a, b = coupled
    if a.states.shape != b.states.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise InvalidInputError("coupled ensembles must share grid and shape")
    return a, b


@dataclass(frozen=True, eq=False)
class SupermartingaleReport:
    trajectory: MomentTrajectory
    violations: list
    pass_: bool

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_json(self) -> dict:
        return {
            "quantity": self.trajectory.quantity_label,
            "n_times": int(self.trajectory.times.size),
            "violations": self.violations,
            "pass": self.pass_,
        }


def supermartingale_probe(V: LyapunovFunction, coupled, threshold: float = 2.0) -> SupermartingaleReport:
    """Mean and standard error of ``V(t_k, X_A(t_k) - X_B(t_k))``.

    Flags every increase between consecutive recorded times larger than
    ``threshold`` pooled standard errors.
    """
    a, b = _check_coupled(coupled)
    diff = np.asarray(a.states) - np.asarray(b.states)
    times = a.times
    vals = np.asarray(V(times[None, :], diff), dtype=float)
    mean, se = _mean_and_se(vals)
    pooled = np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    inc = np.diff(mean)
    bad = np.flatnonzero(inc > threshold * pooled)
    violations = [
        {"time": float(times[k + 1]), "increase": float(inc[k]), "allowed": float(threshold * pooled[k])}
        for k in bad
    ]
    traj = MomentTrajectory(times, mean, se, f"E {V.label}(t, XA - XB)")
    return SupermartingaleReport(traj, violations, not violations)


@dataclass(frozen=True)
class TailBoundReport:
    frequency: float
    bound: float
    std_error: float
    epsilon: float
    v_epsilon: float
    horizon: tuple[float, float]
    pass_: bool

    @property
    def passed(self) -> bool:
        return self.pass_

    def to_json(self) -> dict:
        return {
            "frequency": self.frequency,
            "bound": self.bound,
            "std_error": self.std_error,
            "epsilon": self.epsilon,
            "v_epsilon": self.v_epsilon,
            "horizon": list(self.horizon),
            "pass": self.pass_,
        }


def tail_bound_check(V: LyapunovFunction, coupled, epsilon: float, lower_a: float) -> TailBoundReport:
    """Compare ``P{max_k |X_A - X_B| >= eps}`` over the recorded grid with
    ``E sqrt(V(t0, dX(t0))) / sqrt(V_eps)``, where ``V_eps = lower_a eps^2``."""
    if epsilon <= 0 or lower_a <= 0:
        raise InvalidInputError("epsilon and lower_a must be positive")
    a, b = _check_coupled(coupled)
    diff = np.asarray(a.states) - np.asarray(b.states)
    sup = np.max(np.linalg.norm(diff, axis=2), axis=1)
    freq = float(np.mean(sup >= epsilon))
    se = math.sqrt(freq * (1 - freq) / a.N)
    v_eps, _ = v_epsilon(V, epsilon, a=lower_a)
    t0 = a.times[0]
    bound = float(np.mean(np.sqrt(np.asarray(V(t0, diff[:, 0]), dtype=float))) / math.sqrt(v_eps))
    return TailBoundReport(
        freq, bound, se, float(epsilon), float(v_eps), (float(t0), float(a.times[-1])), freq <= bound + 3 * se
    )


def second_moment_trajectory(ensemble: PathEnsemble) -> MomentTrajectory:
    """``t_k -> E|X(t_k)|^2`` with standard errors and its running maximum."""
    if ensemble.N < 1:
        raise InvalidInputError("empty ensemble")
    sq = np.sum(np.asarray(ensemble.states) ** 2, axis=2)
    mean, se = _mean_and_se(sq)
    return MomentTrajectory(ensemble.times, mean, se, "E|X(t)|^2", np.maximum.accumulate(mean))


# -- persistence --------------------------------------------------------------


def save_ensemble(ensemble: PathEnsemble, path) -> None:
    """Binary file (little-endian header + row-major float64) plus a JSON sidecar."""
    path = Path(path)
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        ensemble.d,
        ensemble.m,
        ensemble.N,
        ensemble.grid.n_steps,
        ensemble.grid.t0,
        ensemble.grid.h,
        ensemble.seed & (2**64 - 1),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ensemble.states, dtype="<f8").tobytes())
    sidecar = {
        "model_label": ensemble.model_label,
        "init_descriptor": ensemble.init_descriptor,
        "integration_h": ensemble.integration_h,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_ensemble(path) -> PathEnsemble:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError("file too short for an ensemble header")
    magic, version, d, m, N, n_steps, t0, h, seed = _HEADER.unpack_from(data)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise InvalidInputError("not an APSD ensemble file")
    states = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(N, n_steps + 1, d)
    side_path = Path(str(path) + ".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    return PathEnsemble(
        states.astype(float),
        TimeGrid(t0, h, n_steps),
        side.get("model_label", ""),
        int(seed),
        side.get("init_descriptor", ""),
        float(side.get("integration_h", h)),
        int(m),
    )
