"""Bohr epsilon-almost periods of coefficients and of law trajectories.

A shift ``tau`` is an epsilon-almost period on a window when the sup over
the window of ``|f(t + tau) - f(t)|`` (or of ``rho(mu(t + tau), mu(t))``
for laws) is below epsilon. Scans run over a finite tau lattice and report
the largest gap between found shifts, including the gaps to both ends of
the scanned range, as the empirical relative-density witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidInputError
from .measure import LawTrajectory, MetricConfig, distance_curve, law_trajectory
from .model import Box, CoefficientField, QuasiPeriodicSignal, SdeModel
from .simulate import TimeGrid, simulate_ensemble

__all__ = [
    "ApScanConfig",
    "AlmostPeriodReport",
    "AapReport",
    "CrossCheckReport",
    "scan_function_ap",
    "scan_law_ap",
    "aap_check",
    "burned_in_reference",
    "coefficient_crosscheck",
]

_EVAL_BUDGET = 2_000_000
_TOL = 1e-9

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _rows_l1_numpy(W, rows, target, out):
    buf = W[rows] - target[None]
    np.abs(buf, out=buf)
    out[:] = buf.reshape(len(rows), -1).sum(axis=1)


if numba is not None:

    @numba.njit(cache=True)
    def _rows_l1(W, rows, target, out):
        P, N = target.shape
        for q in range(rows.size):
            r = rows[q]
            s = 0.0
            for p in range(P):
                for n in range(N):
                    s += abs(W[r, p, n] - target[p, n])
            out[q] = s

else:  # pragma: no cover
    _rows_l1 = _rows_l1_numpy


@dataclass(frozen=True)
class ApScanConfig:
    epsilon: float
    tau_min: float
    tau_max: float
    tau_step: float
    t_window: tuple[float, float] = (0.0, 50.0)
    t_step: float = 0.01
    x_box: Box | None = None
    n_x: int = 64
    x_seed: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError("epsilon must be positive")
        if not self.tau_max > self.tau_min:
            raise InvalidInputError("tau_max must exceed tau_min")
        if not self.tau_step > 0 or not self.t_step > 0:
            raise InvalidInputError("tau_step and t_step must be positive")
        lo, hi = map(float, self.t_window)
        if not hi > lo:
            raise InvalidInputError("t_window must be nondegenerate")
        object.__setattr__(self, "t_window", (lo, hi))

    def taus(self) -> np.ndarray:
        n = int(math.floor((self.tau_max - self.tau_min) / self.tau_step + _TOL))
        return self.tau_min + self.tau_step * np.arange(n + 1)

    def window_times(self) -> np.ndarray:
        lo, hi = self.t_window
        n = int(math.floor((hi - lo) / self.t_step + _TOL))
        return lo + self.t_step * np.arange(n + 1)

    def x_points(self, d: int) -> np.ndarray:
        """Box corners plus ``n_x`` uniform draws; corners make affine scans exact."""
        box = self.x_box if self.x_box is not None else Box.cube(d, 1.0)
        if box.d != d:
            raise InvalidInputError(f"x_box has dimension {box.d}, field needs {d}")
        lo, hi = np.array(box.x_low), np.array(box.x_high)
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(d, -1).T if d <= 10 else lo[None]
        draws = np.random.default_rng(self.x_seed).uniform(lo, hi, size=(self.n_x, d))
        return np.concatenate([corners, draws])

    def with_epsilon(self, epsilon: float) -> "ApScanConfig":
        return ApScanConfig(
            epsilon, self.tau_min, self.tau_max, self.tau_step, self.t_window, self.t_step, self.x_box, self.n_x, self.x_seed
        )

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "tau_min": self.tau_min,
            "tau_max": self.tau_max,
            "tau_step": self.tau_step,
            "t_window": list(self.t_window),
            "t_step": self.t_step,
            "x_box": None if self.x_box is None else self.x_box.to_json(),
            "n_x": self.n_x,
            "x_seed": self.x_seed,
        }

    @classmethod
    def from_json(cls, doc, d: int | None = None) -> "ApScanConfig":
        if not isinstance(doc, dict):
            raise InvalidInputError("scan config must be an object")
        try:
            box = doc.get("x_box")
            return cls(
                float(doc["epsilon"]),
                float(doc["tau_min"]),
                float(doc["tau_max"]),
                float(doc["tau_step"]),
                tuple(doc.get("t_window", (0.0, 50.0))),
                float(doc.get("t_step", 0.01)),
                None if box is None else Box.from_json(box, d),
                int(doc.get("n_x", 64)),
                int(doc.get("x_seed", 0)),
            )
        except KeyError as exc:
            raise InvalidInputError(f"scan config missing {exc.args[0]!r}") from None


def _max_gap(found: np.ndarray, lo: float, hi: float) -> float:
    if found.size == 0:
        return math.inf
    edges = np.concatenate([[lo], found, [hi]])
    return float(np.max(np.diff(edges)))


@dataclass(frozen=True, eq=False)
class AlmostPeriodReport:
    epsilon: float
    found_taus: list
    max_gap: float
    scanned_range: tuple[float, float]
    pass_: bool
    taus: np.ndarray
    discrepancies: np.ndarray
    window: tuple[float, float]
    subject: str = ""
    metric: str | None = None

    @classmethod
    def build(cls, epsilon, taus, disc, extra, scanned, window, subject="", metric=None):
        found = [(float(t), float(v)) for t, v in zip(taus, disc) if v < epsilon]
        found += [(float(t), float(v)) for t, v in extra if v < epsilon]
        found.sort()
        deduped = []
        for t, v in found:
            if deduped and abs(t - deduped[-1][0]) <= 1e-12:
                if v < deduped[-1][1]:
                    deduped[-1] = (t, v)
                continue
            deduped.append((t, v))
        gap = _max_gap(np.array([t for t, _ in deduped]), scanned[0], scanned[1])
        ok = bool(deduped) and gap < scanned[1] - scanned[0]
        return cls(float(epsilon), deduped, gap, tuple(scanned), ok, np.asarray(taus), np.asarray(disc), tuple(window), subject, metric)

    @property
    def passed(self) -> bool:
        return self.pass_

    def found_array(self) -> np.ndarray:
        return np.array([t for t, _ in self.found_taus])

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "epsilon": self.epsilon,
            "taus": [{"tau": t, "discrepancy": v} for t, v in self.found_taus],
            "max_gap": self.max_gap if math.isfinite(self.max_gap) else None,
            "scanned_range": list(self.scanned_range),
            "window": list(self.window),
            "metric": self.metric,
            "pass": self.pass_,
        }

    def csv_text(self) -> str:
        rows = [f"{t!r},{v!r}" for t, v in zip(self.taus.tolist(), self.discrepancies.tolist())]
        return "tau,discrepancy\n" + "\n".join(rows) + "\n"

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())


def _evaluator(subject, config: ApScanConfig):
    """``(f(tau_array) -> values (n_tau, n_points), base values)`` on the window sample."""
    ts = config.window_times()
    if isinstance(subject, QuasiPeriodicSignal):
        base = subject(ts)

        def ev(tau):
            return subject(ts[None, :] + np.asarray(tau)[:, None])

        return ev, base, ts.size
    if isinstance(subject, CoefficientField):
        d = len(subject.linear) if subject.linear is not None else None
        if d is None:
            if config.x_box is None:
                raise InvalidInputError("general fields need an x_box to scan over")
            d = config.x_box.d
        xs = config.x_points(d)
        T = np.repeat(ts, xs.shape[0])
        X = np.tile(xs, (ts.size, 1))
        base = np.asarray(subject(T, X), dtype=float)

        def ev(tau):
            tau = np.asarray(tau)
            tt = T[None, :] + tau[:, None]
            xx = np.broadcast_to(X, (tau.size,) + X.shape)
            return np.asarray(subject(tt, xx), dtype=float)

        return ev, base, T.size
    raise InvalidInputError("scan subject must be a QuasiPeriodicSignal or CoefficientField")


def _discrepancies(ev, base, n_points, taus) -> np.ndarray:
    out = np.empty(len(taus))
    chunk = max(1, _EVAL_BUDGET // max(n_points, 1))
    for a in range(0, len(taus), chunk):
        vals = ev(taus[a : a + chunk])
        out[a : a + chunk] = np.max(np.abs(vals - base[None, :]), axis=1)
    return out


def _refine(ev, base, n_points, taus, disc, epsilon, step):
    """Minimise the discrepancy near strict lattice local minima close to epsilon."""
    extra = []
    n = len(taus)
    for k in range(n):
        left = disc[k - 1] if k > 0 else math.inf
        right = disc[k + 1] if k + 1 < n else math.inf
        if not (disc[k] <= left and disc[k] <= right and (disc[k] < left or disc[k] < right)):
            continue
        if disc[k] <= 0.0:
            continue
        slope = max(abs(v - disc[k]) for v in (left, right) if math.isfinite(v))
        if disc[k] - slope >= epsilon:
            continue

        def f(tau):
            return float(_discrepancies(ev, base, n_points, np.array([tau]))[0])

        res = minimize_scalar(f, bounds=(taus[k] - step, taus[k] + step), method="bounded", options={"xatol": 1e-12})
        extra.append((float(res.x), float(res.fun)))
    return extra


def scan_function_ap(subject, config: ApScanConfig, refine: bool = False, label: str = "") -> AlmostPeriodReport:
    """Epsilon-almost periods of a signal or coefficient field on the tau lattice.

    The discrepancy at ``tau`` is the max over window times (and, for fields,
    over box corners plus sampled states) of ``|f(t + tau, x) - f(t, x)|``.
    With ``refine`` the discrepancy is also minimised in
    ``[tau - tau_step, tau + tau_step]`` around each strict lattice local
    minimum, and minimisers below epsilon are added; this resolves exact
    periods that fall between lattice points.
    """
    ev, base, n_points = _evaluator(subject, config)
    taus = config.taus()
    disc = _discrepancies(ev, base, n_points, taus)
    extra = _refine(ev, base, n_points, taus, disc, config.epsilon, config.tau_step) if refine else []
    return AlmostPeriodReport.build(
        config.epsilon, taus, disc, extra, (config.tau_min, config.tau_max), config.t_window, label or type(subject).__name__
    )


def scan_law_ap(traj: LawTrajectory, config: ApScanConfig, metric: MetricConfig = MetricConfig(), label: str = "") -> AlmostPeriodReport:
    """Epsilon-almost periods of ``t -> mu(t)`` for the metric ``rho``.

    Shifts are snapped to whole multiples of the trajectory step; window
    times are the recorded times in ``t_window`` thinned to roughly
    ``t_step``. The sup discrepancy at ``tau`` is the max over window times
    of ``rho(mu(t + tau), mu(t))``.
    """
    dt = traj.step
    if dt <= 0:
        raise InvalidInputError("law scans need a trajectory with at least two times")
    times = traj.times
    k_step = max(1, int(round(config.tau_step / dt)))
    k_lo = int(round(config.tau_min / dt))
    k_hi = int(round(config.tau_max / dt))
    ks = np.arange(k_lo, k_hi + 1, k_step)
    if ks.size == 0 or ks[0] < 0:
        raise InvalidInputError("tau range must be nonnegative and contain a grid multiple")
    i_step = max(1, int(round(config.t_step / dt)))
    lo, hi = config.t_window
    win = np.flatnonzero((times >= lo - _TOL * dt) & (times <= hi + _TOL * dt))[::i_step]
    if win.size == 0:
        raise InvalidInputError("t_window contains no recorded times")
    if win[-1] + ks[-1] >= times.size:
        raise InvalidInputError(
            f"t_window + tau_max reaches {times[win[-1]] + ks[-1] * dt:.6g}, beyond the trajectory end {times[-1]:.6g}"
        )
    wproj = np.ascontiguousarray(np.stack([traj.sorted_projections(i, metric) for i in win]))
    scale = 1.0 / (wproj.shape[1] * wproj.shape[2])
    disc = np.zeros(ks.size)
    kpos = np.full(ks[-1] + 1, -1, dtype=np.int64)
    kpos[ks] = np.arange(ks.size)
    vals = np.empty(win.size)
    for j in range(win[0] + ks[0], win[-1] + ks[-1] + 1):
        # window rows whose shift j - i lies on the lattice
        shift = j - win
        ok = (shift >= 0) & (shift <= ks[-1])
        ok[ok] = kpos[shift[ok]] >= 0
        rows = np.flatnonzero(ok)
        if rows.size == 0:
            continue
        target = np.ascontiguousarray(traj.sorted_projections(j, metric))
        _rows_l1(wproj, rows, target, vals[: rows.size])
        n = kpos[shift[rows]]
        np.maximum.at(disc, n, vals[: rows.size] * scale)
    taus = ks * dt
    return AlmostPeriodReport.build(
        config.epsilon,
        taus,
        disc,
        [],
        (config.tau_min, config.tau_max),
        (float(times[win[0]]), float(times[win[-1]])),
        label or "law",
        metric.describe(traj.d),
    )


@dataclass(frozen=True, eq=False)
class AapReport:
    times: np.ndarray
    distances: np.ndarray
    window_starts: np.ndarray
    window_max: np.ndarray
    epsilon: float
    slack: float
    nonincreasing: bool
    final_below: bool
    metric: str

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.final_below

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "slack": self.slack,
            "window_starts": self.window_starts.tolist(),
            "window_max": self.window_max.tolist(),
            "nonincreasing": self.nonincreasing,
            "final_below": self.final_below,
            "metric": self.metric,
            "pass": self.passed,
        }

    def csv_text(self) -> str:
        rows = [f"{t!r},{v!r}" for t, v in zip(self.times.tolist(), self.distances.tolist())]
        return "time,distance\n" + "\n".join(rows) + "\n"


def aap_check(
    traj: LawTrajectory,
    reference: LawTrajectory,
    metric: MetricConfig = MetricConfig(),
    window_length: float = 5.0,
    epsilon: float = 0.05,
    slack: float = 0.01,
) -> AapReport:
    """Decay of ``rho(mu(t), eta(t))`` towards a reference law trajectory.

    Distances on the shared grid are grouped into consecutive windows of
    ``window_length``; the verdict asks that each window max exceed its
    predecessor by at most ``slack`` (Monte Carlo noise allowance) and that
    the last window max be below ``epsilon``.
    """
    if window_length <= 0:
        raise InvalidInputError("window_length must be positive")
    try:
        times, dists, _, _ = distance_curve(traj, reference, metric)
    except InvalidInputError as exc:
        raise InvalidInputError(f"no overlap between trajectory and reference: {exc}") from None
    t0 = times[0]
    idx = np.floor((times - t0) / window_length + _TOL).astype(int)
    n_win = int(idx[-1]) + 1
    wmax = np.array([dists[idx == w].max() if np.any(idx == w) else np.nan for w in range(n_win)])
    keep = ~np.isnan(wmax)
    starts = t0 + window_length * np.arange(n_win)
    starts, wmax = starts[keep], wmax[keep]
    noninc = bool(np.all(np.diff(wmax) <= slack))
    final = bool(wmax[-1] < epsilon)
    return AapReport(times, dists, starts, wmax, float(epsilon), float(slack), noninc, final, metric.describe(traj.d))


def burned_in_reference(
    model: SdeModel,
    init,
    t_end: float,
    h: float,
    N: int,
    seed: int,
    burn_in: float = 20.0,
    record_every: int = 1,
    threads: int | None = None,
) -> LawTrajectory:
    """Law trajectory on ``[0, t_end]`` of a run started at ``-burn_in``.

    The two-sided Brownian construction makes its increments on ``t >= 0``
    identical to those of any run with the same seed started at 0, so
    comparisons against such runs are synchronously coupled.
    """
    k_burn = int(round(burn_in / h))
    k_end = int(round(t_end / h))
    if abs(k_burn * h - burn_in) > _TOL * h or abs(k_end * h - t_end) > _TOL * h:
        raise InvalidInputError("burn_in and t_end must be multiples of h")
    n_steps = k_burn + k_end
    if n_steps % record_every or k_burn % record_every:
        raise InvalidInputError("record_every must divide the burn-in and total step counts")
    ens = simulate_ensemble(model, init, TimeGrid(-k_burn * h, h, n_steps), N, seed, record_every=record_every, threads=threads)
    return law_trajectory(ens.restrict(0.0, None))


@dataclass(frozen=True, eq=False)
class CrossCheckReport:
    level: float
    law_taus: np.ndarray
    per_signal: dict = field(default_factory=dict)

    @property
    def recorded_levels(self) -> dict:
        return {name: (float(np.max(v)) if v.size else 0.0) for name, v in self.per_signal.items()}

    @property
    def passed(self) -> bool:
        return self.law_taus.size > 0 and all(v < self.level for v in self.recorded_levels.values())

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "n_law_taus": int(self.law_taus.size),
            "recorded_levels": self.recorded_levels,
            "pass": self.passed,
        }


def coefficient_crosscheck(report: AlmostPeriodReport, signals: dict, config: ApScanConfig, level: float) -> CrossCheckReport:
    """Coefficient-level discrepancy of each signal at every law-level tau.

    The recorded level for a signal is the max of its discrepancy over the
    law-level shifts; the check passes when every recorded level is below
    ``level``.
    """
    taus = report.found_array()
    per = {}
    for name, sig in signals.items():
        ev, base, n = _evaluator(sig, config)
        per[name] = _discrepancies(ev, base, n, taus) if taus.size else np.zeros(0)
    return CrossCheckReport(float(level), taus, per)
