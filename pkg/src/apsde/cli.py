"""Command-line experiment runner.

``apsde check|simulate|stability|apscan|certificate --config FILE`` runs one
stage from a JSON config; ``apsde example NAME`` runs every stage for a
registry example and writes a report bundle. Exit codes: 0 pass,
1 verified failure, 2 config error, 3 IO or runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .almostperiod import ApScanConfig, aap_check, burned_in_reference, coefficient_crosscheck, scan_law_ap
from .errors import ApsdeError, InvalidInputError
from .lyapunov import (
    LyapunovFunction,
    RateFunction,
    l2_bound_certificate,
    lyapunov_from_json,
    verify_dissipativity,
    verify_positivity,
    verify_quadratic_bounds,
)
from .measure import MetricConfig, convergence_check, law_trajectory, sup_distance
from .model import Box, QuasiPeriodicSignal, SdeModel, estimate_lipschitz, model_from_json
from .registry import (
    EXAMPLES,
    check_diagonal_drift_bound,
    check_scalar_derivative_bounds,
    get_example,
    get_model,
)
from .simulate import (
    TimeGrid,
    init_from_json,
    save_ensemble,
    second_moment_trajectory,
    simulate_coupled,
    simulate_ensemble,
    supermartingale_probe,
    tail_bound_check,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

DEFAULT_N = 4096
DEFAULT_H = 2.0**-8
DEFAULT_HORIZON = 40.0
DEFAULT_BURN_IN = 20.0
DEFAULT_RECORD_EVERY = 8
DEFAULT_CHECK_SAMPLES = 100_000
# law scans need the window plus the largest shift inside the simulated span
SCAN_TAU_MAX = 100.0
SCAN_WINDOW = 20.0


class ConfigError(InvalidInputError):
    pass


# -- config helpers -------------------------------------------------------------


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    if not text.strip():
        raise ConfigError(f"config file {path} is empty")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("config must be a nonempty JSON object")
    return doc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def resolve_model(ref) -> SdeModel:
    if isinstance(ref, str):
        return get_model(ref)
    if isinstance(ref, dict):
        return model_from_json(ref)
    raise ConfigError("model must be a registry name or an inline model document")


def resolve_lyapunov(ref, d: int) -> LyapunovFunction:
    return lyapunov_from_json("norm2" if ref is None else ref, d)


def resolve_grid(cfg: dict) -> TimeGrid:
    doc = dict(cfg.get("grid") or {})
    doc.setdefault("h", DEFAULT_H)
    if "n_steps" not in doc:
        doc.setdefault("horizon", DEFAULT_HORIZON)
    return TimeGrid.from_json(doc)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


# -- stages ---------------------------------------------------------------------


def default_conditions(spec=None, rate=None) -> list:
    conds = [{"type": "lipschitz"}, {"type": "positivity"}]
    if spec is not None:
        conds.append({"type": "quadratic_bounds", "a": spec.a, "b": spec.b})
    conds.append({"type": "dissipativity", "mode": "pair", "rate": (rate or (spec.rate if spec else RateFunction.zero())).to_json()})
    if spec is not None and spec.single_radius is not None:
        conds.append({"type": "dissipativity", "mode": "single", "min_radius": spec.single_radius})
    if spec is not None:
        for kind, params in spec.extra_checks:
            conds.append({"type": kind, **params})
    return conds


def _expand_check_config(cfg: dict) -> dict:
    cfg = dict(cfg)
    if "example" in cfg:
        spec = get_example(cfg["example"])
        cfg.setdefault("model", spec.name)
        rate = RateFunction.from_json(cfg["rate"]) if "rate" in cfg else None
        cfg.setdefault("conditions", default_conditions(spec, rate))
        cfg.setdefault("box", {"t": list(spec.t_range), "half_width": spec.box_half_width})
    else:
        _require(cfg, "model")
        rate = RateFunction.from_json(cfg["rate"]) if "rate" in cfg else None
        cfg.setdefault("conditions", default_conditions(None, rate))
    cfg.setdefault("box", {"t": [0.0, 100.0], "half_width": 5.0})
    cfg.setdefault("n_samples", DEFAULT_CHECK_SAMPLES)
    return cfg


def run_check(cfg: dict, seed: int) -> dict:
    cfg = _expand_check_config(cfg)
    model = resolve_model(cfg["model"])
    V = resolve_lyapunov(cfg.get("lyapunov"), model.d)
    box = Box.from_json(cfg["box"], model.d)
    n = int(cfg["n_samples"])
    if n < 1:
        raise ConfigError("n_samples must be >= 1")
    reports = []
    for k, cond in enumerate(cfg["conditions"]):
        if not isinstance(cond, dict) or "type" not in cond:
            raise ConfigError(f"condition {k} needs a 'type'")
        kind = cond["type"]
        s = int(cond.get("seed", seed))
        n_k = int(cond.get("n_samples", n))
        if kind == "lipschitz":
            rep = estimate_lipschitz(model, box, n_k, s).to_json()
            rep["condition_id"] = "lipschitz_growth"
        elif kind == "positivity":
            rep = verify_positivity(V, box, n_k, s).to_json()
        elif kind == "quadratic_bounds":
            rep = verify_quadratic_bounds(V, float(cond.get("a", 0.0)), float(_require(cond, "b")), box, n_k, s).to_json()
        elif kind == "dissipativity":
            rate = RateFunction.from_json(cond.get("rate", 0.0))
            rep = verify_dissipativity(
                V,
                model,
                rate,
                cond.get("mode", "pair"),
                box,
                n_k,
                s,
                shift_range=tuple(cond.get("shift_range", (0.0, 10.0))),
                min_radius=float(cond.get("min_radius", 0.0)),
            ).to_json()
        elif kind == "scalar_derivative_bounds":
            rep = check_scalar_derivative_bounds(model, float(_require(cond, "c")), box, n_k, s).to_json()
        elif kind == "diagonal_drift_bound":
            rep = check_diagonal_drift_bound(model, box, n_k, s).to_json()
        else:
            raise ConfigError(f"unknown condition type {kind!r}")
        reports.append(rep)
    failed = [r["condition_id"] for r in reports if not r["pass"]]
    return {"model": model.label, "conditions": reports, "failed": failed, "pass": not failed}


def run_simulate(cfg: dict, seed: int, threads=None):
    model = resolve_model(_require(cfg, "model"))
    grid = resolve_grid(cfg)
    ens = simulate_ensemble(
        model,
        init_from_json(cfg.get("init", {"point": [0.0] * model.d})),
        grid,
        int(cfg.get("N", DEFAULT_N)),
        seed,
        record_every=int(cfg.get("record_every", 1)),
        threads=threads,
    )
    moments = second_moment_trajectory(ens)
    summary = {
        "model": model.label,
        "N": ens.N,
        "grid": grid.to_json(),
        "recorded_times": int(ens.times.size),
        "final_second_moment": float(moments.mean_value[-1]),
        "running_max_second_moment": float(moments.running_max[-1]),
        "pass": True,
    }
    return summary, ens, moments


def run_stability(cfg: dict, seed: int, threads=None):
    model = resolve_model(_require(cfg, "model"))
    V = resolve_lyapunov(cfg.get("lyapunov"), model.d)
    grid = resolve_grid(cfg)
    N = int(cfg.get("N", DEFAULT_N))
    rec = int(cfg.get("record_every", 1))
    metric = MetricConfig.from_json(cfg.get("metric"))
    window = tuple(cfg.get("window", (grid.t0, grid.t_end)))
    tail = cfg.get("tail") or {}
    lower_a = float(tail.get("lower_a", cfg.get("a", 1.0)))
    pairs = _require(cfg, "init_pairs")
    if not isinstance(pairs, list) or not pairs:
        raise ConfigError("init_pairs must be a nonempty list of [initA, initB]")
    results, curves, first = [], [], None
    for k, pair in enumerate(pairs):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"init pair {k} must have two entries")
        ia, ib = init_from_json(pair[0]), init_from_json(pair[1])
        ea, eb = simulate_coupled(model, model, ia, ib, grid, N, seed, record_every=rec, threads=threads)
        ta, tb = law_trajectory(ea), law_trajectory(eb)
        sup, arg = sup_distance(ta, tb, window, metric)
        probe = supermartingale_probe(V, (ea, eb))
        tails = [tail_bound_check(V, (ea, eb), float(e), lower_a).to_json() for e in tail.get("epsilons", [])]
        ok = probe.passed and all(t["pass"] for t in tails)
        results.append(
            {
                "initA": ia.describe(),
                "initB": ib.describe(),
                "sup_distance": sup,
                "sup_distance_time": arg,
                "window": list(window),
                "metric": metric.describe(model.d),
                "supermartingale": probe.to_json(),
                "tail_bounds": tails,
                "pass": ok,
            }
        )
        curves.append(probe.trajectory)
        if first is None:
            first = (ea, eb)
    out = {"model": model.label, "horizon": [grid.t0, grid.t_end], "pairs": results, "pass": all(r["pass"] for r in results)}
    return out, curves, first


def _signals_from_config(doc) -> dict:
    if doc is None:
        return {}
    if isinstance(doc, str):
        return dict(get_example(doc).signals)
    if isinstance(doc, dict):
        return {str(k): QuasiPeriodicSignal.from_json(v) for k, v in doc.items()}
    raise ConfigError("crosscheck signals must be an example name or a {name: signal} object")


def run_apscan(cfg: dict, seed: int, threads=None) -> dict:
    model = resolve_model(_require(cfg, "model"))
    h = float(cfg.get("h", DEFAULT_H))
    horizon = float(cfg.get("horizon", DEFAULT_HORIZON))
    burn = float(cfg.get("burn_in", DEFAULT_BURN_IN))
    N = int(cfg.get("N", DEFAULT_N))
    rec = int(cfg.get("record_every", DEFAULT_RECORD_EVERY))
    metric = MetricConfig.from_json(cfg.get("metric"))
    init = init_from_json(cfg.get("init", {"point": [0.0] * model.d}))
    scan = ApScanConfig.from_json(_require(cfg, "scan"), model.d)
    ref = burned_in_reference(model, init, horizon, h, N, seed, burn_in=burn, record_every=rec, threads=threads)
    report = scan_law_ap(ref, scan, metric, label=model.label)
    out = {"model": model.label, "burn_in": burn, "horizon": horizon, "law_scan": report.to_json()}
    ok = report.passed
    cc = cfg.get("crosscheck")
    if cc:
        signals = _signals_from_config(cc.get("signals"))
        if signals:
            cscan = ApScanConfig.from_json({**scan.to_json(), **cc.get("scan", {})}, model.d)
            xc = coefficient_crosscheck(report, signals, cscan, float(cc.get("level", 0.15)))
            out["crosscheck"] = xc.to_json()
            ok = ok and xc.passed
    aap = cfg.get("aap")
    if aap:
        start = init_from_json(_require(aap, "init"))
        ens = simulate_ensemble(model, start, TimeGrid.span(0.0, horizon, h), N, seed, record_every=rec, threads=threads)
        rep = aap_check(
            law_trajectory(ens),
            ref,
            metric,
            window_length=float(aap.get("window_length", 5.0)),
            epsilon=float(aap.get("epsilon", 0.05)),
            slack=float(aap.get("slack", 0.01)),
        )
        out["aap"] = {"init": start.describe(), **rep.to_json()}
        ok = ok and rep.passed
    out["pass"] = bool(ok)
    return out


def run_certificate(cfg: dict, seed: int, threads=None) -> dict:
    model = resolve_model(_require(cfg, "model"))
    V = resolve_lyapunov(cfg.get("lyapunov"), model.d)
    R = float(_require(cfg, "R"))
    a, b0, c0 = float(_require(cfg, "a")), float(cfg.get("b0", 1.0)), float(cfg.get("c0", 0.0))
    Mbar = float(_require(cfg, "Mbar"))
    init = init_from_json(cfg.get("init", {"point": [0.0] * model.d}))
    if "E0" in cfg:
        E0 = float(cfg["E0"])
    else:
        x0 = init.sample(seed, range(int(cfg.get("N", DEFAULT_N))), model.d)
        E0 = float(np.mean(np.sum(x0 * x0, axis=1)))
    bound = l2_bound_certificate(V, model, R, a, b0, c0, Mbar, E0)
    out = {"model": model.label, "R": R, "a": a, "b0": b0, "c0": c0, "Mbar": Mbar, "E0": E0, "certificate": bound}
    ok = True
    ver = cfg.get("verify")
    if ver:
        box = Box.from_json(ver.get("box", {"t": [0.0, 100.0], "half_width": 5.0}), model.d)
        n = int(ver.get("n_samples", DEFAULT_CHECK_SAMPLES))
        single = verify_dissipativity(V, model, None, "single", box, n, seed, min_radius=R)
        inner = Box(box.t_range, (-R,) * model.d, (R,) * model.d) if R > 0 else None
        checks = [single.to_json()]
        if inner is not None:
            q = verify_quadratic_bounds(V, a, b0, inner, n, seed)
            checks.append(q.to_json())
            rng = np.random.default_rng(seed)
            xs = inner.sample_x(rng, n)
            xs = xs[np.sum(xs * xs, axis=1) <= R * R]
            ts = inner.sample_t(rng, xs.shape[0])
            vmax = float(np.max(V(ts, xs))) if xs.size else 0.0
            checks.append({"condition_id": "Mbar_bound", "worst_value": vmax - Mbar, "pass": vmax <= Mbar + 1e-10})
        out["verification"] = checks
        ok = all(c["pass"] for c in checks)
    sim = cfg.get("simulate")
    if sim:
        _, _, moments = run_simulate({"model": cfg["model"], "init": cfg.get("init", {"point": [0.0] * model.d}), **sim}, seed, threads)
        rmax = float(moments.running_max[-1])
        out["empirical_running_max"] = rmax
        out["empirical_within_certificate"] = rmax <= bound
        ok = ok and rmax <= bound
    out["pass"] = bool(ok)
    return out


# -- example bundle -------------------------------------------------------------


def example_config(name: str, seed: int) -> dict:
    spec = get_example(name)
    model = spec.model()
    d = model.d
    h = DEFAULT_H
    pairs = [[{"point": list(a)}, {"point": list(b)}] for a, b in spec.init_pairs]
    cfg = {
        "example": name,
        "seed": seed,
        "check": {"example": name, "n_samples": DEFAULT_CHECK_SAMPLES},
        "stability": {
            "model": name,
            "grid": {"t0": 0.0, "h": h, "horizon": DEFAULT_HORIZON},
            "N": DEFAULT_N,
            "record_every": DEFAULT_RECORD_EVERY,
            "init_pairs": pairs,
            "window": [5.0, DEFAULT_HORIZON],
            "tail": {"epsilons": [0.5, 1.0, 2.0], "lower_a": spec.a},
        },
        "merging": {"epsilon": 0.01, "b": spec.b, "a": spec.a, "r": spec.r, "rate": spec.rate.to_json()},
        "apscan": {
            "model": name,
            "init": {"point": list(spec.moment_init or [0.0] * d)},
            "h": h,
            "horizon": SCAN_WINDOW + SCAN_TAU_MAX,
            "burn_in": DEFAULT_BURN_IN,
            "N": DEFAULT_N,
            "record_every": DEFAULT_RECORD_EVERY,
            "scan": {
                "epsilon": 0.05,
                "tau_min": 1.0,
                "tau_max": SCAN_TAU_MAX,
                "tau_step": h * DEFAULT_RECORD_EVERY,
                "t_window": [0.0, SCAN_WINDOW],
                "t_step": 0.5,
            },
            "aap": {"init": pairs[0][0], "window_length": 5.0, "epsilon": 0.05},
        },
    }
    if spec.signals:
        cfg["apscan"]["crosscheck"] = {"signals": name, "level": 0.15, "scan": {"t_step": 0.01, "t_window": [0.0, 100.0]}}
    if spec.single_radius is not None:
        cfg["certificate"] = {
            "model": name,
            "R": spec.single_radius,
            "a": spec.a,
            "b0": spec.b,
            "c0": spec.c0,
            "Mbar": spec.Mbar,
            "init": pairs[0][0],
        }
    return cfg


def run_example(name: str, seed: int, out: Path, threads=None) -> int:
    started = time.time()
    spec = get_example(name)
    cfg = example_config(name, seed)
    _write(out, "config.json", dumps(cfg))

    conditions = {"check": run_check(cfg["check"], seed)}
    stab, curves, (ea, eb) = run_stability(cfg["stability"], seed, threads)
    conditions["stability"] = stab

    mg = cfg["merging"]
    conv = convergence_check(
        law_trajectory(ea),
        law_trajectory(eb),
        MetricConfig(),
        epsilon=mg["epsilon"],
        b=mg["b"],
        r=mg["r"],
        c=RateFunction.from_json(mg["rate"]),
        a=mg["a"],
        coupled=True,
    )
    conditions["merging"] = conv.to_json()
    moments = second_moment_trajectory(ea)
    if "certificate" in cfg:
        cert = run_certificate(cfg["certificate"], seed, threads)
        rmax = float(moments.running_max[-1])
        cert["empirical_running_max"] = rmax
        cert["empirical_within_certificate"] = rmax <= cert["certificate"]
        cert["pass"] = cert["pass"] and rmax <= cert["certificate"]
        conditions["certificate"] = cert

    apscan = run_apscan(cfg["apscan"], seed, threads)

    verdicts = {
        "check": conditions["check"]["pass"],
        "stability": stab["pass"],
        "merging": conv.passed,
        "certificate": conditions.get("certificate", {}).get("pass", True),
        "apscan": apscan["pass"],
    }
    conditions["verdicts"] = verdicts
    _write(out, "conditions.json", dumps(conditions))
    _write(out, "moments.csv", curves[0].csv_text())
    _write(out, "distances.csv", conv.csv_text())
    _write(out, "apscan.json", dumps(apscan))
    meta = {
        "apsde_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "elapsed_seconds": time.time() - started,
        "threads": threads,
    }
    _write(out, "meta.json", dumps(meta))
    ok = all(verdicts.values())
    print(dumps({"example": name, "bundle": str(out), "verdicts": verdicts, "pass": ok}), end="")
    return EXIT_PASS if ok else EXIT_FAIL


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apsde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"apsde {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: APSDE_THREADS or CPU count)")

    for name, text in (
        ("check", "verify model and Lyapunov hypotheses by sampling"),
        ("simulate", "simulate an Euler-Maruyama ensemble"),
        ("stability", "coupled-ensemble stability experiment"),
        ("apscan", "almost-period scan of a burned-in law trajectory"),
        ("certificate", "second-moment certificate"),
    ):
        common(sub.add_parser(name, help=text))
    ex = sub.add_parser("example", help="run every stage for a registry example")
    ex.add_argument("name", choices=sorted(EXAMPLES))
    common(ex, config_required=False)
    return p


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("seed", 0)) if cfg else 0


def _dispatch(args) -> int:
    out = Path(args.out) if args.out else None
    if args.command == "example":
        seed = _seed(args, None)
        return run_example(args.name, seed, out or Path(f"bundle-{args.name}"), args.threads)
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    if args.command == "check":
        rep = run_check(cfg, seed)
        _write(out, "conditions.json", dumps(rep))
    elif args.command == "simulate":
        rep, ens, moments = run_simulate(cfg, seed, args.threads)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            save_ensemble(ens, out / "ensemble.apsd")
            _write(out, "moments.csv", moments.csv_text())
    elif args.command == "stability":
        rep, curves, _ = run_stability(cfg, seed, args.threads)
        _write(out, "stability.json", dumps(rep))
        for k, c in enumerate(curves):
            _write(out, f"moments_{k}.csv", c.csv_text())
    elif args.command == "apscan":
        rep = run_apscan(cfg, seed, args.threads)
        _write(out, "apscan.json", dumps(rep))
    else:
        rep = run_certificate(cfg, seed, args.threads)
        _write(out, "certificate.json", dumps(rep))
    print(dumps(rep), end="")
    return EXIT_PASS if rep["pass"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, InvalidInputError, KeyError, TypeError, ValueError) as exc:
        print(f"apsde: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ApsdeError) as exc:
        print(f"apsde: runtime error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
