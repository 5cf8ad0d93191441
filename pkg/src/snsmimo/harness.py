"""Monte-Carlo sweeps, convergence traces, and CSV emission.

A sweep runs the configured schemes over shared channel realizations (one
realization per trial index feeds every scheme and every power point, so
comparisons are paired) and adds trials in fixed-size batches until the
confidence interval of each point's mean sum rate is narrow enough or the
trial cap is reached.  All randomness is counter-based, so reruns and any
worker count produce byte-identical CSV output.

Powers cross the CLI boundary in dBm and are converted to linear milliwatts
here; everything below this module is linear.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import __version__
from .baselines import bd_sum_rate, dpc_sum_capacity
from .channel import SystemConfig, generate_channel
from .nullspace import successive_null_bases
from .optimizer import optimize_wsr, sca_relaxed

__all__ = [
    "ConfigError",
    "SweepSpec",
    "SweepRow",
    "dbm_to_mw",
    "mw_to_dbm",
    "parse_config_file",
    "run_sweep",
    "run_convergence",
]

_SCHEMES = ("sns", "bd", "dpc")
_BATCH = 8

_CONFIG_KEYS = {
    "N": True,
    "M": True,
    "sigma2_dbm": True,
    "d_m": True,
    "eta": False,
    "epsilon": False,
    "inner_gap": False,
    "inner_cap": False,
    "outer_cap": False,
}


class ConfigError(ValueError):
    """Invalid configuration file or sweep specification."""


def dbm_to_mw(dbm: float) -> float:
    return float(10.0 ** (dbm / 10.0))


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        raise ValueError("mw_to_dbm: power must be positive")
    return float(10.0 * np.log10(mw))


def parse_config_file(path: str, seed: int = 0) -> SystemConfig:
    """Read a flat ``key = value`` configuration file.

    Recognized keys: ``N``, ``M`` (comma list), ``sigma2_dbm``, ``d_m``
    (comma list, meters), optional ``eta`` (comma list, defaults to equal
    weights), ``epsilon``, ``inner_gap``, ``inner_cap``, ``outer_cap``.
    Unknown keys are errors.  The power budget is supplied per sweep point,
    not here.
    """
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
                key, _, val = line.partition("=")
                key = key.strip()
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                if key in values:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                values[key] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    missing = [k for k, req in _CONFIG_KEYS.items() if req and k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")
    try:
        m_rx = tuple(int(v) for v in values["M"].split(","))
        dist = tuple(float(v) for v in values["d_m"].split(","))
        eta = (
            tuple(float(v) for v in values["eta"].split(","))
            if "eta" in values
            else ()
        )
        config = SystemConfig(
            n_tx=int(values["N"]),
            m_rx=m_rx,
            sigma2=dbm_to_mw(float(values["sigma2_dbm"])),
            p_t=0.0,
            eta=eta,
            dist=dist,
            epsilon=float(values.get("epsilon", 1e-5)),
            inner_gap=float(values.get("inner_gap", 1e-4)),
            inner_cap=int(values.get("inner_cap", 2000)),
            outer_cap=int(values.get("outer_cap", 200)),
            seed=seed,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config


@dataclass(frozen=True)
class SweepSpec:
    """One sweep request: base configuration plus protocol knobs."""

    config: SystemConfig
    pt_dbm: tuple[float, ...]
    schemes: tuple[str, ...] = _SCHEMES
    max_trials: int = 500
    ci_half_width: float = 0.5
    confidence: float = 0.95
    seed: int = 0
    workers: int = 1
    out_path: str | None = None

    def __post_init__(self):
        if not self.pt_dbm:
            raise ConfigError("SweepSpec: need at least one power point")
        bad = [s for s in self.schemes if s not in _SCHEMES]
        if bad:
            raise ConfigError(f"SweepSpec: unknown schemes {bad}; choose from {_SCHEMES}")
        if not self.schemes:
            raise ConfigError("SweepSpec: need at least one scheme")
        if self.ci_half_width <= 0.0:
            raise ConfigError("SweepSpec: CI half-width must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("SweepSpec: confidence must be in (0, 1)")
        if self.max_trials < 1:
            raise ConfigError("SweepSpec: need at least one trial")
        if self.workers < 1:
            raise ConfigError("SweepSpec: need at least one worker")


@dataclass(frozen=True)
class SweepRow:
    """Aggregated result of one (power, scheme) sweep point."""

    pt_dbm: float
    scheme: str
    mean_sum_rate: float
    ci_half_width: float
    trials: int
    mean_sca_iterations: float | None


def _run_scheme(scheme: str, config: SystemConfig, channels):
    if scheme == "sns":
        _, report, (trace_rel, trace_ref) = optimize_wsr(channels, config)
        return report.R_sum, float(trace_rel.iterations + trace_ref.iterations)
    if scheme == "bd":
        return bd_sum_rate(channels, config.p_t, config.sigma2).sum_rate, None
    if scheme == "dpc":
        return dpc_sum_capacity(channels, config.p_t, config.sigma2).sum_rate, None
    raise ConfigError(f"unknown scheme {scheme!r}")


def _trial_task(args):
    config, trial, work_items = args
    channels = generate_channel(config, trial)
    out = {}
    for pt, scheme in work_items:
        cfg = dataclasses.replace(config, p_t=dbm_to_mw(pt))
        out[(pt, scheme)] = _run_scheme(scheme, cfg, channels)
    return trial, out


def _ci_half_width(values: np.ndarray, confidence: float) -> float:
    n = values.size
    if n < 2:
        return float("inf")
    sd = float(np.std(values, ddof=1))
    quantile = float(stats.t.ppf(0.5 * (1.0 + confidence), n - 1))
    return float(quantile * sd / np.sqrt(n))


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Execute a sweep; returns the rows and writes CSV when requested.

    Per (power, scheme) point, trials accumulate in fixed-size batches until
    the Student-t confidence interval of the mean sum rate is within the
    target half-width (needs at least two trials) or ``max_trials`` is hit.
    The batch schedule is independent of the worker count, so output is
    byte-identical for any parallelism.
    """
    config = dataclasses.replace(spec.config, seed=spec.seed)
    points = [(pt, scheme) for pt in spec.pt_dbm for scheme in spec.schemes]
    samples: dict[tuple[float, str], list] = {p: [] for p in points}
    iters: dict[tuple[float, str], list] = {p: [] for p in points}

    def active_points():
        live = []
        for p in points:
            vals = samples[p]
            if len(vals) >= spec.max_trials:
                continue
            if len(vals) >= 2:
                hw = _ci_half_width(np.asarray(vals), spec.confidence)
                if hw <= spec.ci_half_width:
                    continue
            live.append(p)
        return live

    next_trial = 0
    while True:
        live = active_points()
        if not live:
            break
        batch = [t for t in range(next_trial, next_trial + _BATCH) if t < spec.max_trials]
        if not batch:
            break
        tasks = [(config, t, live) for t in batch]
        if spec.workers > 1:
            with multiprocessing.Pool(spec.workers) as pool:
                results = pool.map(_trial_task, tasks)
        else:
            results = [_trial_task(t) for t in tasks]
        for trial, out in sorted(results, key=lambda r: r[0]):
            for p, (value, it) in out.items():
                samples[p].append(value)
                if it is not None:
                    iters[p].append(it)
        next_trial = batch[-1] + 1

    rows = []
    for pt in sorted(spec.pt_dbm):
        for scheme in sorted(spec.schemes):
            p = (pt, scheme)
            vals = np.asarray(samples[p])
            mean_iters = float(np.mean(iters[p])) if iters[p] else None
            rows.append(
                SweepRow(
                    pt_dbm=pt,
                    scheme=scheme,
                    mean_sum_rate=float(np.mean(vals)),
                    ci_half_width=_ci_half_width(vals, spec.confidence),
                    trials=int(vals.size),
                    mean_sca_iterations=mean_iters,
                )
            )
    if spec.out_path is not None:
        _write_sweep_csv(spec, rows)
    return rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        x = float(x)  # numpy scalars repr differently
        if np.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def _write_sweep_csv(spec: SweepSpec, rows):
    header = "pt_dbm,scheme,mean_sum_rate,ci_half_width,trials,mean_sca_iterations\n"
    try:
        with open(spec.out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header)
            for r in rows:
                fh.write(
                    ",".join(
                        [
                            _fmt(r.pt_dbm),
                            r.scheme,
                            _fmt(r.mean_sum_rate),
                            _fmt(r.ci_half_width),
                            str(r.trials),
                            _fmt(r.mean_sca_iterations),
                        ]
                    )
                    + "\n"
                )
    except OSError as exc:
        raise ConfigError(f"cannot write output file {spec.out_path}: {exc}") from exc
    _write_metadata(
        spec.out_path,
        {
            "tool": "snsmimo",
            "version": __version__,
            "command": "sweep",
            "config_hash": _config_hash(spec.config),
            "seed": spec.seed,
            "pt_dbm": list(spec.pt_dbm),
            "schemes": list(spec.schemes),
            "max_trials": spec.max_trials,
            "ci_half_width": spec.ci_half_width,
            "confidence": spec.confidence,
            "batch": _BATCH,
        },
    )


def _config_hash(config: SystemConfig) -> str:
    canon = repr(dataclasses.replace(config, seed=0, p_t=0.0))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_metadata(out_path: str, payload: dict):
    with open(out_path + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_convergence(
    config: SystemConfig,
    pt_dbm: float,
    seed: int = 0,
    realizations: int = 20,
    out_path: str | None = None,
):
    """Average per-iteration trace of the relaxed SCA at one power point.

    Runs ``realizations`` independent channel draws with the identity user
    ordering, pads converged runs with their final values, and averages the
    surrogate optima and exact sum rates per iteration.  Returns a list of
    ``(iteration, mean_surrogate, mean_exact_sum)`` tuples.
    """
    if realizations < 1:
        raise ConfigError("run_convergence: need at least one realization")
    cfg = dataclasses.replace(config, seed=seed, p_t=dbm_to_mw(pt_dbm))
    order = tuple(range(cfg.n_users))
    surr_runs, sum_runs = [], []
    for r in range(realizations):
        channels = generate_channel(cfg, r)
        bases = successive_null_bases(channels, order)
        _, trace = sca_relaxed(channels, bases, cfg)
        surr_runs.append(list(trace.surrogate_opt))
        sum_runs.append(list(trace.exact_sum))
    depth = max(len(s) for s in surr_runs)
    for s, e in zip(surr_runs, sum_runs):
        s.extend([s[-1]] * (depth - len(s)))
        e.extend([e[-1]] * (depth - len(e)))
    surr = np.mean(np.asarray(surr_runs), axis=0)
    sums = np.mean(np.asarray(sum_runs), axis=0)
    rows = [(i + 1, float(surr[i]), float(sums[i])) for i in range(depth)]
    if out_path is not None:
        try:
            with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("iteration,surrogate_opt,exact_sum_rate\n")
                for it, s, e in rows:
                    fh.write(f"{it},{_fmt(s)},{_fmt(e)}\n")
        except OSError as exc:
            raise ConfigError(f"cannot write output file {out_path}: {exc}") from exc
        _write_metadata(
            out_path,
            {
                "tool": "snsmimo",
                "version": __version__,
                "command": "converge",
                "config_hash": _config_hash(cfg),
                "seed": seed,
                "pt_dbm": pt_dbm,
                "realizations": realizations,
                "ordering": list(order),
            },
        )
    return rows
