"""Figure-reproduction experiments: phase plots, PEB sweeps, Monte Carlo RMSE.

Every runner returns a list of :class:`ResultRow`; :func:`write_csv` serializes
them with a fixed header so that identical configs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimation import EstimatorConfig, localize_far_field_known_bias, localize_near_field
from .fim import peb_for
from .scenario import ModelKind, Scatterer, Scenario, phase
from .synth import synthesize

CSV_HEADER = ["experiment", "sweep_value", "model", "bias_known", "metric", "value", "trials", "seed"]
PEB_TABLE_HEADER = ["model", "d_m", "theta_rad", "delta_over_lambda", "bias_known", "peb_m"]

KINDS = ("phase_plot", "peb_vs_distance", "peb_vs_spacing", "monte_carlo_rmse")
ALL_MODELS = tuple(ModelKind)
NOMINAL_THETA = math.atan2(8.0, 1.0)  # bearing of x = [1, 8] m

# default sweep grids
DISTANCE_GRID = tuple(float(v) for v in np.geomspace(0.5, 100.0, 40))
SPACING_GRID = tuple(float(v) for v in np.linspace(0.25, 2.0, 15))
PHASE_DISTANCES = (0.1, 0.5, 2.0, 100.0)
MC_DISTANCES = (1.0, 1.5, 2.0, 2.5, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0)

SCATTER_BOX_X = (-10.0, 10.0)
SCATTER_BOX_Y = (0.5, 20.0)
SCATTER_KEEPOUT = 0.5


def phase_plot_scenario() -> Scenario:
    """Phase-plot setup: 257 subcarriers, 129 elements, 28 GHz, 1.4 GHz, lambda/2."""
    return Scenario(ue_position=(0.0, 1.0), bandwidth=1.4e9, num_subcarriers=257, num_antennas=129)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    scenario: Scenario = field(default_factory=Scenario)
    sweep: tuple[float, ...] = ()
    models: tuple[ModelKind, ...] = ALL_MODELS
    bias_known: tuple[bool, ...] = (True, False)
    trials: int = 100
    seed: int = 0
    theta: float = NOMINAL_THETA
    d_bar_m: float | None = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    nlos: bool = True
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        sweep = tuple(float(v) for v in self.sweep)
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "sweep", sweep)
        object.__setattr__(self, "models", tuple(ModelKind.parse(m) for m in self.models))


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_value: float
    model: str
    bias_known: bool | None
    metric: str
    value: float
    trials: int
    seed: int

    @property
    def identifiable(self) -> bool:
        return math.isfinite(self.value)

    def as_list(self) -> list[str]:
        bk = "" if self.bias_known is None else str(self.bias_known).lower()
        return [self.experiment, repr(float(self.sweep_value)), self.model, bk, self.metric,
                _fmt(self.value), str(self.trials), str(self.seed)]


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def csv_text(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def write_csv(rows: Iterable[ResultRow], path: str | Path):
    Path(path).write_text(csv_text(rows))


def read_csv(path: str | Path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [
            ResultRow(r["experiment"], float(r["sweep_value"]), r["model"],
                      None if r["bias_known"] == "" else r["bias_known"] == "true",
                      r["metric"], float(r["value"]), int(r["trials"]), int(r["seed"]))
            for r in reader
        ]


# phase plot

def run_phase_plot(cfg: ExperimentConfig) -> list[ResultRow]:
    """Radian phase -2 pi xi / lambda along the antenna axis (k = 0) and along the
    subcarrier axis for the edge and center elements, per distance.

    The UE sits on broadside ([0, d]) unless ``cfg.theta`` says otherwise.
    """
    base = cfg.scenario
    dists = cfg.sweep or PHASE_DISTANCES
    rows = []
    for d in dists:
        s = base.with_polar(d, cfg.theta)
        n_all, k_all = s.antenna_indices, s.subcarrier_indices
        edge = s.N // 2
        for model in cfg.models:
            rad = -2 * np.pi / s.wavelength
            for n, v in zip(n_all, rad * phase(model, n_all, 0, s)):
                rows.append(ResultRow("phase_plot", d, model.value, None,
                                      f"phase_rad[n={n};k=0]", float(v), 1, cfg.seed))
            for n in (-edge, 0, edge):
                for k, v in zip(k_all, rad * phase(model, n, k_all, s)):
                    if k == 0:
                        continue  # already emitted by the antenna-axis slice
                    rows.append(ResultRow("phase_plot", d, model.value, None,
                                          f"phase_rad[n={n};k={k}]", float(v), 1, cfg.seed))
    return rows


def phase_slice(rows: Sequence[ResultRow], d: float, model: str = "general", k: int = 0):
    """Recover the (n, phase) antenna-axis slice from phase-plot rows."""
    out = []
    for r in rows:
        if r.sweep_value == d and r.model == model and r.metric.endswith(f";k={k}]"):
            n = int(r.metric.split("n=")[1].split(";")[0])
            out.append((n, r.value))
    out.sort()
    return np.array([n for n, _ in out]), np.array([v for _, v in out])


# PEB sweeps

def _peb_scenarios(cfg: ExperimentConfig):
    base = cfg.scenario
    if cfg.kind == "peb_vs_distance":
        for d in cfg.sweep or DISTANCE_GRID:
            yield d, base.with_polar(d, cfg.theta)
    elif cfg.kind == "peb_vs_spacing":
        for f in cfg.sweep or SPACING_GRID:
            yield f, base.with_spacing(f * base.wavelength)
    else:
        raise ValueError(f"{cfg.kind} is not a PEB sweep")


def run_peb_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """PEB per sweep value x model x bias flag; non-identifiable points are ``inf``."""
    rows = []
    for value, s in _peb_scenarios(cfg):
        for model in cfg.models:
            for known in cfg.bias_known:
                rows.append(ResultRow(cfg.kind, value, model.value, known, "peb_m",
                                      peb_for(model, s, known), 1, cfg.seed))
    return rows


def peb_table(cfg: ExperimentConfig) -> list[dict]:
    """Same sweep in the flat PEB table layout."""
    out = []
    for _, s in _peb_scenarios(cfg):
        for model in cfg.models:
            for known in cfg.bias_known:
                out.append({
                    "model": model.value,
                    "d_m": s.distance,
                    "theta_rad": s.angle,
                    "delta_over_lambda": s.element_spacing / s.wavelength,
                    "bias_known": known,
                    "peb_m": peb_for(model, s, known),
                })
    return out


def write_peb_table(records: Sequence[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PEB_TABLE_HEADER)
        for r in records:
            w.writerow([r["model"], repr(float(r["d_m"])), repr(float(r["theta_rad"])),
                        repr(float(r["delta_over_lambda"])), str(r["bias_known"]).lower(),
                        _fmt(r["peb_m"])])


# Monte Carlo

def draw_scatterer(rng: np.random.Generator, ue: np.ndarray, rcs: float = 10.0) -> Scatterer:
    """Uniform over the box, rejecting points within the keep-out disc around the UE."""
    while True:
        p = np.array([rng.uniform(*SCATTER_BOX_X), rng.uniform(*SCATTER_BOX_Y)])
        if np.linalg.norm(p - ue) > SCATTER_KEEPOUT:
            return Scatterer((float(p[0]), float(p[1])), rcs)


@dataclass(frozen=True)
class TrialResult:
    distance: float
    trial: int
    sub_pos_err: dict
    sub_bias_err: dict
    ff_pos_err: dict


def run_trial(base: Scenario, d: float, trial_seed: int, est: EstimatorConfig,
              nlos: bool = True) -> TrialResult:
    """One Monte Carlo trial at distance ``d``; LOS-only and LOS+NLOS share every draw."""
    geo = np.random.default_rng((trial_seed, 1))
    theta = geo.uniform(np.pi / 4, 3 * np.pi / 4)
    s_los = replace(base.with_polar(d, theta), scatterers=())
    variants = {"los": s_los}
    if nlos:
        sc = draw_scatterer(geo, s_los.position)
        variants["los+nlos"] = replace(s_los, scatterers=(sc,))
    sub_pos, sub_bias, ff_pos = {}, {}, {}
    for name, s in variants.items():
        obs = synthesize(s, ModelKind.GENERAL, trial_seed)
        res = localize_near_field(obs, s, est)
        if res.identifiable:
            sub_pos[name] = float(np.linalg.norm(res.position_hat - s.position))
            sub_bias[name] = float(abs(res.bias_hat - s.clock_bias))
        else:
            sub_pos[name] = sub_bias[name] = float("nan")
        x_ff = localize_far_field_known_bias(obs, s, s.clock_bias, est)
        ff_pos[name] = float(np.linalg.norm(x_ff - s.position))
    return TrialResult(d, trial_seed, sub_pos, sub_bias, ff_pos)


def _trial_args(cfg: ExperimentConfig, d: float):
    est = cfg.estimator
    est = replace(est, d_bar_m=cfg.d_bar_m if cfg.d_bar_m is not None else d)
    return [(cfg.scenario, d, cfg.seed + t, est, cfg.nlos) for t in range(cfg.trials)]


def _run_trial_tuple(args):
    return run_trial(*args)


def _stats(errors: Sequence[float]):
    e = np.asarray(errors, dtype=float)
    bad = int(np.sum(~np.isfinite(e)))
    e = e[np.isfinite(e)]
    if e.size == 0:
        return float("inf"), float("inf"), bad
    return float(np.sqrt(np.mean(e**2))), float(np.median(e)), bad


def run_monte_carlo(cfg: ExperimentConfig) -> list[ResultRow]:
    """Position/bias RMSE and median error of the sub-array method and the
    known-bias far-field method, per distance and propagation variant.

    Non-identifiable trials are excluded from the statistics and counted in
    the ``nonidentifiable_count`` metric. Trial ``t`` uses seed ``seed + t``.
    """
    dists = cfg.sweep or MC_DISTANCES
    rows: list[ResultRow] = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for d in dists:
            args = _trial_args(cfg, d)
            results = list(pool.map(_run_trial_tuple, args)) if pool else [run_trial(*a) for a in args]
            variants = ["los", "los+nlos"] if cfg.nlos else ["los"]

            def emit(method, variant, known, metric, value):
                rows.append(ResultRow("monte_carlo_rmse", d, f"{method}:{variant}", known,
                                      metric, value, cfg.trials, cfg.seed))

            for v in variants:
                rmse, med, bad = _stats([r.sub_pos_err[v] for r in results])
                brmse, bmed, _ = _stats([r.sub_bias_err[v] for r in results])
                emit("subarray", v, False, "rmse_pos_m", rmse)
                emit("subarray", v, False, "medae_pos_m", med)
                emit("subarray", v, False, "rmse_bias_m", brmse)
                emit("subarray", v, False, "medae_bias_m", bmed)
                emit("subarray", v, False, "nonidentifiable_count", float(bad))
                frmse, fmed, fbad = _stats([r.ff_pos_err[v] for r in results])
                emit("farfield_known_bias", v, True, "rmse_pos_m", frmse)
                emit("farfield_known_bias", v, True, "medae_pos_m", fmed)
                emit("farfield_known_bias", v, True, "nonidentifiable_count", float(fbad))
    finally:
        if pool:
            pool.shutdown()
    rows.sort(key=lambda r: (r.sweep_value, r.model, r.metric))
    return rows


def metric(rows: Sequence[ResultRow], d: float, model: str, name: str) -> float:
    for r in rows:
        if r.sweep_value == d and r.model == model and r.metric == name:
            return r.value
    raise KeyError((d, model, name))


RUNNERS = {
    "phase_plot": run_phase_plot,
    "peb_vs_distance": run_peb_sweep,
    "peb_vs_spacing": run_peb_sweep,
    "monte_carlo_rmse": run_monte_carlo,
}


def run(cfg: ExperimentConfig) -> list[ResultRow]:
    rows = RUNNERS[cfg.kind](cfg)
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows
