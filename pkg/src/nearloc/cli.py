"""Command-line driver: ``nearloc {phase,peb,rmse,regime}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace

from .estimation import EstimatorConfig
from .experiments import (
    ExperimentConfig,
    phase_plot_scenario,
    csv_text,
    peb_table,
    run,
    write_peb_table,
)
from .scenario import ModelKind, Scenario, classify_regime, load_config, scenario_from_dict

log = logging.getLogger("nearloc")

_ESTIMATOR_KEYS = {f for f in EstimatorConfig.__dataclass_fields__}


def _parse_models(text: str | None, default):
    if not text:
        return default
    return tuple(ModelKind.parse(m) for m in text.split(","))


def _parse_bias(text: str | None, default=(True, False)):
    if text is None:
        return default
    return {"true": (True,), "false": (False,), "both": (True, False)}[text.lower()]


def _parse_floats(text: str | None):
    return tuple(float(v) for v in text.split(",")) if text else ()


def _build_config(args, kind: str, base: Scenario, **extra) -> ExperimentConfig:
    file_cfg = load_config(args.config) if args.config else {}
    scen = scenario_from_dict(file_cfg["scenario"], base) if "scenario" in file_cfg else base
    est_cfg = {k: v for k, v in (file_cfg.get("estimator") or {}).items() if k in _ESTIMATOR_KEYS}
    for key in ("grid_x", "grid_y"):
        if key in est_cfg:
            est_cfg[key] = tuple(est_cfg[key])
    estimator = EstimatorConfig(**est_cfg)
    if getattr(args, "pad_freq", None):
        estimator = replace(estimator, pad_freq=args.pad_freq)
    if getattr(args, "pad_spatial", None):
        estimator = replace(estimator, pad_spatial=args.pad_spatial)
    if getattr(args, "refine", False):
        estimator = replace(estimator, refine=True)

    sweep = _parse_floats(getattr(args, "sweep", None)) or tuple(file_cfg.get("sweep", ()))
    models = _parse_models(args.models, tuple(file_cfg.get("models", ())) or extra.pop("models", tuple(ModelKind)))
    d_bar = args.dbar_m if getattr(args, "dbar_m", None) is not None else file_cfg.get("d_bar_m")
    return ExperimentConfig(
        kind=kind,
        scenario=scen,
        sweep=sweep,
        models=models,
        bias_known=_parse_bias(args.bias_known, tuple(file_cfg.get("bias_known", (True, False)))),
        trials=args.trials if getattr(args, "trials", None) else int(file_cfg.get("trials", 100)),
        seed=args.seed if args.seed is not None else int(file_cfg.get("seed", 0)),
        d_bar_m=d_bar,
        estimator=estimator,
        out=args.out,
        **extra,
    )


def _emit(rows, out):
    if out:
        log.info("wrote %d rows to %s", len(rows), out)
    else:
        sys.stdout.write(csv_text(rows))


def cmd_phase(args):
    theta = math.radians(args.theta_deg) if args.theta_deg is not None else math.pi / 2
    cfg = _build_config(args, "phase_plot", phase_plot_scenario(),
                        theta=theta, models=(ModelKind.GENERAL,))
    _emit(run(cfg), cfg.out)


def cmd_peb(args):
    kind = "peb_vs_spacing" if args.sweep_axis == "spacing" else "peb_vs_distance"
    extra = {}
    if args.theta_deg is not None:
        extra["theta"] = math.radians(args.theta_deg)
    cfg = _build_config(args, kind, Scenario(), **extra)
    _emit(run(cfg), cfg.out)
    if args.table_out:
        write_peb_table(peb_table(cfg), args.table_out)


def cmd_rmse(args):
    cfg = _build_config(args, "monte_carlo_rmse", Scenario(),
                        nlos=not args.no_nlos, workers=args.workers)
    _emit(run(cfg), cfg.out)


def cmd_regime(args):
    s = Scenario()
    if args.config:
        file_cfg = load_config(args.config)
        s = scenario_from_dict(file_cfg.get("scenario", file_cfg))
    rep = classify_regime(s)
    out = {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(rep).items()}
    out.update(distance_m=s.distance, aperture_m=s.aperture)
    print(json.dumps(out, indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nearloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False):
        sp.add_argument("--config", help="YAML/JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="CSV output path (stdout if omitted)")
        sp.add_argument("--models", help="comma-separated: general,standard,nearfield,wideband")
        sp.add_argument("--bias-known", choices=["true", "false", "both"])
        sp.add_argument("--sweep", help="comma-separated sweep values")
        if trials:
            sp.add_argument("--trials", type=int)
            sp.add_argument("--dbar-m", type=float,
                            help="expected UE distance for the sub-array size (default: sweep distance)")

    sp = sub.add_parser("phase", help="signal phase across antennas/subcarriers")
    common(sp)
    sp.add_argument("--theta-deg", type=float, help="UE bearing (default 90)")
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("peb", help="position error bound sweeps")
    common(sp)
    sp.add_argument("--sweep-axis", choices=["distance", "spacing"], default="distance")
    sp.add_argument("--theta-deg", type=float, help="UE bearing for the distance sweep (default atan(8))")
    sp.add_argument("--table-out", help="also write the flat PEB table CSV here")
    sp.set_defaults(func=cmd_peb)

    sp = sub.add_parser("rmse", help="Monte Carlo RMSE of the estimators")
    common(sp, trials=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-nlos", action="store_true", help="skip the LOS+NLOS variant")
    sp.add_argument("--pad-freq", type=int)
    sp.add_argument("--pad-spatial", type=int)
    sp.add_argument("--refine", action="store_true", help="parabolic peak interpolation")
    sp.set_defaults(func=cmd_rmse)

    sp = sub.add_parser("regime", help="classify the operating regime of a scenario")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_regime)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
