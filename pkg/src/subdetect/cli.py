"""Command-line front end.

Every subcommand reads its settings from flags, optionally layered over a
JSON config file (``--config``; flags win, unknown keys are rejected).
Outputs carry the config hash, root seed and package version.  Exit
codes: 0 success, 2 configuration error, 3 enumeration cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .adaptive import AdaptiveDeltaStar
from .core_model import ProblemShape, SeedSpec, ShapeError, make_planted_mean, sample_observation
from .detectors import (
    DEFAULT_CAP,
    DeltaStar,
    DetectorKind,
    EnumerationCapError,
    theoretical_cutoffs,
    truncation_tau,
)
from .harness import (
    InsufficientReplicatesError,
    calibrate_cutoff,
    calibrated_delta_star,
    calibrated_spec,
    cor1_shapes,
    estimate_risk,
    mu_sweep,
    phase_grid,
    prop3_shapes,
    rate_comparison_study,
    s1eq1_shapes,
)
from .lower_bound import (
    mc_second_moment_likelihood,
    mc_second_moment_overlap,
    second_moment_binom_bound,
    second_moment_exact,
)
from .rates import rate_breakdown

SEED_ENV = "SUBDETECT_SEED"
CSV_SCHEMA = "1"
EXIT_OK, EXIT_CONFIG, EXIT_CAP = 0, 2, 3

SUBCOMMANDS = ("rate", "detect", "calibrate", "risk", "sweep", "lower-bound", "study", "phase")
STUDIES = {"cor1": ("Cor1Match", cor1_shapes), "prop3": ("Prop3Trend", prop3_shapes),
           "s1eq1": ("S1Eq1Table", s1eq1_shapes)}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "rate"
    d1: int | None = None
    d2: int | None = None
    s1: int | None = None
    s2: int | None = None
    mu: float | None = None
    mu_multiple: float | None = None
    multiples: str = "0,1,2,4,8,16"
    detector: str = "delta_star"
    cutoff_mode: str = "calibrated"
    level: float = 0.1
    reps: int = 1000
    calib_reps: int | None = None
    seed: int = 0
    threads: int = 1
    out: str | None = None
    format: str = "json"
    adaptive: bool = False
    study: str | None = None
    cap: int = DEFAULT_CAP
    input: str | None = None
    plot: str | None = None
    method: str = "exact"
    support_policy: str = "canonical"
    eta: float = 0.2
    rows: str | None = None
    cols: str | None = None

    # settings that never change results stay out of the hash
    _UNHASHED = ("threads", "out", "format", "plot")

    def config_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k not in self._UNHASHED}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def shape(self) -> ProblemShape:
        missing = [k for k in ("d1", "d2", "s1", "s2") if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing shape parameters: {', '.join(missing)}")
        return ProblemShape(self.d1, self.d2, self.s1, self.s2)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subdetect", description="Planted submatrix detection: rates, tests and simulations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        # defaults are None so that only explicitly given flags override the config
        for flag, typ in (("--d1", int), ("--d2", int), ("--s1", int), ("--s2", int),
                          ("--mu", float), ("--mu-multiple", float), ("--level", float),
                          ("--reps", int), ("--calib-reps", int), ("--seed", int), ("--threads", int),
                          ("--cap", int), ("--eta", float)):
            p.add_argument(flag, type=typ, default=None)
        p.add_argument("--multiples", default=None, help="comma-separated multiples of sqrt(R)")
        p.add_argument("--detector", default=None,
                       help="delta_star or a constituent: " + ", ".join(k.value for k in DetectorKind))
        p.add_argument("--cutoff-mode", choices=("theoretical", "calibrated"), default=None)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--adaptive", action="store_true", default=None)
        p.add_argument("--study", choices=sorted(STUDIES), default=None)
        p.add_argument("--input", default=None, help="CSV matrix of reals for detect")
        p.add_argument("--plot", default=None, help="SVG path for a sweep plot")
        p.add_argument("--method", choices=("exact", "binom", "mc-overlap", "mc-likelihood"), default=None)
        p.add_argument("--support-policy", choices=("canonical", "random"), default=None)
        p.add_argument("--rows", default=None, help="row sparsities for phase")
        p.add_argument("--cols", default=None, help="column sparsities for phase")
    return parser


def load_config(argv) -> ExperimentConfig:
    args = vars(build_parser().parse_args(argv))
    data = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    path = args.pop("config")
    if path:
        try:
            with open(path) as fh:
                file_data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        file_data.pop("command", None)
        data.update(file_data)
    data.update({k: v for k, v in args.items() if v is not None})
    return ExperimentConfig.from_mapping(data)


def _meta(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__}


def _csv_text(cfg: ExperimentConfig, rows: list[dict]) -> str:
    buf = io.StringIO()
    meta = _meta(cfg)
    buf.write(f"# schema={CSV_SCHEMA} config_hash={meta['config_hash']} seed={meta['seed']} "
              f"version={meta['version']}\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            # str() of a float is its shortest round-trip repr
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set)):
        return list(value)
    return str(value)


def _emit(cfg: ExperimentConfig, result, rows: list[dict] | None = None) -> None:
    if cfg.format == "csv":
        text = _csv_text(cfg, rows if rows is not None else [result])
    else:
        text = json.dumps({"meta": _meta(cfg), "result": result}, indent=2, sort_keys=True,
                          default=_json_default) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _kind(cfg: ExperimentConfig):
    if cfg.detector == "delta_star":
        return None
    try:
        return DetectorKind(cfg.detector)
    except ValueError as exc:
        raise ConfigError(f"unknown detector {cfg.detector!r}") from exc


def _calib_reps(cfg: ExperimentConfig) -> int:
    return cfg.calib_reps or cfg.reps


def _build_detector(cfg: ExperimentConfig, shape: ProblemShape):
    if cfg.adaptive:
        test = AdaptiveDeltaStar(shape.d1, shape.d2, cfg.cap, on_cap="skip")
        if cfg.cutoff_mode == "calibrated":
            return test.calibrate(cfg.level, _calib_reps(cfg), cfg.seed, cfg.threads)
        return test.set_theoretical()
    kind = _kind(cfg)
    if cfg.cutoff_mode == "theoretical":
        specs = {k: s for k, s in theoretical_cutoffs(shape, cap=cfg.cap).items()}
        return DeltaStar(shape, specs) if kind is None else specs[kind]
    if kind is None:
        return calibrated_delta_star(shape, cfg.level, _calib_reps(cfg), cfg.seed, cfg.threads, cfg.cap)
    return calibrated_spec(kind, shape, cfg.level, _calib_reps(cfg), cfg.seed, cfg.threads, cfg.cap)


def _mu(cfg: ExperimentConfig, shape: ProblemShape) -> float:
    if cfg.mu is not None and cfg.mu_multiple is not None:
        raise ConfigError("give either --mu or --mu-multiple, not both")
    if cfg.mu_multiple is not None:
        return cfg.mu_multiple * math.sqrt(rate_breakdown(shape).R)
    return 0.0 if cfg.mu is None else cfg.mu


def _read_matrix(path: str, shape: ProblemShape) -> np.ndarray:
    try:
        y = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix {path}: {exc}") from exc
    if y.shape != (shape.d1, shape.d2):
        raise ConfigError(f"matrix in {path} has shape {y.shape}, expected {(shape.d1, shape.d2)}")
    if not np.all(np.isfinite(y)):
        raise ConfigError(f"matrix in {path} has non-finite entries")
    return y


def cmd_rate(cfg):
    _emit(cfg, rate_breakdown(cfg.shape()).as_dict())


def cmd_detect(cfg):
    shape = cfg.shape()
    if cfg.input:
        y = _read_matrix(cfg.input, shape)
    else:
        mu = _mu(cfg, shape)
        mean = make_planted_mean(shape, range(shape.s1), range(shape.s2), mu) if mu > 0 else shape
        y = sample_observation(mean, SeedSpec(cfg.seed, 0)).values
    detector = _build_detector(cfg, shape)
    out = detector.test(y).as_dict()
    out["detector"] = detector.name
    _emit(cfg, out)


def cmd_calibrate(cfg):
    shape = cfg.shape()
    kind = _kind(cfg)
    kinds = list(DetectorKind) if kind is None else [kind]
    rows = []
    for k in kinds:
        tau = truncation_tau(k, shape)
        row = {"detector": k.value, "tau": tau.tau if tau else None, "nu": tau.nu if tau else None,
               "level": cfg.level, "reps": _calib_reps(cfg), "seed": cfg.seed}
        try:
            row["cutoff"] = calibrate_cutoff(k, shape, cfg.level, _calib_reps(cfg), cfg.seed, cfg.threads,
                                             tau, cfg.cap)
            row["status"] = "ok"
        except EnumerationCapError:
            if kind is not None:
                raise
            row["cutoff"], row["status"] = None, "cap"
        rows.append(row)
    _emit(cfg, rows, rows)


def cmd_risk(cfg):
    shape = cfg.shape()
    detector = _build_detector(cfg, shape)
    est = estimate_risk(detector, shape, _mu(cfg, shape), cfg.reps, cfg.seed, cfg.support_policy, cfg.threads)
    _emit(cfg, est.as_dict())


def _plot_sweep(path: str, result) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("--plot needs matplotlib (pip install 'artifact[plot]')") from exc
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(result.multiples, [e.risk for e in result.estimates], marker="o")
    ax.axhline(result.eta, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("multiple of sqrt(R)")
    ax.set_ylabel("estimated risk")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_sweep(cfg):
    shape = cfg.shape()
    detector = _build_detector(cfg, shape)
    result = mu_sweep(detector, shape, _parse_floats(cfg.multiples), cfg.reps, cfg.seed, cfg.threads,
                      cfg.support_policy, cfg.eta)
    rows = result.rows()
    if cfg.plot:
        _plot_sweep(cfg.plot, result)
    if cfg.format == "csv":
        _emit(cfg, None, rows)
    else:
        _emit(cfg, {"rows": rows, "rate": result.rate, "last_high_risk": result.last_high_risk,
                    "first_low_risk": result.first_low_risk})


def cmd_lower_bound(cfg):
    shape = cfg.shape()
    mu = _mu(cfg, shape)
    if cfg.method == "exact":
        out = second_moment_exact(shape, mu).as_dict()
    elif cfg.method == "binom":
        out = {"mu": mu, "second_moment_binom_bound": second_moment_binom_bound(shape, mu),
               "exact": second_moment_exact(shape, mu).as_dict()}
    elif cfg.method == "mc-overlap":
        out = mc_second_moment_overlap(shape, mu, cfg.reps, cfg.seed).as_dict()
    else:
        out = mc_second_moment_likelihood(shape, mu, cfg.reps, cfg.seed, cfg.threads, cfg.cap).as_dict()
    _emit(cfg, out)


def cmd_study(cfg):
    if cfg.study is None:
        raise ConfigError("--study is required")
    which, shapes = STUDIES[cfg.study]
    table = rate_comparison_study(shapes(), which)
    if cfg.format == "csv":
        _emit(cfg, None, list(table.rows))
    else:
        _emit(cfg, {"study": which, "rows": list(table.rows), "verdict": table.verdict})


def cmd_phase(cfg):
    if cfg.d1 is None or cfg.d2 is None:
        raise ConfigError("phase needs --d1 and --d2")
    if cfg.mu_multiple is None:
        raise ConfigError("phase needs --mu-multiple")
    rows = _parse_ints(cfg.rows) if cfg.rows else [1, 2, 4]
    cols = _parse_ints(cfg.cols) if cfg.cols else [1, 2, 4]
    cells = phase_grid(cfg.d1, cfg.d2, rows, cols, cfg.mu_multiple, cfg.reps, cfg.seed, cfg.level,
                       cfg.calib_reps, cfg.threads, cfg.cap)
    if cfg.format == "csv":
        _emit(cfg, None, cells)
    else:
        _emit(cfg, {"cells": cells})


COMMANDS = {"rate": cmd_rate, "detect": cmd_detect, "calibrate": cmd_calibrate, "risk": cmd_risk,
            "sweep": cmd_sweep, "lower-bound": cmd_lower_bound, "study": cmd_study, "phase": cmd_phase}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def run(argv=None) -> int:
    try:
        cfg = load_config(sys.argv[1:] if argv is None else argv)
        COMMANDS[cfg.command](cfg)
    except EnumerationCapError as exc:
        return _fail(EXIT_CAP, "EnumerationCapError", str(exc))
    except (ConfigError, ShapeError, InsufficientReplicatesError, ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))
    return EXIT_OK


def main() -> None:
    sys.exit(run())
