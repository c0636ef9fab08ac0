"""Command-line front end.

Subcommands:

* ``simulate``   generate an excitation/response record and write it as CSV
* ``identify``   run the evolutionary sparse identification on a record
* ``snr-sweep``  repeat identification across noise levels (simulation only)
* ``benchmark``  compare gp-only / sparse-only / esparse on shared data
* ``validate``   re-score a saved model record against a data CSV

Configuration is a flat ``key = value`` file with dotted keys and ``#``
comments; every key can also be overridden on the command line as
``--section.key value``.  Exit codes: 0 success, 1 usage or configuration
error, 2 data error, 3 identification failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import math
import sys
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics
from .dynamics import (
    DataFormatError,
    DuffingParams,
    TrackDesign,
    apply_noise,
    chirp_input,
    params_from_track,
    read_csv,
    simulate,
    true_terms,
    write_csv,
)
from .evolve import GPConfig, esparse_run, gp_only_run
from .expr import (
    OP_NAMES,
    PrimitiveSet,
    binary,
    default_primitives,
    eval_columns,
    unary,
    variable,
)
from .sparsereg import (
    AllModelsEmpty,
    EmptyLibrary,
    RegressionConfig,
    build_library,
    model_from_record,
    model_to_record,
    percent_error,
    sweep_and_select,
)

__all__ = [
    "main",
    "run_benchmark",
    "extra_term_count",
    "BenchmarkRow",
    "BenchmarkReport",
    "RunConfig",
]

# Distinct sub-stream tag so noise draws never alias the search stream.
_NOISE_STREAM = 0x5EED


class ConfigError(Exception):
    """Bad configuration key, value, or combination."""


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_float(text):
    return float(text)


def _parse_int(text):
    return int(text, 10)

def _parse_str(text):
    return text.strip()


def _parse_floats(text):
    values = tuple(float(part) for part in text.split(",") if part.strip())
    if not values:
        raise ValueError("expected a comma-separated list of numbers")
    return values


def _parse_channels(text):
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    for name in names:
        if name not in ("q", "qdot", "qddot", "zddot"):
            raise ValueError(f"unknown channel {name!r}")
    if not names:
        raise ValueError("expected at least one channel name")
    return names


def _parse_operators(text):
    ops = []
    for part in text.split(","):
        name = part.strip()
        if not name:
            continue
        if name in OP_NAMES:
            ops.append(OP_NAMES[name])
        elif name in ("+", "-", "*", "/"):
            ops.append(name)
        else:
            raise ValueError(f"unknown operator {name!r}")
    if not ops:
        raise ValueError("expected at least one operator")
    return tuple(ops)


# key -> (parser, default)
SCHEMA = {
    "scenario": (_parse_str, "simulate"),
    "data": (_parse_str, ""),
    "out": (_parse_str, "out"),
    "seed": (_parse_int, 0),
    "repeats": (_parse_int, 1),
    "split": (_parse_int, dynamics.NOMINAL_SPLIT),
    "duffing.m": (_parse_float, dynamics.NOMINAL_MASS),
    "duffing.c": (_parse_float, dynamics.NOMINAL_DAMPING),
    "duffing.k": (_parse_float, dynamics.NOMINAL_STIFFNESS),
    "duffing.k3": (_parse_float, dynamics.NOMINAL_CUBIC),
    "duffing.mu1": (_parse_float, 0.0),
    "duffing.mu2": (_parse_float, 0.0),
    "track.use": (_parse_bool, False),
    "track.k1": (_parse_float, 16.7e3),
    "track.a": (_parse_float, 4.0),
    "track.b": (_parse_float, dynamics.NOMINAL_STIFFNESS / (4.0 * 16.7e3 * 4.0)),
    "track.mu": (_parse_float, 0.05),
    "chirp.f0": (_parse_float, dynamics.NOMINAL_F0),
    "chirp.f1": (_parse_float, dynamics.NOMINAL_F1),
    "chirp.duration": (_parse_float, dynamics.NOMINAL_DURATION),
    "chirp.dt": (_parse_float, dynamics.NOMINAL_DT),
    "chirp.amplitude": (_parse_float, dynamics.NOMINAL_AMPLITUDE),
    "noise.q": (_parse_float, math.inf),
    "noise.qdot": (_parse_float, math.inf),
    "noise.qddot": (_parse_float, math.inf),
    "noise.zddot": (_parse_float, math.inf),
    "sweep.snr": (_parse_floats, (20.0, 19.5, 19.0, 18.5)),
    "sweep.channels": (_parse_channels, ("qddot",)),
    "gp.population": (_parse_int, 80),
    "gp.generations": (_parse_int, 30),
    "gp.p_crossover": (_parse_float, 0.9),
    "gp.p_mutation": (_parse_float, 0.1),
    "gp.tournament": (_parse_int, 3),
    "gp.elite_fraction": (_parse_float, 0.05),
    "gp.max_depth": (_parse_int, 6),
    "gp.primitives": (_parse_operators, ("+", "-", "*", "abs", "sgn")),
    "gp.p_constant": (_parse_float, default_primitives().p_constant),
    "gp.const_low": (_parse_float, default_primitives().const_low),
    "gp.const_high": (_parse_float, default_primitives().const_high),
    "reg.lambda1": (_parse_floats, RegressionConfig().lambda1_grid),
    "reg.lambda2": (_parse_floats, RegressionConfig().lambda2_grid),
    "reg.threshold": (_parse_float, RegressionConfig().threshold),
    "reg.tol": (_parse_float, RegressionConfig().tol),
    "reg.max_iter": (_parse_int, RegressionConfig().max_iter),
    "benchmark.gp_population": (_parse_int, 250),
    "benchmark.gp_generations": (_parse_int, 80),
}


def load_config_file(path):
    """Read a flat dotted-key config file into a raw string mapping."""
    raw = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.split("#", 1)[0].strip()
    return raw


def parse_dotted_overrides(tokens):
    """Parse leftover CLI tokens of the form --key value or --key=value."""
    overrides = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, _, value = body.partition("=")
            i += 1
        else:
            key = body
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for override --{key}")
            value = tokens[i + 1]
            i += 2
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        overrides[key.strip()] = value
    return overrides


def resolve_settings(raw_layers):
    """Apply raw string layers over the schema defaults, with type checks."""
    resolved = {key: default for key, (_, default) in SCHEMA.items()}
    for layer in raw_layers:
        for key, text in layer.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            parser, _ = SCHEMA[key]
            try:
                resolved[key] = parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
    return resolved


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    scenario: str
    data: str
    out: Path
    seed: int
    repeats: int
    split: int
    params: DuffingParams
    chirp: dict
    noise: dict
    sweep_snrs: tuple
    sweep_channels: tuple
    gp: GPConfig
    reg: RegressionConfig
    bench_population: int
    bench_generations: int


def build_run_config(settings):
    if settings["scenario"] not in ("simulate", "ingest"):
        raise ConfigError("scenario must be 'simulate' or 'ingest'")
    if settings["repeats"] < 1:
        raise ConfigError("repeats must be at least 1")
    try:
        if settings["track.use"]:
            params = params_from_track(
                TrackDesign(
                    k1=settings["track.k1"],
                    a=settings["track.a"],
                    b=settings["track.b"],
                    mu=settings["track.mu"],
                ),
                m=settings["duffing.m"],
                c=settings["duffing.c"],
            )
        else:
            params = DuffingParams(
                m=settings["duffing.m"],
                c=settings["duffing.c"],
                k=settings["duffing.k"],
                k3=settings["duffing.k3"],
                mu1=settings["duffing.mu1"],
                mu2=settings["duffing.mu2"],
            )
        ops = settings["gp.primitives"]
        primitives = PrimitiveSet(
            unary=tuple(op for op in ops if op in ("abs", "sgn")),
            binary=tuple(op for op in ops if op in ("+", "-", "*", "/")),
            n_variables=3,
            const_low=settings["gp.const_low"],
            const_high=settings["gp.const_high"],
            p_constant=settings["gp.p_constant"],
        )
        gp = GPConfig(
            population_size=settings["gp.population"],
            generations=settings["gp.generations"],
            p_crossover=settings["gp.p_crossover"],
            p_mutation=settings["gp.p_mutation"],
            tournament_size=settings["gp.tournament"],
            elite_fraction=settings["gp.elite_fraction"],
            max_depth=settings["gp.max_depth"],
            primitives=primitives,
            seed=settings["seed"],
        )
        reg = RegressionConfig(
            lambda1_grid=settings["reg.lambda1"],
            lambda2_grid=settings["reg.lambda2"],
            threshold=settings["reg.threshold"],
            tol=settings["reg.tol"],
            max_iter=settings["reg.max_iter"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        scenario=settings["scenario"],
        data=settings["data"],
        out=Path(settings["out"]),
        seed=settings["seed"],
        repeats=settings["repeats"],
        split=settings["split"],
        params=params,
        chirp={
            "f0": settings["chirp.f0"],
            "f1": settings["chirp.f1"],
            "duration": settings["chirp.duration"],
            "dt": settings["chirp.dt"],
            "amplitude": settings["chirp.amplitude"],
        },
        noise={
            "q": settings["noise.q"],
            "qdot": settings["noise.qdot"],
            "qddot": settings["noise.qddot"],
            "zddot": settings["noise.zddot"],
        },
        sweep_snrs=settings["sweep.snr"],
        sweep_channels=settings["sweep.channels"],
        gp=gp,
        reg=reg,
        bench_population=settings["benchmark.gp_population"],
        bench_generations=settings["benchmark.gp_generations"],
    )


def _simulate_clean(cfg):
    zddot = chirp_input(
        cfg.chirp["f0"],
        cfg.chirp["f1"],
        cfg.chirp["duration"],
        cfg.chirp["dt"],
        cfg.chirp["amplitude"],
    )
    try:
        return simulate(cfg.params, zddot, cfg.chirp["dt"], split=cfg.split)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _noise_rng(cfg, run_index=0):
    return np.random.default_rng([cfg.seed + run_index, _NOISE_STREAM])


def _acquire_signals(cfg):
    """Load or simulate the working record, with configured noise applied."""
    if cfg.scenario == "ingest":
        if not cfg.data:
            raise ConfigError("scenario 'ingest' requires a data path (--data)")
        signals = read_csv(cfg.data, split=cfg.split)
    else:
        signals = _simulate_clean(cfg)
    return apply_noise(signals, cfg.noise, _noise_rng(cfg))


def _equation_string(terms):
    return "qddot = " + " ".join(f"{coef:+.17g}*{tree.key}" for tree, coef in terms)


def cmd_simulate(cfg, quiet=False):
    signals = _acquire_signals(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "data.csv"
    write_csv(signals, path)
    print(f"wrote {signals.n} samples to {path}")
    print("ground truth: " + _equation_string(true_terms(cfg.params)))
    return 0


def _support_label(model):
    keys = list(model.support)
    if any(tree.kind == "const" for tree, _ in model.terms):
        keys.append("1")
    return " | ".join(sorted(keys))


def extra_term_count(model, signals, truth):
    """Number of model terms that are not renderings of any true term.

    Matching is by column content on the identification segment, not by
    expression string, so an equivalent but larger rendering of a true term
    does not count against the model.  A fitted intercept counts as one
    extra term (the reference models have none).
    """
    columns = []
    for tree, _ in truth:
        col = eval_columns(tree, signals.state_matrix())[signals.id_slice]
        col = col - col.mean()
        columns.append(col / np.linalg.norm(col))
    extra = 0
    for tree, _ in model.terms:
        if tree.kind == "const":
            extra += 1
            continue
        col = eval_columns(tree, signals.state_matrix())[signals.id_slice]
        col = col - col.mean()
        norm = np.linalg.norm(col)
        if norm == 0.0 or not np.isfinite(norm):
            extra += 1
            continue
        col /= norm
        if not any(abs(float(col @ ref)) >= 1.0 - 1e-6 for ref in columns):
            extra += 1
    return extra


def cmd_identify(cfg, quiet=False):
    signals = _acquire_signals(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    progress = None if quiet else print
    results = []
    for run in range(cfg.repeats):
        gp_run = dataclasses.replace(cfg.gp, seed=cfg.seed + run)
        if not quiet:
            print(f"# run {run} (seed {gp_run.seed})")
        result = esparse_run(signals, gp_run, cfg.reg, progress=progress)
        results.append(result)
        report = cfg.out / f"model_run{run:02d}.txt"
        report.write_text(f"# seed = {gp_run.seed}\n" + model_to_record(result.best))
    errors = np.array([r.best.validation_error for r in results])
    supports = Counter(_support_label(r.best) for r in results)
    modal_support, modal_count = min(
        supports.items(), key=lambda item: (-item[1], item[0])
    )
    std = float(errors.std(ddof=1)) if len(errors) > 1 else 0.0
    summary_lines = [
        f"runs = {cfg.repeats}",
        f"mean_percent_error = {errors.mean():.17g}",
        f"std_percent_error = {std:.17g}",
        f"modal_support = {modal_support}",
        f"modal_support_count = {modal_count}",
    ]
    for run, result in enumerate(results):
        summary_lines.append(
            f"run{run}.percent_error = {result.best.validation_error:.17g}"
        )
        summary_lines.append(f"run{run}.model = {result.best.equation()}")
    (cfg.out / "summary.txt").write_text("\n".join(summary_lines) + "\n")
    print(f"{cfg.repeats} run(s): validation error "
          f"{errors.mean():.4g}% +/- {std:.2g}%")
    print(f"modal support ({modal_count}/{cfg.repeats}): {modal_support}")
    print(f"best model: {min(results, key=lambda r: r.best.validation_error).best.equation()}")
    return 0


def cmd_snr_sweep(cfg, quiet=False):
    if cfg.scenario != "simulate":
        raise ConfigError("snr-sweep needs the simulate scenario (ground truth)")
    if cfg.repeats < 2:
        raise ConfigError("snr-sweep needs at least two repeats per level")
    clean = _simulate_clean(cfg)
    truth = true_terms(cfg.params)
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    summary = []
    for snr in cfg.sweep_snrs:
        for run in range(cfg.repeats):
            noisy = apply_noise(
                clean,
                {channel: snr for channel in cfg.sweep_channels},
                _noise_rng(cfg, run),
            )
            gp_run = dataclasses.replace(cfg.gp, seed=cfg.seed + run)
            result = esparse_run(noisy, gp_run, cfg.reg)
            error = percent_error(result.best, clean)
            extra = extra_term_count(result.best, clean, truth)
            rows.append((snr, run, error, extra, _support_label(result.best)))
            if not quiet:
                print(
                    f"snr={snr:g} run={run} error={error:.4g}% extra_terms={extra}"
                )
        level = [row for row in rows if row[0] == snr]
        accuracy = np.array([100.0 - row[2] for row in level])
        extras = np.array([row[3] for row in level], dtype=float)
        summary.append(
            (snr, accuracy.mean(), accuracy.std(ddof=1), extras.mean())
        )
    with open(cfg.out / "sweep.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["snr_db", "mean_accuracy", "std_accuracy", "mean_extra_terms"])
        for snr, mean_acc, std_acc, mean_extra in summary:
            writer.writerow(
                [f"{snr:g}", f"{mean_acc:.17g}", f"{std_acc:.17g}", f"{mean_extra:.17g}"]
            )
    with open(cfg.out / "runs.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["snr_db", "repeat", "percent_error", "extra_terms", "support"])
        for snr, run, error, extra, support in rows:
            writer.writerow([f"{snr:g}", run, f"{error:.17g}", extra, support])
    print("snr_db  mean_acc  std_acc  mean_extra")
    for snr, mean_acc, std_acc, mean_extra in summary:
        print(f"{snr:6g}  {mean_acc:8.3f}  {std_acc:7.3f}  {mean_extra:10.3f}")
    return 0


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    repeat: int
    wall_time: float
    percent_error: float
    n_terms: int
    model: str
    data_sha256: str
    # Wall seconds until the method's running best first reached the
    # gp-only error for the same seed; nan for the baselines themselves.
    time_to_match: float = math.nan


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple
    data_sha256: str


def _data_hash(signals):
    digest = hashlib.sha256()
    for name in ("t", "q", "qdot", "qddot", "zddot"):
        digest.update(np.ascontiguousarray(getattr(signals, name)).tobytes())
    digest.update(str(signals.split).encode())
    return digest.hexdigest()


def _candidate_terms(include_sgn):
    """Hand-built polynomial library (cubic in q, qdot, plus the input)."""
    q, qd, zdd = variable(0), variable(1), variable(2)

    def mul(a, b):
        return binary("*", a, b)

    terms = [
        q, qd, zdd,
        mul(q, q), mul(q, qd), mul(qd, qd),
        mul(mul(q, q), q), mul(mul(q, q), qd), mul(mul(qd, qd), q),
        mul(mul(qd, qd), qd),
    ]
    if include_sgn:
        terms += [
            unary("sgn", q), unary("sgn", qd),
            unary("abs", q), unary("abs", qd),
            mul(q, unary("sgn", qd)), mul(mul(q, q), unary("sgn", qd)),
            mul(q, unary("abs", q)),
        ]
    return terms


def run_benchmark(cfg, quiet=True):
    """Run all benchmark methods on one shared record with matched seeds."""
    signals = _acquire_signals(cfg)
    data_hash = _data_hash(signals)
    rows = []
    for run in range(cfg.repeats):
        seed = cfg.seed + run
        gp_run = dataclasses.replace(cfg.gp, seed=seed)
        started = time.perf_counter()
        result = esparse_run(signals, gp_run, cfg.reg)
        rows.append(
            BenchmarkRow(
                "esparse", run, time.perf_counter() - started,
                result.best.validation_error, len(result.best.terms),
                result.best.equation(), data_hash,
            )
        )
        gp_baseline = dataclasses.replace(
            cfg.gp,
            population_size=cfg.bench_population,
            generations=cfg.bench_generations,
            seed=seed,
        )
        started = time.perf_counter()
        result = gp_only_run(signals, gp_baseline)
        rows.append(
            BenchmarkRow(
                "gp_only", run, time.perf_counter() - started,
                result.best.validation_error, len(result.best.terms),
                result.best.equation(), data_hash,
            )
        )
        for method, include_sgn in (("sparse_only", True), ("sparse_only_nosgn", False)):
            started = time.perf_counter()
            lib = build_library(_candidate_terms(include_sgn), signals)
            model = sweep_and_select(lib, signals, cfg.reg)
            rows.append(
                BenchmarkRow(
                    method, run, time.perf_counter() - started,
                    model.validation_error, len(model.terms),
                    model.equation(), data_hash,
                )
            )
        if not quiet:
            for row in rows[-4:]:
                print(
                    f"{row.method:18s} run={run} time={row.wall_time:8.2f}s "
                    f"error={row.percent_error:.4g}%"
                )
    return BenchmarkReport(rows=tuple(rows), data_sha256=data_hash)


def cmd_benchmark(cfg, quiet=False):
    report = run_benchmark(cfg, quiet=quiet)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "benchmark.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["method", "repeat", "wall_time_s", "percent_error", "n_terms",
             "model", "data_sha256"]
        )
        for row in report.rows:
            writer.writerow(
                [row.method, row.repeat, f"{row.wall_time:.6f}",
                 f"{row.percent_error:.17g}", row.n_terms, row.model,
                 row.data_sha256]
            )
    print(f"data sha256: {report.data_sha256}")
    print(f"{'method':18s} {'time [s]':>10s} {'error [%]':>12s}  model")
    for row in report.rows:
        print(
            f"{row.method:18s} {row.wall_time:10.2f} {row.percent_error:12.4g}  "
            f"{row.model}"
        )
    return 0


def cmd_validate(model_path, data_path, split, quiet=False):
    try:
        text = Path(model_path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read model record {model_path}: {exc}") from exc
    try:
        model = model_from_record(text)
    except (ValueError, KeyError) as exc:
        raise DataFormatError(f"bad model record {model_path}: {exc}") from exc
    signals = read_csv(data_path, split=split)
    recomputed = percent_error(model, signals)
    print(f"model: {model.equation()}")
    print(f"recorded validation error:   {model.validation_error:.6g}%")
    print(f"recomputed validation error: {recomputed:.6g}%")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="esparse",
        description="Evolutionary sparse identification of oscillator dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate a data CSV from the oscillator model"),
        ("identify", "identify a sparse model from data"),
        ("snr-sweep", "identification accuracy across noise levels"),
        ("benchmark", "compare gp-only, sparse-only, and esparse"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="flat key=value configuration file")
        cmd.add_argument("--seed", type=int, help="master seed")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--data", help="input CSV (ingest scenario)")
        cmd.add_argument("--repeats", type=int, help="number of repeated runs")
        cmd.add_argument(
            "--snr",
            help="target-channel SNR in dB (identify/simulate) or a comma list"
            " of sweep levels (snr-sweep)",
        )
        cmd.add_argument("--quiet", action="store_true", help="suppress progress")
    val = sub.add_parser("validate", help="re-score a saved model on a data CSV")
    val.add_argument("--model", required=True, help="model record file")
    val.add_argument("--data", required=True, help="data CSV")
    val.add_argument("--split", type=int, default=dynamics.NOMINAL_SPLIT)
    val.add_argument("--quiet", action="store_true")
    return parser


def _flag_overrides(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.data is not None:
        overrides["data"] = args.data
        overrides["scenario"] = "ingest"
    if args.repeats is not None:
        overrides["repeats"] = str(args.repeats)
    if args.snr is not None:
        if args.command == "snr-sweep":
            overrides["sweep.snr"] = args.snr
        else:
            overrides["noise.qddot"] = args.snr
    return overrides


def main(argv=None):
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; the contract reserves 2 for
        # data errors and reports usage trouble as 1 (--help stays 0).
        return 0 if exc.code == 0 else 1
    try:
        if args.command == "validate":
            if extras:
                raise ConfigError(f"unexpected argument {extras[0]!r}")
            return cmd_validate(args.model, args.data, args.split, args.quiet)
        layers = []
        if args.config:
            layers.append(load_config_file(args.config))
        layers.append(parse_dotted_overrides(extras))
        layers.append(_flag_overrides(args))
        cfg = build_run_config(resolve_settings(layers))
        handler = {
            "simulate": cmd_simulate,
            "identify": cmd_identify,
            "snr-sweep": cmd_snr_sweep,
            "benchmark": cmd_benchmark,
        }[args.command]
        return handler(cfg, quiet=args.quiet)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (EmptyLibrary, AllModelsEmpty) as exc:
        print(f"identification failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
