"""Command-line front end: reproducible generate/train/eval/race runs.

Every subcommand resolves its settings from three layers — built-in
defaults, a TOML config file (``--config`` flag or the ``PAVD_CONFIG``
environment variable), and explicit command-line flags — then writes the
fully resolved settings next to its outputs, so any run can be repeated
from that file alone.  Exit codes: 0 success, 1 internal error, 2 bad
input, 3 domain failure (training divergence or an aborted race).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import tomlwriter
from .errors import (
    CheckpointError,
    DivergedError,
    OffTrackError,
    TelemetryError,
    TrainingDivergedError,
)
from .estimator import (
    AppliedInput,
    Network,
    NetworkConfig,
    checkpoint_metadata,
    load_checkpoint,
    profile_default_config,
    save_checkpoint,
)
from .evaluation import (
    evaluate_open_loop,
    write_error_trace_csv,
    write_report_json,
    write_window_csv,
)
from .generate import (
    GeneratorConfig,
    generate,
    load_params_toml,
    tabletop_geometry,
    tabletop_params,
    write_params_toml,
)
from .guard import get_profile, load_bounds
from .physics import PhysicsMode
from .raceloop import (
    NmpcConfig,
    run_race,
    write_race_json,
    write_race_trace_csv,
    write_raceline_csv,
)
from .telemetry import ByFraction, WindowBatch, load_csv, split, write_csv
from .tracks import BUNDLED_TRACKS, bundled_track, load_track, write_track
from .training import TrainConfig, fit

CONFIG_ENV = "PAVD_CONFIG"


class CliError(Exception):
    """Bad input: wrong flags, missing files, malformed data (exit 2)."""


# ---------------------------------------------------------------------------
# Settings: name -> (default, converter).  The converter also coerces
# values read from config files, so flags and TOML behave identically.

def _bool(v):
    if isinstance(v, bool):
        return v
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {v!r}")


def _widths(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return tuple(int(x) for x in v)
    return tuple(int(x) for x in str(v).split(",") if x.strip())


def _mode(v):
    name = str(v).strip().lower().replace("-", "_")
    table = {
        "full": PhysicsMode.FULL,
        "nominal_load": PhysicsMode.NOMINAL_LOAD,
        "load_transfer_only": PhysicsMode.LOAD_TRANSFER_ONLY,
    }
    if name not in table:
        raise CliError(f"unknown physics mode {v!r} "
                       f"(expected full, nominal-load, load-transfer-only)")
    return name


SETTINGS = {
    "gen-data": {
        "track": ("stadium", str),
        "laps": (6, int),
        "rate": (50.0, float),
        "v_max": (2.0, float),
        "a_lat": (5.0, float),
        "a_long": (3.0, float),
        "actuator_tau": (0.05, float),
        "throttle_noise": (0.04, float),
        "steer_noise": (0.02, float),
        "mode": ("full", _mode),
        "seed": (0, int),
        "out_dir": ("runs/gen-data", str),
    },
    "train": {
        "data": (None, str),
        "epochs": (50, int),
        "batch": (128, int),
        "lr": (1e-3, float),
        "warmup": (50, int),
        "final_lr_fraction": (0.1, float),
        "grad_clip": (0.0, float),
        "standardize": (True, _bool),
        "history": (12, int),
        "arch": ("sim", str),
        "gru_layers": (None, int),
        "gru_hidden": (None, int),
        "dense": (None, _widths),
        "profile": ("sim", str),
        "bounds_file": (None, str),
        "val_fraction": (0.1, float),
        "mode": ("full", _mode),
        "seed": (0, int),
        "resume": (None, str),
        "out_dir": ("runs/train", str),
    },
    "eval": {
        "model": (None, str),
        "params_file": (None, str),
        "data": (None, str),
        "horizon_ms": (300.0, float),
        "stride": (1, int),
        "applied": ("command", str),
        "history": (None, int),
        "mode": ("full", _mode),
        "seed": (0, int),
        "out_dir": ("runs/eval", str),
    },
    "race": {
        "model": (None, str),
        "params_file": (None, str),
        "track": ("stadium", str),
        "laps": (1, int),
        "controller": ("nmpc", str),
        "horizon": (15, int),
        "iterations": (8, int),
        "speed_scale": (1.0, float),
        "v_max": (2.0, float),
        "a_lat": (5.0, float),
        "a_long": (3.0, float),
        "mode": ("full", _mode),
        "seed": (0, int),
        "out_dir": ("runs/race", str),
    },
    "report": {
        "out_dir": ("runs", str),
    },
}

FLAG_HELP = {
    "track": "bundled track name or a track TOML path",
    "laps": "number of laps",
    "rate": "sampling rate, Hz",
    "data": "telemetry CSV path",
    "model": "checkpoint path",
    "params_file": "physical-parameters TOML path",
    "mode": "physics mode: full | nominal-load | load-transfer-only",
    "out_dir": "directory for all outputs",
    "seed": "seed for every random choice in the run",
    "horizon_ms": "rollout horizon in milliseconds",
    "controller": "nmpc | pursuit",
    "arch": "default architecture family: sim | real",
    "dense": "dense head widths, comma separated",
    "profile": "parameter-bounds profile: sim | real",
    "bounds_file": "TOML file overriding bound entries",
    "resume": "checkpoint to continue training from",
    "applied": "control channel to replay: command | feedback",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="racedyn",
        description="Vehicle-dynamics workbench: data generation, "
                    "estimator training, open-loop evaluation, racing.")
    sub = parser.add_subparsers(dest="command")
    for command, spec in SETTINGS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None,
                       help=f"TOML settings file (or ${CONFIG_ENV})")
        for name, (default, conv) in spec.items():
            flag = "--" + name.replace("_", "-")
            kwargs = {"default": None, "help": FLAG_HELP.get(name)}
            if conv is _bool:
                p.add_argument(flag, dest=name,
                               action=argparse.BooleanOptionalAction,
                               **kwargs)
            else:
                p.add_argument(flag, dest=name, **kwargs)
    return parser


def _config_layers(doc: dict, command: str):
    """Config sections that may feed this command, weakest first."""
    top = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    layers = [top]
    for section in ("settings", command):
        if isinstance(doc.get(section), dict):
            layers.append(doc[section])
    return layers


def resolve_settings(command: str, args: argparse.Namespace) -> dict:
    spec = SETTINGS[command]
    resolved = {name: default for name, (default, _) in spec.items()}

    config_path = args.config or os.environ.get(CONFIG_ENV)
    if config_path:
        if not os.path.exists(config_path):
            raise CliError(f"config file not found: {config_path}")
        with open(config_path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as err:
                raise CliError(f"bad config {config_path}: {err}") from err
        for strict, layer in enumerate(_config_layers(doc, command)):
            for key, value in layer.items():
                name = str(key).replace("-", "_")
                if name == "command":
                    continue
                if name not in spec:
                    if strict:     # the command/settings tables are ours
                        raise CliError(
                            f"unknown setting {key!r} for {command}")
                    continue       # shared top level may serve other cmds
                resolved[name] = spec[name][1](value)

    for name, (_, conv) in spec.items():
        given = getattr(args, name)
        if given is not None:
            resolved[name] = conv(given)
    return resolved


def write_resolved(settings: dict, command: str) -> str:
    out_dir = settings["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    body = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in settings.items() if v is not None}
    path = os.path.join(out_dir, "resolved.toml")
    tomlwriter.dump({"command": command, "settings": body}, path)
    return out_dir


# ---------------------------------------------------------------------------
# Shared input loading.

def _load_track(name: str):
    if name in BUNDLED_TRACKS:
        return bundled_track(name)
    if os.path.exists(name):
        return load_track(name)
    raise CliError(f"track not found: {name!r} is neither a bundled track "
                   f"({', '.join(BUNDLED_TRACKS)}) nor an existing file")


def _load_series(path: str):
    if not path:
        raise CliError("missing required telemetry path (--data)")
    if not os.path.exists(path):
        raise CliError(f"telemetry file not found: {path}")
    return load_csv(path)


def _load_model(settings: dict):
    """Checkpoint or fixed parameter vector, exactly one."""
    model, params_file = settings.get("model"), settings.get("params_file")
    if bool(model) == bool(params_file):
        raise CliError("pass exactly one of --model and --params-file")
    if model:
        if not os.path.exists(model):
            raise CliError(f"checkpoint not found: {model}")
        network, bounds, _ = load_checkpoint(model)
        return network, bounds, None
    if not os.path.exists(params_file):
        raise CliError(f"parameter file not found: {params_file}")
    return None, None, load_params_toml(params_file).to_vector()


# ---------------------------------------------------------------------------
# Subcommands.

def cmd_gen_data(settings: dict) -> int:
    track = _load_track(settings["track"])
    config = GeneratorConfig(
        track=settings["track"], laps=settings["laps"],
        rate_hz=settings["rate"], v_max=settings["v_max"],
        a_lat=settings["a_lat"], a_long=settings["a_long"],
        actuator_tau=settings["actuator_tau"],
        throttle_noise=settings["throttle_noise"],
        steer_noise=settings["steer_noise"], seed=settings["seed"],
        mode=PhysicsMode[settings["mode"].upper()],
    )
    geom = tabletop_geometry()
    params = tabletop_params()
    series = generate(config, track=track, geom=geom, params=params)

    out_dir = write_resolved(settings, "gen-data")
    write_csv(series, os.path.join(out_dir, "telemetry.csv"))
    write_track(track, os.path.join(out_dir, "track.toml"))
    write_params_toml(os.path.join(out_dir, "truth_params.toml"), params)

    print(f"wrote {len(series)} rows, {len(series.lap_starts)} laps "
          f"at {settings['rate']:g} Hz to {out_dir}/telemetry.csv")
    print("ground-truth parameters:")
    for name, value in params.to_dict().items():
        print(f"  {name} = {value!r}")
    return 0


def _network_config(settings: dict) -> NetworkConfig:
    base = profile_default_config(settings["arch"])
    overrides = {"history_len": settings["history"]}
    if settings["gru_layers"] is not None:
        overrides["gru_layers"] = settings["gru_layers"]
    if settings["gru_hidden"] is not None:
        overrides["gru_hidden"] = settings["gru_hidden"]
    if settings["dense"] is not None:
        overrides["dense_widths"] = tuple(settings["dense"])
    return replace(base, **overrides)


def cmd_train(settings: dict) -> int:
    series = _load_series(settings["data"])
    if settings["bounds_file"]:
        if not os.path.exists(settings["bounds_file"]):
            raise CliError(f"bounds file not found: {settings['bounds_file']}")
        bounds = load_bounds(settings["bounds_file"],
                             base=settings["profile"])
    else:
        bounds = get_profile(settings["profile"])

    step_offset = 0
    if settings["resume"]:
        if not os.path.exists(settings["resume"]):
            raise CliError(f"checkpoint not found: {settings['resume']}")
        network, bounds, _ = load_checkpoint(settings["resume"])
        step_offset = checkpoint_metadata(settings["resume"])["steps_trained"]
    else:
        network = Network.init(_network_config(settings),
                               seed=settings["seed"])

    history = network.config.history_len
    if settings["val_fraction"] > 0:
        train_series, val_series = split(
            series, ByFraction(1.0 - settings["val_fraction"]))
    else:
        train_series, val_series = series, None
    train_batch = WindowBatch.from_series(train_series, history)
    val_batch = None
    if val_series is not None and len(val_series) > history:
        val_batch = WindowBatch.from_series(val_series, history)

    config = TrainConfig(
        epochs=settings["epochs"], batch_size=settings["batch"],
        base_lr=settings["lr"], warmup_steps=settings["warmup"],
        final_lr_fraction=settings["final_lr_fraction"],
        grad_clip=settings["grad_clip"],
        standardize=settings["standardize"], seed=settings["seed"],
        mode=PhysicsMode[settings["mode"].upper()],
    )
    geom = tabletop_geometry()
    out_dir = write_resolved(settings, "train")
    try:
        result = fit(network, bounds, train_batch, geom, series.dt, config,
                     val_batch=val_batch)
    except TrainingDivergedError as err:
        steps_per_epoch = max(1, -(-len(train_batch.starts)
                                   // settings["batch"]))
        last_epoch = err.step // steps_per_epoch
        print(f"failure: training diverged at step "
              f"{step_offset + err.step}; last finite epoch "
              f"{last_epoch - 1 if last_epoch else 'none'}",
              file=sys.stderr)
        return 3

    save_checkpoint(os.path.join(out_dir, "model.npz"), result.network,
                    bounds, settings["seed"],
                    steps_trained=step_offset + result.steps)
    with open(os.path.join(out_dir, "losses.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(result.step_losses):
            writer.writerow([step_offset + i, repr(float(loss))])
    with open(os.path.join(out_dir, "epochs.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, loss in enumerate(result.epoch_losses):
            val = repr(float(result.val_losses[i])) \
                if result.val_losses is not None else ""
            writer.writerow([i, repr(float(loss)), val])

    print(f"trained {result.steps} steps "
          f"({settings['epochs']} epochs) on {len(train_batch.starts)} "
          f"windows; final epoch loss {result.epoch_losses[-1]:.6g}")
    print(f"checkpoint: {out_dir}/model.npz")
    return 0


def cmd_eval(settings: dict) -> int:
    series = _load_series(settings["data"])
    network, bounds, params_vec = _load_model(settings)
    horizon = max(1, round(settings["horizon_ms"] / 1000.0 * series.rate_hz))
    applied = {"command": AppliedInput.COMMAND,
               "feedback": AppliedInput.FEEDBACK}.get(settings["applied"])
    if applied is None:
        raise CliError(f"unknown control channel {settings['applied']!r}")

    report = evaluate_open_loop(
        network, bounds, series, tabletop_geometry(), horizon=horizon,
        mode=PhysicsMode[settings["mode"].upper()],
        stride=settings["stride"], applied=applied,
        params_vec=params_vec, history_len=settings["history"])

    out_dir = write_resolved(settings, "eval")
    write_report_json(report, os.path.join(out_dir, "report.json"))
    write_window_csv(report, os.path.join(out_dir, "windows.csv"))
    write_error_trace_csv(report, os.path.join(out_dir, "error_trace.csv"))
    print(f"{report.windows} windows ({report.excluded} excluded), "
          f"horizon {horizon} steps: ADE {report.ade:.6g} m, "
          f"FDE {report.fde:.6g} m "
          f"(constant-velocity baseline ADE {report.baseline_ade:.6g} m)")
    print(f"report: {out_dir}/report.json")
    return 0


def cmd_race(settings: dict) -> int:
    track = _load_track(settings["track"])
    if settings["controller"] == "pursuit":
        network = bounds = params_vec = None
    else:
        network, bounds, params_vec = _load_model(settings)
    nmpc = NmpcConfig(horizon=settings["horizon"],
                      iterations=settings["iterations"],
                      speed_scale=settings["speed_scale"])
    geom = tabletop_geometry()
    plant = tabletop_params()

    result = run_race(
        track, geom, plant, network=network, bounds=bounds,
        model_params=params_vec, controller=settings["controller"],
        laps=settings["laps"], nmpc=nmpc,
        mode=PhysicsMode[settings["mode"].upper()],
        v_max=settings["v_max"], a_lat=settings["a_lat"],
        a_long=settings["a_long"])

    out_dir = write_resolved(settings, "race")
    write_race_json(os.path.join(out_dir, "race.json"), result)
    write_race_trace_csv(os.path.join(out_dir, "race_trace.csv"), result)
    profile = track.speed_profile(settings["v_max"], settings["a_lat"],
                                  settings["a_long"])
    write_raceline_csv(os.path.join(out_dir, "raceline.csv"), track, profile)

    for lap in result.laps:
        print(f"lap {lap.index}: {lap.time:.3f} s, "
              f"{lap.violations} violations, mean vx {lap.mean_vx:.2f} m/s")
    if result.aborted:
        print(f"failure: race aborted — {result.abort_reason} "
              f"({result.completed} of {settings['laps']} laps done)",
              file=sys.stderr)
        return 3
    print(f"race complete: {result.completed} laps, "
          f"{result.total_violations} violations; "
          f"results in {out_dir}/race.json")
    return 0


def cmd_report(settings: dict) -> int:
    out_dir = settings["out_dir"]
    if not os.path.isdir(out_dir):
        raise CliError(f"no run directory at {out_dir}")
    lines = []

    def scan(directory):
        found = {}
        for name in ("resolved.toml", "report.json", "race.json",
                     "epochs.csv", "losses.csv"):
            path = os.path.join(directory, name)
            if os.path.exists(path):
                found[name] = path
        return found

    runs = []
    top = scan(out_dir)
    if top:
        runs.append((out_dir, top))
    for entry in sorted(os.listdir(out_dir)):
        sub = os.path.join(out_dir, entry)
        if os.path.isdir(sub):
            found = scan(sub)
            if found:
                runs.append((sub, found))
    if not runs:
        raise CliError(f"no run artifacts under {out_dir}")

    for directory, found in runs:
        lines.append(f"== {directory}")
        if "resolved.toml" in found:
            with open(found["resolved.toml"], "rb") as fh:
                doc = tomllib.load(fh)
            lines.append(f"   command: {doc.get('command', '?')}")
        if "epochs.csv" in found:
            with open(found["epochs.csv"]) as fh:
                rows = list(csv.DictReader(fh))
            if rows:
                last = rows[-1]
                msg = (f"   training: {len(rows)} epochs, "
                       f"final loss {float(last['train_loss']):.6g}")
                if last.get("val_loss"):
                    msg += f", val {float(last['val_loss']):.6g}"
                lines.append(msg)
        if "report.json" in found:
            with open(found["report.json"]) as fh:
                rep = json.load(fh)
            lines.append(
                f"   open loop: ADE {rep['ade']:.6g} m over "
                f"{rep['windows']} windows (baseline "
                f"{rep['baseline']['ade']:.6g} m, horizon {rep['horizon']})")
        if "race.json" in found:
            with open(found["race.json"]) as fh:
                race = json.load(fh)
            state = "aborted" if race.get("aborted") else "complete"
            times = ", ".join(f"{t:.3f}" for t in race.get("lap_times", []))
            lines.append(
                f"   race: {state}, {race.get('completed', 0)} laps "
                f"[{times}] s, {race.get('total_violations', 0)} violations")

    text = "\n".join(lines)
    print(text)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(text + "\n")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "race": cmd_race,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        settings = resolve_settings(args.command, args)
        return COMMANDS[args.command](settings)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (CheckpointError, TelemetryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (DivergedError, OffTrackError, TrainingDivergedError) as err:
        print(f"failure: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:                      # noqa: BLE001
        print(f"internal error: {type(err).__name__}: {err}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
