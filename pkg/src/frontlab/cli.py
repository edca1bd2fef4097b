"""Command line runner.

    frontlab <experiment> --config run.toml [--jobs K] [--seed S]
    frontlab validate --config run.toml

Exit status: 0 success, 2 when the checked bound or test failed, 1 on any
operational error.  ``FRONTLAB_OUTPUT_ROOT`` sets the directory under which
relative ``output_dir`` values (and the default one) are placed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from frontlab import __version__, rng as rngmod
from frontlab.errors import InvalidArgumentError
from frontlab.experiments import EXPERIMENTS, RECIPES, REQUIRED, SCHEMAS, check_ranges

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ROOT_ENV = "FRONTLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
TOP_KEYS = {"experiment", "seed", "output_dir"}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str | None
    parameters: dict

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir, "parameters": self.parameters}


def _coerce(key, typ, value):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is bool and not isinstance(value, bool):
        raise ConfigError(f"field {key!r}: expected a boolean, got {value!r}")
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"field {key!r}: expected an integer, got {value!r}")
    if typ is list and not isinstance(value, list):
        raise ConfigError(f"field {key!r}: expected an array, got {value!r}")
    if typ in (float, str) and not isinstance(value, typ):
        raise ConfigError(f"field {key!r}: expected {typ.__name__}, got {value!r}")
    return value


def parse_config(text: str, experiment: str | None = None, seed_override: int | None = None) -> ExperimentConfig:
    """Schema and range check of a TOML config.  No side effects."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    declared = raw.get("experiment")
    if experiment is None:
        experiment = declared
    if experiment is None:
        raise ConfigError("missing key 'experiment'")
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    if declared is not None and declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r} but {experiment!r} was requested")

    if seed_override is not None:
        seed = seed_override
    elif "seed" in raw:
        seed = raw["seed"]
    else:
        raise ConfigError("missing key 'seed' (runs are never seeded from the clock)")
    try:
        seed = rngmod.check_seed(seed)
    except (InvalidArgumentError, TypeError) as exc:
        raise ConfigError(f"field 'seed': {exc}") from exc
    out_dir = raw.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("field 'output_dir': expected a string")

    flat = {}
    for key, value in raw.items():
        if key in TOP_KEYS:
            continue
        if key == "grid" and isinstance(value, dict):
            for k, v in value.items():
                flat[f"grid.{k}"] = v
        else:
            flat[key] = value
    schema = SCHEMAS[experiment]
    unknown = sorted(set(flat) - set(schema))
    if unknown:
        raise ConfigError(f"unknown field(s) for {experiment}: {', '.join(unknown)}")
    params = {}
    for key, (typ, default) in schema.items():
        if key in flat:
            params[key] = _coerce(key, typ, flat[key])
        elif default is REQUIRED:
            raise ConfigError(f"missing key {key!r} required by {experiment}")
        else:
            params[key] = default
    try:
        check_ranges(experiment, params)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(experiment, seed, out_dir, params)


def validate_config(path: str | Path, experiment: str | None = None) -> dict:
    """Return ``{"status": "ok", "config": <normalised echo>}`` or raise ConfigError."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, experiment)
    return {"status": "ok", "config": cfg.echo()}


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "frontlab-runs"))
    if cfg.output_dir is None:
        return root / f"{cfg.experiment}-seed{cfg.seed}"
    p = Path(cfg.output_dir)
    return p if p.is_absolute() else root / p


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run(cfg: ExperimentConfig, jobs: int = 1, out_dir: Path | None = None) -> int:
    """Execute the experiment, write artifacts, then the manifest (last)."""
    out_dir = resolve_output_dir(cfg) if out_dir is None else Path(out_dir)
    started = _now()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        manifest_path.unlink()

    outcome = RECIPES[cfg.experiment](cfg.parameters, cfg.seed, jobs)
    checksums = {}
    for name, text in sorted(outcome.artifacts.items()):
        data = text.encode("utf-8")
        (out_dir / name).write_bytes(data)
        checksums[name] = {"sha256": _sha256(data), "bytes": len(data)}
    manifest = {
        "library": "frontlab",
        "version": __version__,
        "config": cfg.echo(),
        "jobs": jobs,
        "started": started,
        "finished": _now(),
        "outputs": checksums,
        "metrics": outcome.metrics,
        "status": "pass" if outcome.passed else "fail",
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    return EXIT_OK if outcome.passed else EXIT_FAILED


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="frontlab", description="Branching-selection particle system and F-KPP experiments.")
    ap.add_argument("experiment", choices=(*EXPERIMENTS, "validate"))
    ap.add_argument("--config", required=True, help="TOML experiment config")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for replica fan-out")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--version", action="version", version=f"frontlab {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.experiment == "validate":
            report = validate_config(args.config)
            print("ok")
            print(json.dumps(report["config"], indent=2, sort_keys=True))
            return EXIT_OK
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text, args.experiment, args.seed)
        status = run(cfg, args.jobs)
    except ConfigError as exc:
        print(f"frontlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InvalidArgumentError, ValueError, RuntimeError, OSError) as exc:
        print(f"frontlab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = resolve_output_dir(cfg)
    verdict = "pass" if status == EXIT_OK else "FAIL (bound or test violated)"
    print(f"{cfg.experiment}: {verdict}; artifacts in {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
