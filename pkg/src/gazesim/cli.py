"""Command-line experiment runner.

Experiments are described by a flat YAML mapping (``--config``) whose keys
can be overridden with repeated ``--set key=value`` flags. Recognised keys:

``trace_file``
    path to a recorded trace (text or binary, detected from the header).
``trace_kind`` / ``trace_length`` / ``seed`` / ``trace.<param>``
    a synthetic trace instead; exactly one of ``trace_file`` and
    ``trace_kind`` must be given for commands that simulate.
``prefetcher`` / ``prefetchers``
    prefetcher for ``run``; list (or comma-separated string) for ``compare``
    and the prefetcher sweep.
``gaze.<field>``
    Gaze table geometry and thresholds.
``l1d.<field>`` / ``l2c.<field>`` / ``llc.<field>``
    ``capacity``, ``associativity`` or ``hit_latency`` of a cache level.
``block_size`` / ``memory_latency`` / ``pq_depth`` / ``drain_rate`` / ``max_inflight``
    the remaining hierarchy parameters.
``format`` / ``trace_format``
    report format (json, csv, text) and the format ``gen`` writes.

Without ``--output`` results go to stdout, or into ``$GAZESIM_OUTPUT_DIR``
when that variable is set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from gazesim.gaze import GazeConfig
from gazesim.gaze.storage import storage_json, storage_report
from gazesim.memsys import CacheConfig, HierarchyConfig
from gazesim.metrics import RunReport, format_value, text_table, to_csv
from gazesim.runner import compare, simulate
from gazesim.trace import (
    GeneratorKind,
    MemoryAccess,
    TraceError,
    TraceFormat,
    TraceSpec,
    generate,
    generator_params,
    load_trace_file,
    write_trace,
)

OUTPUT_DIR_ENV = "GAZESIM_OUTPUT_DIR"
FORMATS = ("json", "csv", "text")
SWEEP_DIMENSIONS = ("n-access", "region-size", "prefetcher")
SWEEP_COLUMNS = ("point", "prefetcher", "accesses", "cycles", "accuracy", "coverage", "late_fraction", "speedup")
DEFAULT_TRACE_LENGTH = 10_000

_TOP_KEYS = {
    "trace_file", "trace_kind", "trace_length", "seed", "prefetcher", "prefetchers", "format", "trace_format",
    "block_size", "memory_latency", "pq_depth", "drain_rate", "max_inflight",
}
_CACHE_LEVELS = ("l1d", "l2c", "llc")
_CACHE_FIELDS = ("capacity", "associativity", "hit_latency")
_GAZE_FIELDS = {f.name for f in dataclasses.fields(GazeConfig)}


class ConfigError(ValueError):
    """A malformed or inconsistent experiment description."""


@dataclass
class ExperimentConfig:
    trace_file: Optional[str] = None
    trace_spec: Optional[TraceSpec] = None
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    gaze: GazeConfig = field(default_factory=GazeConfig)
    prefetcher: str = "gaze"
    prefetchers: List[str] = field(default_factory=lambda: ["next-line", "ip-stride", "offset-table", "gaze"])
    output_format: str = "json"
    trace_format: TraceFormat = TraceFormat.TEXT
    seed: int = 0

    def load_trace(self) -> List[MemoryAccess]:
        if self.trace_file is not None:
            return load_trace_file(self.trace_file)
        if self.trace_spec is None:
            raise ConfigError("no trace source: set trace_file or trace_kind")
        return generate(self.trace_spec)

    def echo(self) -> Dict[str, Any]:
        """JSON-safe summary of the settings that shaped a run."""
        out: Dict[str, Any] = {"prefetcher": self.prefetcher}
        if self.trace_file is not None:
            out["trace_file"] = self.trace_file
        if self.trace_spec is not None:
            out["trace"] = {
                "kind": self.trace_spec.kind.value,
                "length": self.trace_spec.length,
                "seed": self.trace_spec.seed,
                "params": self.trace_spec.params,
            }
        out["hierarchy"] = dataclasses.asdict(self.hierarchy)
        out["gaze"] = dataclasses.asdict(self.gaze)
        return out


def parse_override(item: str) -> Tuple[str, Any]:
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of {key!r}: {exc}") from None
    return key.strip(), value


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key/value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} is nested; use flat dotted keys such as {key}.<name>")
    return {str(k): v for k, v in data.items()}


def _int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _name_list(key: str, value: Any) -> List[str]:
    if isinstance(value, str):
        items = [v.strip() for v in value.split(",") if v.strip()]
    elif isinstance(value, list):
        items = [str(v) for v in value]
    else:
        raise ConfigError(f"{key} must be a list or a comma-separated string")
    if not items:
        raise ConfigError(f"{key} is empty")
    return items


def build_config(raw: Dict[str, Any], require_trace: bool = True) -> ExperimentConfig:
    """Validate a flat key/value mapping into an :class:`ExperimentConfig`."""
    trace_params: Dict[str, Any] = {}
    gaze_kw: Dict[str, Any] = {}
    cache_kw: Dict[str, Dict[str, Any]] = {lvl: {} for lvl in _CACHE_LEVELS}
    top: Dict[str, Any] = {}
    for key, value in raw.items():
        prefix, dot, name = key.partition(".")
        if dot and prefix == "trace" and name:
            trace_params[name] = value
        elif dot and prefix == "gaze" and name in _GAZE_FIELDS:
            gaze_kw[name] = value
        elif dot and prefix in _CACHE_LEVELS and name in _CACHE_FIELDS:
            cache_kw[prefix][name] = _int(key, value)
        elif not dot and key in _TOP_KEYS:
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")

    cfg = ExperimentConfig()
    if "trace_file" in top and "trace_kind" in top:
        raise ConfigError("give exactly one trace source: trace_file or trace_kind, not both")
    if "trace_file" in top:
        if trace_params or "trace_length" in top:
            raise ConfigError("trace.<param> and trace_length only apply to generated traces")
        cfg.trace_file = str(top["trace_file"])
    cfg.seed = _int("seed", top.get("seed", 0))
    if "trace_kind" in top:
        try:
            kind = GeneratorKind(top["trace_kind"])
        except ValueError:
            choices = ", ".join(k.value for k in GeneratorKind)
            raise ConfigError(f"unknown trace_kind {top['trace_kind']!r}; choose from {choices}") from None
        unknown = set(trace_params) - generator_params(kind)
        if unknown:
            raise ConfigError(f"unknown {kind.value} parameters: {', '.join('trace.' + k for k in sorted(unknown))}")
        length = _int("trace_length", top.get("trace_length", DEFAULT_TRACE_LENGTH))
        if length <= 0:
            raise ConfigError("trace_length must be positive")
        cfg.trace_spec = TraceSpec(kind, length, cfg.seed, trace_params)
    elif trace_params or "trace_length" in top:
        raise ConfigError("trace.<param> and trace_length need trace_kind")
    if require_trace and cfg.trace_file is None and cfg.trace_spec is None:
        raise ConfigError("no trace source: set trace_file or trace_kind")

    block_size = _int("block_size", top.get("block_size", 64))
    try:
        defaults = HierarchyConfig()
        levels = {}
        for lvl in _CACHE_LEVELS:
            base = getattr(defaults, lvl)
            levels[lvl] = CacheConfig(
                cache_kw[lvl].get("capacity", base.capacity),
                cache_kw[lvl].get("associativity", base.associativity),
                cache_kw[lvl].get("hit_latency", base.hit_latency),
                block_size,
            )
        scalars = {k: _int(k, top[k]) for k in ("memory_latency", "pq_depth", "drain_rate", "max_inflight") if k in top}
        cfg.hierarchy = HierarchyConfig(**levels, **scalars)
        gaze_kw.setdefault("block_size", block_size)
        if "region_size" in gaze_kw and "stage1_head" not in gaze_kw:
            gaze_kw["stage1_head"] = _int("gaze.region_size", gaze_kw["region_size"]) // block_size // 4
        cfg.gaze = GazeConfig.from_dict(gaze_kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    if "prefetcher" in top:
        cfg.prefetcher = str(top["prefetcher"])
    if "prefetchers" in top:
        cfg.prefetchers = _name_list("prefetchers", top["prefetchers"])
    fmt = top.get("format", cfg.output_format)
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    cfg.output_format = fmt
    try:
        cfg.trace_format = TraceFormat(top.get("trace_format", "text"))
    except ValueError:
        raise ConfigError("trace_format must be text or binary") from None
    return cfg


def cmd_run(cfg: ExperimentConfig) -> RunReport:
    trace = cfg.load_trace()
    base = simulate(trace, "none", cfg.hierarchy, cfg.gaze)
    try:
        report = simulate(trace, cfg.prefetcher, cfg.hierarchy, cfg.gaze, baseline_cycles=base.cycles)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report.config = cfg.echo()
    return report


def cmd_gen(cfg: ExperimentConfig) -> bytes:
    if cfg.trace_spec is None:
        raise ConfigError("gen needs trace_kind")
    return write_trace(generate(cfg.trace_spec), cfg.trace_format)


def cmd_storage(cfg: ExperimentConfig) -> str:
    return storage_json(cfg.gaze)


def cmd_compare(cfg: ExperimentConfig) -> List[RunReport]:
    try:
        return compare(cfg.load_trace(), cfg.prefetchers, cfg.hierarchy, cfg.gaze)
    except ValueError as exc:
        if isinstance(exc, TraceError):
            raise
        raise ConfigError(str(exc)) from None


def _sweep_point(args) -> Dict[str, Any]:
    label, trace, prefetcher, hierarchy, gaze, baseline = args
    report = simulate(trace, prefetcher, hierarchy, gaze, baseline_cycles=baseline)
    row = report.csv_row()
    row["point"] = label
    return row


def sweep_points(cfg: ExperimentConfig, dimension: str, values: Optional[Sequence[str]] = None):
    """(label, prefetcher, gaze config) for every point of a sweep."""
    if dimension == "n-access":
        ns = [int(v) for v in values] if values else [1, 2, 3, 4]
        return [(str(n), f"n-access:{n}", cfg.gaze) for n in ns]
    if dimension == "region-size":
        sizes = [int(v) for v in values] if values else [1024, 2048, 4096, 8192]
        points = []
        for size in sizes:
            try:
                gaze = dataclasses.replace(cfg.gaze, region_size=size, stage1_head=size // cfg.gaze.block_size // 4)
            except ValueError as exc:
                raise ConfigError(f"region size {size}: {exc}") from None
            points.append((str(size), cfg.prefetcher, gaze))
        return points
    if dimension == "prefetcher":
        names = list(values) if values else cfg.prefetchers
        return [(name, name, cfg.gaze) for name in names]
    raise ConfigError(f"unknown sweep dimension {dimension!r}; choose from {', '.join(SWEEP_DIMENSIONS)}")


def cmd_sweep(cfg: ExperimentConfig, dimension: str, values: Optional[Sequence[str]] = None,
              jobs: int = 1) -> List[Dict[str, Any]]:
    try:
        points = sweep_points(cfg, dimension, values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    trace = cfg.load_trace()
    baseline = simulate(trace, "none", cfg.hierarchy, cfg.gaze).cycles
    tasks = [(label, trace, pf, cfg.hierarchy, gaze, baseline) for label, pf, gaze in points]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(_sweep_point, tasks))
        return [_sweep_point(t) for t in tasks]
    except ValueError as exc:
        if isinstance(exc, TraceError):
            raise
        raise ConfigError(str(exc)) from None


def render_reports(reports: List[RunReport], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
    rows = [r.csv_row() for r in reports]
    if fmt == "csv":
        return to_csv(rows, RunReport.CSV_COLUMNS)
    return text_table(rows, RunReport.CSV_COLUMNS)


def render_rows(rows: List[Dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return to_csv(rows, SWEEP_COLUMNS)
    return text_table(rows, SWEEP_COLUMNS)


def render_storage(cfg: ExperimentConfig, fmt: str) -> str:
    if fmt == "json":
        return cmd_storage(cfg) + "\n"
    report = storage_report(cfg.gaze)
    rows = [{"table": name, **info} for name, info in report["tables"].items()]
    rows.append({"table": "DC", "bytes": None, "bits_per_entry": report["dc_bits"], "entries": 1})
    columns = ("table", "entries", "bits_per_entry", "bytes")
    body = to_csv(rows, columns) if fmt == "csv" else text_table(rows, columns)
    if fmt == "text":
        body += f"total {report['total_bytes']} bytes ({format_value(report['total_kib'])} KiB)\n"
    return body


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazesim", description="Trace-driven spatial prefetcher simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, default_format: Optional[str]):
        p.add_argument("-c", "--config", help="flat YAML experiment description")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("-o", "--output", help="output file (default: stdout or $%s)" % OUTPUT_DIR_ENV)
        if default_format is not None:
            p.add_argument("-f", "--format", choices=FORMATS, help=f"output format (default {default_format})")
        p.set_defaults(default_format=default_format)

    common(sub.add_parser("run", help="simulate one prefetcher"), "json")
    common(sub.add_parser("gen", help="write a synthetic trace"), None)
    sweep = sub.add_parser("sweep", help="one result row per sweep point")
    common(sweep, "csv")
    sweep.add_argument("--dim", required=True, choices=SWEEP_DIMENSIONS)
    sweep.add_argument("--values", help="comma-separated sweep points (default depends on --dim)")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common(sub.add_parser("storage", help="Gaze storage budget"), "json")
    cmp = sub.add_parser("compare", help="several prefetchers against a null baseline")
    common(cmp, "text")
    cmp.add_argument("--prefetchers", help="comma-separated prefetcher names")
    return parser


def _output_path(args, suffix: str) -> Optional[Path]:
    if args.output:
        return Path(args.output)
    out_dir = os.environ.get(OUTPUT_DIR_ENV)
    if out_dir:
        return Path(out_dir) / f"{args.command}.{suffix}"
    return None


def _emit(args, payload, suffix: str) -> None:
    path = _output_path(args, suffix)
    if path is None:
        if isinstance(payload, bytes):
            sys.stdout.buffer.write(payload)
            sys.stdout.flush()
        else:
            sys.stdout.write(payload)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, bytes):
        path.write_bytes(payload)
    else:
        path.write_text(payload)


def run_command(args) -> None:
    raw = load_config_file(args.config)
    for item in args.overrides:
        key, value = parse_override(item)
        raw[key] = value
    if getattr(args, "format", None):
        raw["format"] = args.format
    elif args.default_format and "format" not in raw:
        raw["format"] = args.default_format
    if getattr(args, "prefetchers", None):
        raw["prefetchers"] = args.prefetchers
    cfg = build_config(raw, require_trace=args.command not in ("storage", "gen"))
    fmt = cfg.output_format
    suffix = "txt" if fmt == "text" else fmt

    if args.command == "run":
        report = cmd_run(cfg)
        if fmt == "json":
            text = report.to_json() + "\n"
        elif fmt == "csv":
            text = to_csv([report.csv_row()], RunReport.CSV_COLUMNS)
        else:
            text = report.to_text()
        _emit(args, text, suffix)
    elif args.command == "gen":
        _emit(args, cmd_gen(cfg), "bin" if cfg.trace_format is TraceFormat.BINARY else "trace")
    elif args.command == "sweep":
        values = [v.strip() for v in args.values.split(",") if v.strip()] if args.values else None
        rows = cmd_sweep(cfg, args.dim, values, jobs=max(1, args.jobs))
        _emit(args, render_rows(rows, fmt), suffix)
    elif args.command == "storage":
        _emit(args, render_storage(cfg, fmt), suffix)
    elif args.command == "compare":
        _emit(args, render_reports(cmd_compare(cfg), fmt), suffix)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        run_command(args)
    except (ConfigError, TraceError, ValueError) as exc:
        print(f"gazesim: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except OSError as exc:
        print(f"gazesim: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
