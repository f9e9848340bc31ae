"""``geope`` command-line front end.

Commands: ``verify``, ``table``, ``decay``, ``attn``, ``bench``. Settings come
from flags and, optionally, a ``key=value`` config file (``--config``); flags
win. Exit codes: 0 success, 1 property failure, 2 configuration error, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .attention import (
    OPERATOR_MODE,
    PE_MODES,
    AttentionConfig,
    attention_scores,
    decay_profile,
    encode_qk,
    synthetic_qk,
)
from .errors import GeoPEError
from .io import csv_text, json_text, records
from .linear import displacement_table
from .operators import PhaseSchedule, grid_operators

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("verify", "table", "decay", "attn", "bench")
FORMAT_VERSION = 1
NORMALIZATION = "per query: sum_k weight * euclidean distance; averaged over queries, then over heads"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str = "verify"
    dim: int = 48
    base: float = 100.0
    grid: tuple = (14, 14)
    mode: str = "geope2d"
    index_convention: str = "zero"
    exp_sign: str = "neg"
    seed: int = 0
    draws: int = 200
    dmax: int = 32
    offset: tuple = (0, 0)
    heads: int = 12
    reps: int = 20
    out: Optional[str] = None
    format: str = "csv"

    @property
    def schedule(self) -> PhaseSchedule:
        return PhaseSchedule(
            self.dim,
            self.base,
            self.index_convention,
            "negative" if self.exp_sign == "neg" else "positive",
        )

    def modes(self) -> list[str]:
        if self.mode == "all":
            return list(PE_MODES)
        return [m.strip() for m in self.mode.split(",")]


# key -> parser for a config-file or flag string value
def _parse_grid(text: str) -> tuple:
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like HxW or DxHxW, got {text!r}") from None
    if len(dims) not in (2, 3):
        raise ConfigError(f"grid must look like HxW or DxHxW, got {text!r}")
    return dims


def _parse_offset(text: str) -> tuple:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"offset must look like dh,dw, got {text!r}") from None
    if len(parts) != 2:
        raise ConfigError(f"offset must look like dh,dw, got {text!r}")
    return parts


def _parse_convention(text: str) -> str:
    return {"zero": "zero", "one": "one", "zero_based": "zero", "one_based": "one"}.get(text, text)


def _parse_sign(text: str) -> str:
    return {"pos": "pos", "neg": "neg", "positive": "pos", "negative": "neg"}.get(text, text)


PARSERS = {
    "dim": int,
    "base": float,
    "grid": _parse_grid,
    "mode": str,
    "index_convention": _parse_convention,
    "exp_sign": _parse_sign,
    "seed": int,
    "draws": int,
    "dmax": int,
    "offset": _parse_offset,
    "heads": int,
    "reps": int,
    "out": str,
    "format": str,
}


def _convert(key: str, value: str):
    try:
        return PARSERS[key](value)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


def validate(cfg: RunConfig) -> RunConfig:
    """Check every numeric and enum setting before any work starts."""
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg.format!r}")
    if cfg.index_convention not in ("zero", "one"):
        raise ConfigError(f"index convention must be zero or one, got {cfg.index_convention!r}")
    if cfg.exp_sign not in ("pos", "neg"):
        raise ConfigError(f"exp sign must be pos or neg, got {cfg.exp_sign!r}")
    if not (math.isfinite(cfg.base) and cfg.base > 1.0):
        raise ConfigError(f"base must be a finite number > 1, got {cfg.base}")
    if cfg.dim < 2:
        raise ConfigError(f"dim must be >= 2, got {cfg.dim}")
    if min(cfg.grid) < 1:
        raise ConfigError(f"grid sizes must be >= 1, got {cfg.grid}")
    if cfg.heads < 1:
        raise ConfigError(f"heads must be >= 1, got {cfg.heads}")
    if cfg.draws < 1:
        raise ConfigError(f"draws must be >= 1, got {cfg.draws}")
    if cfg.dmax < 0:
        raise ConfigError(f"dmax must be >= 0, got {cfg.dmax}")
    if cfg.reps < 20:
        raise ConfigError(f"reps must be >= 20, got {cfg.reps}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {cfg.seed}")
    modes = cfg.modes()
    for mode in modes:
        if mode not in PE_MODES:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(PE_MODES)}")
    if cfg.command in ("verify", "table", "attn") and len(modes) != 1:
        raise ConfigError(f"{cfg.command} takes a single mode")
    for mode in modes:
        if mode == "none":
            continue
        size = 2 if OPERATOR_MODE[mode] == "one_d" else 3
        if cfg.dim % size:
            raise ConfigError(f"dim {cfg.dim} is not divisible by {size}, required by mode {mode}")
    if cfg.command == "decay" and cfg.dim % 3:
        raise ConfigError(f"decay needs dim divisible by 3, got {cfg.dim}")
    if cfg.command == "table" and modes[0] not in ("geope2d", "geope3d"):
        raise ConfigError("table supports modes geope2d and geope3d")
    if cfg.command == "attn" and cfg.out is None:
        raise ConfigError("attn needs --out DIR")
    if cfg.command == "attn" and modes[0] == "lingeope2d" and len(cfg.grid) == 3 and cfg.grid[0] != 1:
        raise ConfigError("lingeope2d needs a 2D grid")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geope", description="GeoPE positional-encoding analysis tools.")
    parser.add_argument("--version", action="version", version=f"geope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("verify", "run the seeded property suite"),
        ("table", "tabulate operator quaternions for every position and block"),
        ("decay", "mean |score| against displacement magnitude"),
        ("attn", "run attention on a synthetic grid and write trace/metric files"),
        ("bench", "time encode+score per positional mode"),
    ):
        p = sub.add_parser(name, help=text, argument_default=argparse.SUPPRESS)
        p.add_argument("--dim", help="head dimension")
        p.add_argument("--base", help="frequency base lambda")
        p.add_argument("--grid", help="HxW or DxHxW")
        p.add_argument("--mode", help=f"one of {', '.join(PE_MODES)} (bench: comma list or 'all')")
        p.add_argument("--index-convention", dest="index_convention", help="zero|one")
        p.add_argument("--exp-sign", dest="exp_sign", help="pos|neg")
        p.add_argument("--seed")
        p.add_argument("--draws", help="feature draws for decay")
        p.add_argument("--dmax", help="largest distance for decay")
        p.add_argument("--offset", help="grid translation dh,dw")
        p.add_argument("--heads")
        p.add_argument("--reps", help="timed repetitions for bench (>= 20)")
        p.add_argument("--out", help="output file (attn: directory)")
        p.add_argument("--format", help="csv|json")
        p.add_argument("--config", help="key=value config file")
    return parser


def resolve_config(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    values = read_config_file(args.pop("config")) if "config" in args else {}
    for key, value in args.items():
        values[key] = _convert(key, value)
    cfg = RunConfig(command=command)
    if command == "bench" and "mode" not in values:
        values["mode"] = "all"
    return validate(replace(cfg, **values))


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {"tool": "geope", "version": __version__, "format_version": FORMAT_VERSION, "rng": "numpy PCG64"}
    meta["config"] = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "out"}
    meta.update(extra)
    return meta


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out is None:
        sys.stdout.write(text)
        return
    Path(cfg.out).write_text(text)


def _table_output(cfg: RunConfig, header, rows, name: str, **meta) -> str:
    if cfg.format == "json":
        return json_text(_meta(cfg, **meta), **{name: records(header, rows)})
    return csv_text(header, rows)


# -- commands -------------------------------------------------------------------


def cmd_verify(cfg: RunConfig):
    """Run every property; returns ``(results, text)``."""
    from .verify import run_checks

    results = run_checks(cfg.seed, cfg.schedule)
    header = ("property", "samples", "max_error", "tolerance", "comparison", "passed")
    rows = [(r.name, r.samples, r.max_error, r.tolerance, r.comparison, int(r.passed)) for r in results]
    return results, _table_output(cfg, header, rows, "properties")


def table_rows(cfg: RunConfig) -> tuple[tuple, list]:
    mode = cfg.modes()[0]
    ops = grid_operators(cfg.grid, cfg.schedule, OPERATOR_MODE[mode])
    indices = list(cfg.schedule.index_range(OPERATOR_MODE[mode]))
    rows = []
    if mode == "geope2d":
        header = ("mode", "p_h", "p_w", "i", "theta_h", "theta_w", "qw", "qx", "qy", "qz")
        for t, (_, ph, pw) in enumerate(ops.positions):
            for b, i in enumerate(indices):
                _, th, tw = ops.phases[t, b]
                rows.append(("two_d", int(ph), int(pw), i, th, tw, *ops.quaternions[t, b]))
    else:
        header = ("mode", "p_d", "p_h", "p_w", "i", "theta_d", "theta_h", "theta_w", "qw", "qx", "qy", "qz")
        for t, (pd, ph, pw) in enumerate(ops.positions):
            for b, i in enumerate(indices):
                rows.append(("three_d", int(pd), int(ph), int(pw), i, *ops.phases[t, b], *ops.quaternions[t, b]))
    return header, rows


def cmd_table(cfg: RunConfig) -> str:
    header, rows = table_rows(cfg)
    return _table_output(cfg, header, rows, "operators")


def cmd_decay(cfg: RunConfig) -> str:
    rows = decay_profile(cfg.schedule, range(cfg.dmax + 1), cfg.draws, cfg.seed)
    header = ("distance", "mean_abs_score", "std_abs_score")
    return _table_output(cfg, header, rows, "decay", pairing="k_i = q_i, unit sub-vectors")


def _attention_config(cfg: RunConfig, mode: str) -> AttentionConfig:
    offset = (0,) + cfg.offset if len(cfg.grid) == 3 else cfg.offset
    return AttentionConfig(cfg.heads, cfg.dim, cfg.grid, mode, cfg.schedule, cfg.seed, "f64", offset)


def cmd_attn(cfg: RunConfig) -> dict:
    """Run the attention engine and return ``{filename: text}``."""
    acfg = _attention_config(cfg, cfg.modes()[0])
    q, k = synthetic_qk(acfg)
    trace = attention_scores(*encode_qk(q, k, acfg), acfg)
    heads, tokens = trace.weights.shape[0], trace.weights.shape[1]
    h_idx, q_idx, k_idx = np.meshgrid(np.arange(heads), np.arange(tokens), np.arange(tokens), indexing="ij")
    trace_header = ("head", "query_index", "key_index", "weight")
    trace_rows = zip(h_idx.ravel().tolist(), q_idx.ravel().tolist(), k_idx.ravel().tolist(), trace.weights.ravel().tolist())
    metric_header = ("head", "mean_attention_distance")
    metric_rows = [(h, float(v)) for h, v in enumerate(trace.distance_per_head)]
    meta = _meta(cfg, tokens=tokens, mean_attention_distance=trace.mean_distance, distance_normalization=NORMALIZATION)
    if cfg.format == "json":
        return {
            "attn.json": json_text(
                meta, trace=records(trace_header, trace_rows), metrics=records(metric_header, metric_rows)
            )
        }
    return {
        "trace.csv": csv_text(trace_header, trace_rows),
        "metrics.csv": csv_text(metric_header, metric_rows),
        "meta.json": json_text(meta),
    }


def cmd_bench(cfg: RunConfig, warmups: int = 5) -> str:
    header = ("mode", "reps", "min_ms", "median_ms", "max_ms", "cache_entries", "cache_bytes")
    rows = []
    for mode in cfg.modes():
        acfg = _attention_config(cfg, mode)
        q, k = synthetic_qk(acfg)
        timings = []
        for rep in range(warmups + cfg.reps):
            start = time.perf_counter()
            attention_scores(*encode_qk(q, k, acfg), acfg)
            if rep >= warmups:
                timings.append(1e3 * (time.perf_counter() - start))
        entries = nbytes = 0
        if mode.startswith("lingeope"):
            table = displacement_table(acfg.grid[-2:], acfg.schedule)
            entries, nbytes = len(table), table.nbytes
        rows.append((mode, cfg.reps, min(timings), statistics.median(timings), max(timings), entries, nbytes))
    return _table_output(cfg, header, rows, "bench")


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"geope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK

    try:
        if cfg.command == "verify":
            results, text = cmd_verify(cfg)
            _emit(cfg, text)
            failed = [r.name for r in results if not r.passed]
            for r in results:
                status = "PASS" if r.passed else "FAIL"
                print(f"{status} {r.name}: {r.max_error:.3e} {r.comparison} {r.tolerance:.0e}", file=sys.stderr)
            return EXIT_FAIL if failed else EXIT_OK
        if cfg.command == "table":
            _emit(cfg, cmd_table(cfg))
        elif cfg.command == "decay":
            _emit(cfg, cmd_decay(cfg))
        elif cfg.command == "bench":
            _emit(cfg, cmd_bench(cfg))
        elif cfg.command == "attn":
            files = cmd_attn(cfg)
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                (out / name).write_text(text)
    except GeoPEError as exc:
        print(f"geope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"geope: I/O error: {exc.filename or cfg.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
