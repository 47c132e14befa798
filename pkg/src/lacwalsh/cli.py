"""Command-line entry point: ``lacwalsh --experiment NAME [options]``.

Exit status is 0 iff every configured check passed; 2 for configuration or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone

from .config import CONSTANT_DEFAULTS, EXPERIMENTS, MAX_CLI_RESOLUTION, ConfigError, RunConfig
from .runner import RunResult, run


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set {item!r}: expected C_NAME=VALUE")
        if name not in CONSTANT_DEFAULTS:
            raise ConfigError(f"--set {item!r}: unknown constant {name!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise ConfigError(f"--set {item!r}: {value!r} is not a number") from None
    return out


def _parse_range(text: str):
    lo, sep, hi = text.partition("..")
    if not sep:
        lo, sep, hi = text.partition(":")
    try:
        return [int(lo), int(hi)] if sep else [int(lo), int(lo)]
    except ValueError:
        raise ConfigError(f"--m-range {text!r}: expected LO..HI") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lacwalsh", description="Walsh phase-plane experiments for lacunary partial sums.")
    ap.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    ap.add_argument("--resolution", type=int, help=f"dyadic resolution K (default 10, max {MAX_CLI_RESOLUTION})")
    ap.add_argument("--lacunary-ratio", type=float, help="geometric sequence with this ratio")
    ap.add_argument("--lacunary-list", help="explicit comma-separated sequence")
    ap.add_argument("--m-range", help="family range LO..HI (default 2..10)")
    ap.add_argument("--trials", type=int, help="random trials per run (default 20)")
    ap.add_argument("--k-prime", type=int, help="fine resolution for antonov (default K+4)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, help="worker processes")
    ap.add_argument("--out", help="output path (default stdout)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--set", action="append", metavar="C_NAME=VALUE", help="override a constant")
    ap.add_argument("--certificate", help="certificate path (written by decompose, read by verify-certificate)")
    ap.add_argument("--function", help="JSON dyadic function for verify-certificate")
    return ap


def config_from_args(ns) -> RunConfig:
    fields = {
        "experiment": ns.experiment,
        "resolution": ns.resolution,
        "lacunary_ratio": ns.lacunary_ratio,
        "lacunary_list": [int(x) for x in ns.lacunary_list.split(",")] if ns.lacunary_list else None,
        "m_range": _parse_range(ns.m_range) if ns.m_range else None,
        "trials": ns.trials,
        "k_prime": ns.k_prime,
        "seed": ns.seed,
        "jobs": ns.jobs,
        "out": ns.out,
        "format": ns.format,
        "certificate": ns.certificate,
        "function": ns.function,
    }
    consts = _parse_set(ns.set)
    if ns.config:
        cfg = RunConfig.from_json_file(ns.config, **fields)
        if consts:
            cfg.constants = {**cfg.constants, **consts}
            cfg.__post_init__()
        return cfg
    data = {k: v for k, v in fields.items() if v is not None}
    if consts:
        data["constants"] = consts
    return RunConfig.from_mapping(data)


def input_hash(cfg: RunConfig) -> str:
    echo = cfg.echo()
    for key in ("out", "jobs", "format"):
        echo.pop(key, None)
    blob = json.dumps(echo, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def csv_text(columns, rows, stamp: str) -> str:
    buf = io.StringIO()
    buf.write(f"# generated {stamp}\n")
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def render(cfg: RunConfig, result: RunResult, stamp: str) -> dict:
    """Output path -> text.  The main table goes to ``out`` (or ``"-"``);
    extra tables to ``<stem>_<name><ext>`` next to it."""
    files = {}
    target = cfg.out or "-"
    if cfg.format == "json":
        env = {
            "generated": stamp,
            "config": cfg.echo(),
            "input_hash": input_hash(cfg),
            "passed": result.passed,
            "checks": result.checks,
            "tables": {name: rows for name, (_, rows) in result.tables.items()},
            "reports": result.reports,
        }
        files[target] = json.dumps(env, indent=2, sort_keys=True, default=str) + "\n"
    else:
        stem, ext = os.path.splitext(target)
        for name, (cols, rows) in result.tables.items():
            if name == "main":
                files[target] = csv_text(cols, rows, stamp)
            elif target != "-":
                files[f"{stem}_{name}{ext or '.csv'}"] = csv_text(cols, rows, stamp)
    if cfg.certificate and cfg.experiment == "decompose" and result.certificates:
        files[cfg.certificate] = json.dumps(result.certificates, indent=1) + "\n"
    return files


def write_outputs(files: dict) -> None:
    """Write every file or none: stage to temporaries, then rename."""
    staged, moved = [], []
    try:
        for path, text in files.items():
            if path == "-":
                continue
            d = os.path.dirname(os.path.abspath(path))
            os.makedirs(d, exist_ok=True)
            tmp = f"{path}.partial"
            with open(tmp, "w") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
            moved.append(path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        for path in moved:
            os.remove(path)
        raise
    if "-" in files:
        sys.stdout.write(files["-"])


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    write_outputs(render(cfg, result, stamp))
    for msg in result.messages:
        print(msg, file=sys.stderr)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
