"""Command-line entry point.

Result records (``compute``) carry the fields
``quantity, body, indices, permutation, mean, std_error, samples, seed, wall_time_ms``;
CSV output uses exactly these columns with nested values JSON-encoded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import functional as fn
from . import harness
from .bodies import GeometryError, body_from_dict
from .estimate import DEFAULT_SAMPLES, Estimate, EstimationError
from .quermass import (
    Permutation,
    example2_A,
    phi_full,
    phi_omega,
    phi_r,
    psi_full,
    psi_omega,
    psi_r,
)
from .sampling import IndexSeq

QUANTITIES = {
    "psi_r": "body+indices",
    "phi_r": "body+indices",
    "psi_full": "body",
    "phi_full": "body",
    "psi_omega": "body+permutation",
    "phi_omega": "body+permutation",
    "functional_i": "function+indices",
    "dpp_ratio": "function+indices",
    "phi_r_function": "function+indices",
    "example2_a": "diag",
}
BODY_TYPES = ("ball", "ellipsoid", "cube", "polytope_v", "polytope_h")
FUNCTION_TYPES = ("gaussian", "level_stack")
RESULT_COLUMNS = ("quantity", "body", "indices", "permutation", "mean", "std_error", "samples", "seed", "wall_time_ms")
REPRODUCE = {
    "example1": ["example1-4-over-pi"],
    "example2": ["example2-deformed-cube"],
    "busemann-straus": ["busemann-straus-cube", "busemann-straus-ellipsoid"],
    "santalo-pair": ["santalo-pair", "santalo-reverse-ratio"],
}


class ConfigError(Exception):
    """Invalid command-line configuration (exit code 2)."""


@dataclass
class Config:
    command: str
    quantity: str | None = None
    body: Any = None
    function: Any = None
    indices: IndexSeq | None = None
    permutation: Permutation | None = None
    diag: tuple[float, float, float] | None = None
    checks: list[str] = field(default_factory=list)
    samples: int | None = None
    seed: int = 0
    threads: int | None = None
    format: str = "text"
    output: str | None = None
    timing: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
    common.add_argument("--threads", type=int,
                        help="worker threads (default: $FLAGQUER_THREADS, else logical cores); "
                             "results do not depend on this value")
    common.add_argument("--format", choices=("text", "json", "csv"), default="text")
    common.add_argument("--output", help="write the formatted result to this file instead of stdout")

    p = _Parser(prog="flagquer", description="Monte Carlo flag quermassintegrals of convex bodies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compute", parents=[common], help="estimate one quantity",
                       epilog="CSV columns: " + ",".join(RESULT_COLUMNS))
    c.add_argument("--quantity", required=True, choices=sorted(QUANTITIES))
    c.add_argument("--body", help="body as inline JSON or a path to a JSON file")
    c.add_argument("--function", help="test function as inline JSON or a path to a JSON file")
    c.add_argument("--indices", help="comma-separated index sequence, e.g. 1,2")
    c.add_argument("--permutation", help="comma-separated permutation values, e.g. 2,1,3")
    c.add_argument("--diag", help="three positive numbers with product 1 (example2_a)")

    v = sub.add_parser("verify", parents=[common], help="run verification checks",
                       epilog="CSV columns: " + ",".join(harness.CSV_COLUMNS))
    v.add_argument("checks", nargs="*", default=["all"], help="check names, or 'all'")
    v.add_argument("--timing", action="store_true", help="include per-check runtime in JSON output")

    r = sub.add_parser("reproduce", parents=[common], help="rerun the checks behind a worked example")
    r.add_argument("target", choices=sorted(REPRODUCE))

    sub.add_parser("list", parents=[common], help="list checks, body types and quantities")
    return p


def _load_json(text: str, flag: str):
    path = Path(text)
    if not text.lstrip().startswith(("{", "[")) and path.is_file():
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{flag}: malformed JSON ({exc.msg} at position {exc.pos})") from None


def _ints(text: str, flag: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated integers, got {text!r}") from None


def parse_args(argv: Sequence[str] | None = None) -> Config:
    """Parse and validate a command line; raises :class:`ConfigError` naming the offending flag."""
    ns = _build_parser().parse_args(argv)
    cfg = Config(command=ns.command, samples=ns.samples, seed=ns.seed, threads=ns.threads,
                 format=ns.format, output=ns.output)
    if ns.samples is not None and ns.samples < 2:
        raise ConfigError("--samples: need at least 2 samples")
    if ns.threads is not None and ns.threads < 1:
        raise ConfigError("--threads: must be at least 1")
    if ns.command == "verify":
        cfg.timing = ns.timing
        cfg.checks = harness.names() if ns.checks == ["all"] else ns.checks
        unknown = [c for c in cfg.checks if c not in harness.REGISTRY]
        if unknown:
            raise ConfigError(f"verify: unknown check(s) {', '.join(unknown)}")
    elif ns.command == "reproduce":
        cfg.checks = REPRODUCE[ns.target]
    elif ns.command == "compute":
        _parse_compute(ns, cfg)
    return cfg


def _parse_compute(ns, cfg: Config):
    cfg.quantity = ns.quantity
    needs = QUANTITIES[ns.quantity]
    n = None
    if "body" in needs:
        if ns.body is None:
            raise ConfigError(f"--body is required for {ns.quantity}")
        try:
            cfg.body = body_from_dict(_load_json(ns.body, "--body"))
        except GeometryError as exc:
            raise ConfigError(f"--body: {exc}") from None
        n = cfg.body.n
    if "function" in needs:
        if ns.function is None:
            raise ConfigError(f"--function is required for {ns.quantity}")
        try:
            cfg.function = fn.function_from_dict(_load_json(ns.function, "--function"))
        except GeometryError as exc:
            raise ConfigError(f"--function: {exc}") from None
        n = cfg.function.n
    if "indices" in needs:
        if ns.indices is None:
            raise ConfigError(f"--indices is required for {ns.quantity}")
        try:
            cfg.indices = IndexSeq(n, tuple(_ints(ns.indices, "--indices")))
        except ValueError as exc:
            raise ConfigError(f"--indices: {exc}") from None
    if "permutation" in needs:
        if ns.permutation is None:
            raise ConfigError(f"--permutation is required for {ns.quantity}")
        try:
            cfg.permutation = Permutation(tuple(_ints(ns.permutation, "--permutation")))
        except ValueError as exc:
            raise ConfigError(f"--permutation: {exc}") from None
        if cfg.permutation.n != n:
            raise ConfigError(f"--permutation: size {cfg.permutation.n} does not match body dimension {n}")
    if needs == "diag":
        text = ns.diag or "1,1,1"
        try:
            d = tuple(float(t) for t in text.split(","))
        except ValueError:
            raise ConfigError(f"--diag: expected three numbers, got {text!r}") from None
        if len(d) != 3:
            raise ConfigError("--diag: expected three numbers")
        cfg.diag = d


def compute(cfg: Config) -> tuple[Estimate, dict[str, Any]]:
    """Run a ``compute`` configuration; returns the estimate and its result record."""
    samples = DEFAULT_SAMPLES if cfg.samples is None else cfg.samples
    args = (samples, cfg.seed, cfg.threads)
    q = cfg.quantity
    extra: dict[str, Any] = {}
    if q in ("psi_r", "phi_r"):
        est = (psi_r if q == "psi_r" else phi_r)(cfg.body, cfg.indices, *args)
    elif q in ("psi_full", "phi_full"):
        est = (psi_full if q == "psi_full" else phi_full)(cfg.body, *args)
    elif q in ("psi_omega", "phi_omega"):
        est = (psi_omega if q == "psi_omega" else phi_omega)(cfg.body, cfg.permutation, *args)
    elif q == "functional_i":
        est = fn.functional_I(cfg.function, cfg.indices, *args)
    elif q == "dpp_ratio":
        rep = fn.dpp_flag_ratio(cfg.function, cfg.indices, *args)
        est = rep.estimate
        extra = {"bound": rep.bound, "ratio": rep.ratio}
    elif q == "phi_r_function":
        est = fn.phi_r_of_function(cfg.function, cfg.indices, *args)
    else:
        est = example2_A(*cfg.diag, *args)
    return est, {**result_record(est, q), **extra}


def result_record(est: Estimate, quantity: str | None = None) -> dict[str, Any]:
    p = est.params
    return {
        "quantity": quantity or p.get("quantity", est.quantity),
        "body": p.get("body", p.get("function", {"d": p["d"]} if "d" in p else None)),
        "indices": p.get("indices"),
        "permutation": p.get("permutation"),
        "mean": est.mean,
        "std_error": est.std_error,
        "samples": est.samples,
        "seed": est.seed,
        "wall_time_ms": p.get("wall_time_ms"),
    }


def format_record(record: dict[str, Any], est: Estimate, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(record, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        w.writerow([json.dumps(record[k]) if isinstance(record[k], (dict, list)) else
                    ("" if record[k] is None else record[k]) for k in RESULT_COLUMNS])
        return buf.getvalue()
    lines = [f"{record['quantity']} = {est.mean:.10g} +/- {est.std_error:.3g} "
             f"(samples={est.samples}, seed={est.seed})"]
    if "bound" in record:
        lines.append(f"bound = {record['bound']:.10g}  ratio = {record['ratio']:.6g} "
                     f"+/- {est.std_error / record['bound']:.3g}")
    if est.transform_note:
        lines.append(f"note: {est.transform_note}")
    if est.unstable:
        lines.append("warning: heavy-tailed statistic; the standard error may be unreliable")
    return "\n".join(lines) + "\n"


def _list_text() -> str:
    lines = ["checks:"]
    for spec in harness.REGISTRY.values():
        lines.append(f"  {spec.name:34s} #{spec.criterion:<2d} {spec.kind:12s} {spec.claim}")
    lines.append("body types: " + ", ".join(BODY_TYPES))
    lines.append("function types: " + ", ".join(FUNCTION_TYPES))
    lines.append("quantities: " + ", ".join(QUANTITIES))
    lines.append("reproduce targets: " + ", ".join(REPRODUCE))
    return "\n".join(lines) + "\n"


def run(cfg: Config) -> tuple[int, str]:
    """Execute a validated configuration; returns ``(exit code, output text)``."""
    if cfg.command == "list":
        if cfg.format == "json":
            data = {
                "checks": [{"name": s.name, "criterion": s.criterion, "kind": s.kind, "claim": s.claim}
                           for s in harness.REGISTRY.values()],
                "body_types": list(BODY_TYPES),
                "function_types": list(FUNCTION_TYPES),
                "quantities": list(QUANTITIES),
            }
            return 0, json.dumps(data, indent=2) + "\n"
        return 0, _list_text()
    if cfg.command == "compute":
        est, record = compute(cfg)
        return 0, format_record(record, est, cfg.format)
    result = harness.run_suite(cfg.checks, seed=cfg.seed, samples=cfg.samples, threads=cfg.threads)
    if cfg.format == "json":
        text = harness.format_json(result, timing=cfg.timing)
    elif cfg.format == "csv":
        text = harness.format_csv(result)
    else:
        text = harness.format_text(result)
    return result.exit_code, text


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_args(argv)
        code, text = run(cfg)
    except ConfigError as exc:
        print(f"flagquer: error: {exc}", file=sys.stderr)
        return 2
    except (GeometryError, EstimationError, ValueError) as exc:
        print(f"flagquer: error: {exc}", file=sys.stderr)
        return 2
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
