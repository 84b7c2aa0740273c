"""``verify <suite> --config <path> [--seed N] [--out DIR] [--samples N] [--half-qv-convention]``.

Runs one verification suite, writes ``<out>/<suite>.report.json`` plus sweep
CSVs, and exits 0 iff no check FAILed. INCONCLUSIVE checks are counted but
do not change the exit code.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .checks import FAIL, INCONCLUSIVE, PASS, SUITE_FUNCTIONS, SUITES, Check, SuiteConfig
from .io import write_sweep
from .simulator import InsufficientSamplesError

log = logging.getLogger("ouspde.verify")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_PRECONDITION = 0, 1, 2, 3, 4


@dataclass
class SuiteReport:
    suite: str
    checks: list
    environment: dict
    sweeps: dict
    timestamp: str

    @property
    def counts(self) -> dict:
        out = {PASS: 0, FAIL: 0, INCONCLUSIVE: 0}
        for c in self.checks:
            out[c.status] += 1
        return out

    @property
    def ok(self) -> bool:
        return self.counts[FAIL] == 0

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "counts": self.counts,
            "environment": self.environment,
            "checks": [c.to_dict() for c in self.checks],
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def run_suite(cfg: SuiteConfig) -> SuiteReport:
    """Run the configured suite and collect its checks."""
    checks, sweeps = SUITE_FUNCTIONS[cfg.suite](cfg)
    checks = [c for c in checks if isinstance(c, Check)]
    env = {
        "seed": cfg.seed,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": cfg.config_path,
        "samples": cfg.samples,
        "K": list(cfg.K),
        "t": list(cfg.t),
        "grid_points": cfg.grid_points,
        "half_qv_convention": cfg.half_qv_convention,
    }
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return SuiteReport(cfg.suite, checks, env, sweeps, stamp)


def write_report(report: SuiteReport, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.suite}.report.json"
    path.write_text(report.to_json())
    for name, (p, e, s) in report.sweeps.items():
        write_sweep(out / f"{report.suite}.{name}.csv", p, e, s)
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verify", description="Run a verification suite.")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: reports)")
    p.add_argument("--samples", type=int, help="Monte Carlo samples or paths")
    p.add_argument("--half-qv-convention", action="store_true",
                   help="noise covariance 2a instead of a")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "out": args.out, "samples": args.samples}
    if args.half_qv_convention:
        overrides["half_qv_convention"] = True
    try:
        cfg = SuiteConfig.from_file(args.suite, args.config, **overrides)
    except OSError as e:
        print(f"verify: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as e:
        print(f"verify: bad config: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_suite(cfg)
    except InsufficientSamplesError as e:
        print(f"verify: insufficient samples: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    path = write_report(report, cfg.out)
    for c in report.checks:
        print(c.line())
    n = report.counts
    print(f"{cfg.suite}: {n[PASS]} pass, {n[FAIL]} fail, {n[INCONCLUSIVE]} inconclusive -> {path}")
    return EXIT_OK if report.ok else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
