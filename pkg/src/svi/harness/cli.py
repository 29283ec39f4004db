"""``svi <command> --config FILE [--seed N] [--workers N] [--out DIR]``.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
import traceback

import numpy as np

from .. import __version__
from .config import COMMANDS, ConfigError, load_config
from .studies import STUDIES

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("svi")


def _resolve_seed(cfg, cli_seed, environ):
    """``--seed`` beats ``SVI_SEED``, which beats the config value."""
    if cli_seed is not None:
        return cli_seed, "cli"
    env = environ.get("SVI_SEED")
    if env not in (None, ""):
        try:
            return int(env), "env"
        except ValueError:
            raise ConfigError([f"SVI_SEED: {env!r} is not an integer"]) from None
    return cfg.mc["seed"], "config"


def run(cfg, seed_source="config"):
    """Execute ``cfg.command``; returns ``(exit_code, provenance)``.

    Artifacts and ``provenance.json`` go to ``cfg.output['directory']``.
    """
    out = cfg.output["directory"]
    os.makedirs(out, exist_ok=True)
    prov = {
        "command": cfg.command,
        "config": cfg.as_dict(),
        "seed": cfg.mc["seed"],
        "seed_source": seed_source,
        "workers": cfg.mc["workers"],
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
    t0 = time.perf_counter()
    code = EXIT_RUNTIME
    result = None
    try:
        result = STUDIES[cfg.command](cfg, out)
        code = EXIT_PASS if result.passed else EXIT_FAIL
        prov["status"] = "pass" if result.passed else "fail"
    except ConfigError as exc:
        code = EXIT_CONFIG
        prov["status"] = "config-error"
        prov["errors"] = exc.errors
    except Exception as exc:  # noqa: BLE001 - any study failure becomes exit 3 with a record
        prov["status"] = "runtime-error"
        prov["errors"] = [f"{type(exc).__name__}: {exc}"]
        prov["traceback"] = traceback.format_exc()
    prov["wall_time_s"] = time.perf_counter() - t0
    written = sorted(os.path.basename(p) for p in (result.artifacts if result else []))
    if result is None:
        # whatever a failed study left behind is incomplete
        written = sorted(f for f in os.listdir(out) if f != "provenance.json")
    prov["artifacts"] = written
    prov["partial"] = result is None
    prov["verdicts"] = dict(result.verdicts) if result else {}
    prov["summary"] = dict(result.summary) if result else {}
    with open(os.path.join(out, "provenance.json"), "w", encoding="utf-8") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return code, prov


def build_parser():
    p = argparse.ArgumentParser(prog="svi", description="Simulation studies for stochastic variational inequalities.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides SVI_SEED and the config)")
    p.add_argument("--workers", type=int, default=None, help="worker threads for Monte Carlo chunks")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None, environ=None):
    args = build_parser().parse_args(argv)
    environ = os.environ if environ is None else environ
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError(["--workers: must be >= 1"])
        if args.seed is not None and args.seed < 0:
            raise ConfigError(["--seed: must be >= 0"])
        cfg = load_config(args.config)
        seed, source = _resolve_seed(cfg, args.seed, environ)
        cfg = cfg.with_overrides(command=args.command, seed=seed, workers=args.workers, out=args.out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, prov = run(cfg, source)
    for name, ok in prov["verdicts"].items():
        log.info("%-45s %s", name, "pass" if ok else "FAIL")
    for e in prov.get("errors", []):
        print(f"{prov['status']}: {e}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
