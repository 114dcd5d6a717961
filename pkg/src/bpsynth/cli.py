"""Command line entry point: ``bps <verb> --config FILE [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Every verb that writes to an output directory also leaves an
``errors.json`` describing the outcome.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .agents import ForecastArchive
from .config import load_config
from .errors import BpsError, ConfigError, NumericalError
from .panel import load_panel, save_panel, synth_generate
from . import pipeline

log = logging.getLogger("bpsynth")

VERBS = ("fit-agents", "synthesize", "evaluate", "run", "synth-data")


def _parser():
    p = argparse.ArgumentParser(prog="bps", description="Dynamic Bayesian predictive synthesis.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", required=True, help="flat section.key=value config file")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--horizon", type=int, action="append",
                   help="restrict to this horizon (repeatable); default run.horizons")
    p.add_argument("--out-dir", help="override run.out_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.horizon:
        overrides["run.horizons"] = ",".join(str(h) for h in args.horizon)
    cfg = load_config(args.config, overrides)
    out = args.out_dir or cfg.resolve_path(cfg.out_dir)
    return cfg, out


def _panel(cfg):
    if not cfg.data_path:
        raise ConfigError("data.path is not set")
    panel = load_panel(cfg.resolve_path(cfg.data_path), cfg.transforms)
    unknown = set(cfg.roles_override) - set(panel.names)
    if unknown:
        raise ConfigError(f"roles given for unknown series {sorted(unknown)}")
    return panel


def _archive_dir(out):
    return os.path.join(out, "archive")


def stage_fit_agents(cfg, out, panel, gaps):
    archive, g = pipeline.fit_agents(panel, cfg)
    gaps.extend(g)
    if cfg.save_archive:
        archive.save(_archive_dir(out))
    return archive


def stage_synthesize(cfg, out, panel, archive, gaps):
    agents = [a.name for a in cfg.agents]
    kl = []
    failed = []
    for k in cfg.horizons:
        run = pipeline.sequential_run(panel, archive, cfg, k)
        gaps.extend(run.gaps)
        if not run.results:
            failed.append(k)
        kl.extend(pipeline.write_synthesis(run, out, panel.names, agents, archive, cfg,
                                           cfg.xcorr_dates))
    # the posterior side of each KL uses a Gaussian fit to the state draws
    pipeline.write_csv(os.path.join(out, "kl.csv"), ["horizon", "date", "agent", "kl", "method"],
                       [(*row, "gaussian_fit") for row in kl])
    if failed:
        raise NumericalError(f"every origin failed for horizon(s) {failed}; see gaps.csv")


def _load_archive(out):
    return ForecastArchive.load(_archive_dir(out))


def execute(verb, cfg, out):
    """Run one verb; returns the list of gap records."""
    gaps = []
    if verb == "synth-data":
        panel = synth_generate(cfg.synth_spec(), cfg.seed)
        path = cfg.resolve_path(cfg.data_path) if cfg.data_path else os.path.join(out, "panel.csv")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_panel(panel, path)
        log.info("wrote %s", path)
        return gaps
    os.makedirs(out, exist_ok=True)
    stage = "load-data"
    try:
        panel = _panel(cfg)
        if verb in ("fit-agents", "run"):
            stage = "fit-agents"
            archive = stage_fit_agents(cfg, out, panel, gaps)
        else:
            stage = "load-archive"
            archive = _load_archive(out)
        if verb in ("synthesize", "run"):
            stage = "synthesize"
            stage_synthesize(cfg, out, panel, archive, gaps)
        if verb in ("evaluate", "run"):
            stage = "evaluate"
            pipeline.evaluate(panel, archive, cfg, out)
    except Exception as exc:
        exc.stage = stage
        raise
    if verb != "evaluate":
        pipeline.write_gaps(os.path.join(out, "gaps.csv"), gaps)
    return gaps


def _exit_code(exc):
    if isinstance(exc, BpsError):
        return exc.exit_code
    if isinstance(exc, np.linalg.LinAlgError):
        return NumericalError.exit_code
    return 1


def _write_status(out, verb, code, exc=None, gaps=()):
    if out is None:
        return
    try:
        os.makedirs(out, exist_ok=True)
        body = {
            "verb": verb,
            "status": "ok" if code == 0 else "error",
            "exit_code": code,
            "errors": [] if exc is None else [{"stage": getattr(exc, "stage", verb),
                                               "type": type(exc).__name__, "message": str(exc)}],
            "gaps": [{"stage": s, "horizon": str(k), "origin_date": o, "reason": why}
                     for s, k, o, why in gaps],
        }
        with open(os.path.join(out, "errors.json"), "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError:
        log.exception("could not write errors.json")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out_dir
    try:
        cfg, out = _load(args)
        gaps = execute(args.verb, cfg, out)
    except (BpsError, np.linalg.LinAlgError) as exc:
        code = _exit_code(exc)
        log.error("%s failed: %s", args.verb, exc)
        print(f"error: {exc}", file=sys.stderr)
        _write_status(out, args.verb, code, exc)
        return code
    except Exception as exc:  # unexpected: still leave a machine-readable record
        log.exception("%s failed unexpectedly", args.verb)
        _write_status(out, args.verb, 1, exc)
        return 1
    if args.verb != "synth-data":
        _write_status(out, args.verb, 0, gaps=gaps)
    return 0


def cmd_run(config_path, seed=None, out_dir=None, horizons=None):
    """Programmatic ``bps run``; returns the exit code."""
    argv = ["run", "--config", str(config_path)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if out_dir is not None:
        argv += ["--out-dir", str(out_dir)]
    for h in horizons or ():
        argv += ["--horizon", str(h)]
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
